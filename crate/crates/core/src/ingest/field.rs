//! Field survey records: coordinates, photo ids, parameter classes, raw
//! measurements and corrections to cadastral attributes.

use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::cadastre::{csv_reader, RowError, RowProblem};
use super::subtypology_key;
use crate::domain::{
    Building, BuildingId, BuildingKind, Class, Coord, Project, ProjectState, RawFields, SurveyRecord, ViSource,
};
use crate::error::{Error, Result};
use crate::masters::TypeMasters;
use crate::risk::{compute_vi, normalize_vi};

/// Every column the field-data CSV understands, in report order.
pub const FIELD_COLUMNS: [&str; 36] = [
    "id",
    "x",
    "y",
    "photo",
    "observer",
    "date",
    "pared",
    "techo",
    "uso",
    "estado",
    "anio",
    "p1",
    "p2",
    "p3",
    "p4",
    "p5",
    "p6",
    "p7",
    "p8",
    "p9",
    "p10",
    "p11",
    "N",
    "At",
    "Ax",
    "Ay",
    "tk",
    "h",
    "Pm",
    "Ps",
    "b1",
    "b2",
    "porch_pct",
    "T_over_H",
    "deltaM_over_M_pct",
    "L_over_S",
];

/// Building addressed by a field record: an existing id or a building found
/// on site that the cadastre does not list (`"NEW"`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldTarget {
    Existing(BuildingId),
    New,
}

impl std::str::FromStr for FieldTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("new") {
            return Ok(FieldTarget::New);
        }
        s.parse::<u64>()
            .map(FieldTarget::Existing)
            .map_err(|_| Error::Invalid(format!("building id must be a number or NEW, got {s:?}")))
    }
}

impl Serialize for FieldTarget {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            FieldTarget::Existing(id) => s.serialize_u64(*id),
            FieldTarget::New => s.serialize_str("NEW"),
        }
    }
}

impl<'de> Deserialize<'de> for FieldTarget {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Id(u64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Id(id) => Ok(FieldTarget::Existing(id)),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CadastralCorrection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roof_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub construction_year: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRecord {
    pub id: FieldTarget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coord: Option<Coord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photo_id: Option<String>,
    /// Up to 11 entries, parameter 1 first; blanks are `null`.
    #[serde(default)]
    pub classes: Vec<Option<Class>>,
    #[serde(default)]
    pub raw: RawFields,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<NaiveDate>,
    #[serde(default)]
    pub correction: CadastralCorrection,
}

impl FieldRecord {
    pub fn new(id: FieldTarget) -> FieldRecord {
        FieldRecord {
            id,
            coord: None,
            photo_id: None,
            classes: Vec::new(),
            raw: RawFields::default(),
            observer_id: None,
            date: None,
            correction: CadastralCorrection::default(),
        }
    }

    /// The eleven classes when all are present, `None` when none are.
    fn complete_classes(&self) -> Result<Option<[Class; 11]>> {
        if self.classes.len() > 11 {
            return Err(Error::WrongArity(self.classes.len()));
        }
        let present: Vec<Class> = self.classes.iter().flatten().copied().collect();
        match present.len() {
            0 if self.raw.is_empty() => Ok(None),
            11 => Ok(Some(present.try_into().expect("eleven classes"))),
            n => Err(Error::IncompleteSurvey(n)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldOutcome {
    pub building_id: BuildingId,
    pub created: bool,
    pub surveyed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vi_norm: Option<f64>,
    pub subtypology_changed: bool,
}

fn apply_text(slot: &mut String, value: &Option<String>) -> bool {
    match value {
        Some(v) if v.trim() != slot.as_str() => {
            *slot = v.trim().to_string();
            true
        }
        _ => false,
    }
}

/// Applies one field record. Survey classes yield an index right away;
/// corrected cadastral types re-derive the subtypology key, and a changed key
/// marks the project stale.
pub fn ingest_field_data(project: &mut Project, masters: &TypeMasters, record: &FieldRecord) -> Result<FieldOutcome> {
    let state = project.state();
    if !matches!(state, ProjectState::FieldWork | ProjectState::UploadingResults) {
        return Err(Error::WrongState { op: "ingest_field_data", state });
    }
    let classes = record.complete_classes()?;
    record.raw.validate()?;
    if let Some(c) = record.coord {
        if !(c.x.is_finite() && c.y.is_finite()) {
            return Err(Error::Invalid("coordinates must be finite".into()));
        }
    }

    let (mut b, created) = match record.id {
        FieldTarget::Existing(id) => (project.building(id)?.clone(), false),
        FieldTarget::New => (Building::independent(project.next_building_id()), true),
    };

    if let Some(c) = record.coord {
        b.coord = Some(c);
    }
    if let Some(photo) = record.photo_id.as_ref().filter(|p| !p.trim().is_empty()) {
        b.photo_id = Some(photo.trim().to_string());
    }

    let fix = &record.correction;
    let mut corrected = apply_text(&mut b.wall_type, &fix.wall_type);
    corrected |= apply_text(&mut b.roof_type, &fix.roof_type);
    corrected |= apply_text(&mut b.use_type, &fix.use_type);
    corrected |= apply_text(&mut b.state_type, &fix.state_type);
    if let Some(y) = fix.construction_year.filter(|y| Some(*y) != b.construction_year) {
        b.construction_year = Some(y);
        corrected = true;
    }
    let mut key_changed = false;
    if corrected && b.kind == BuildingKind::Cadastral {
        b.edited = true;
        let key = subtypology_key(&b, masters, project.meta.cutoff_year).ok_or(Error::UnreconciledTypes(1))?;
        if b.subtypology_key.as_ref() != Some(&key) {
            key_changed = b.subtypology_key.is_some();
            b.subtypology_key = Some(key);
        }
    } else if corrected {
        b.edited = true;
    }

    if let Some(classes) = classes {
        let vi = compute_vi(&classes, &project.meta.scale)?;
        let vi_norm = normalize_vi(vi, &project.meta.scale)?;
        b.survey = Some(SurveyRecord {
            classes,
            raw: record.raw.clone(),
            observer_id: record.observer_id.clone().unwrap_or_default(),
            date: record.date,
        });
        b.surveyed = true;
        b.vi = Some(vi);
        b.vi_norm = Some(vi_norm);
        b.vi_source = ViSource::Direct;
    }

    let outcome = FieldOutcome {
        building_id: b.id,
        created,
        surveyed: b.surveyed,
        vi: b.vi,
        vi_norm: b.vi_norm,
        subtypology_changed: key_changed,
    };
    let typology = b.typology_id.clone();
    project.buildings.insert(b.id, b);
    if key_changed {
        project.mark_stale(format!("subtypology of building {} changed", outcome.building_id));
    }
    if let Some(tid) = typology {
        crate::typology::refresh_stats(project, &tid);
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldBatch {
    pub records: Vec<(usize, FieldRecord)>,
    pub errors: Vec<RowError>,
}

fn opt_f64(text: &str, name: &str) -> std::result::Result<Option<f64>, RowProblem> {
    if text.is_empty() {
        return Ok(None);
    }
    text.parse::<f64>().map(Some).map_err(|_| RowProblem::Malformed(format!("{name}: {text:?} is not a number")))
}

/// Parses a field-data CSV batch. Only `id` is required; unknown columns are ignored.
pub fn parse_field_data<R: Read>(reader: R) -> Result<FieldBatch> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::MissingColumn(format!("unreadable header: {e}")))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim().trim_start_matches('\u{feff}') == name);
    if col("id").is_none() {
        return Err(Error::MissingColumn("id".into()));
    }
    let columns: Vec<Option<usize>> = FIELD_COLUMNS.iter().map(|c| col(c)).collect();

    let mut batch = FieldBatch::default();
    for (i, result) in rdr.records().enumerate() {
        let fallback = i + 2;
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                let row_number = e.position().map_or(fallback, |p| p.line() as usize);
                batch.errors.push(RowError { row_number, reason: RowProblem::Malformed(e.to_string()) });
                if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                    break;
                }
                continue;
            }
        };
        let row_number = record.position().map_or(fallback, |p| p.line() as usize);
        let cell = |name: &str| -> &str {
            FIELD_COLUMNS
                .iter()
                .position(|c| *c == name)
                .and_then(|i| columns[i])
                .and_then(|i| record.get(i))
                .unwrap_or("")
        };
        match field_row(&cell) {
            Ok(r) => batch.records.push((row_number, r)),
            Err(reason) => batch.errors.push(RowError { row_number, reason }),
        }
    }
    Ok(batch)
}

fn field_row<'a>(cell: &dyn Fn(&str) -> &'a str) -> std::result::Result<FieldRecord, RowProblem> {
    let id_text = cell("id");
    if id_text.is_empty() {
        return Err(RowProblem::MissingField("id".into()));
    }
    let id = id_text.parse::<FieldTarget>().map_err(|e| RowProblem::Malformed(e.to_string()))?;
    let mut rec = FieldRecord::new(id);
    rec.coord = match (opt_f64(cell("x"), "x")?, opt_f64(cell("y"), "y")?) {
        (Some(x), Some(y)) => Some(Coord { x, y }),
        (None, None) => None,
        _ => return Err(RowProblem::Malformed("x and y must be given together".into())),
    };
    let text = |name: &str| Some(cell(name).to_string()).filter(|s| !s.is_empty());
    rec.photo_id = text("photo");
    rec.observer_id = text("observer");
    if let Some(d) = text("date") {
        let date = NaiveDate::parse_from_str(&d, "%Y-%m-%d")
            .map_err(|_| RowProblem::Malformed(format!("date {d:?} is not YYYY-MM-DD")))?;
        rec.date = Some(date);
    }
    rec.correction = CadastralCorrection {
        wall_type: text("pared"),
        roof_type: text("techo"),
        use_type: text("uso"),
        state_type: text("estado"),
        construction_year: match text("anio") {
            Some(y) => Some(y.parse().map_err(|_| RowProblem::BadYear(y))?),
            None => None,
        },
    };
    for p in 1..=11 {
        let v = cell(&format!("p{p}"));
        let class = if v.is_empty() {
            None
        } else {
            Some(v.parse::<Class>().map_err(|e| RowProblem::Malformed(format!("p{p}: {e}")))?)
        };
        rec.classes.push(class);
    }
    if rec.classes.iter().all(Option::is_none) {
        rec.classes.clear();
    }
    for name in RawFields::NAMES {
        rec.raw.set(name, opt_f64(cell(name), name)?).map_err(|e| RowProblem::Malformed(e.to_string()))?;
    }
    Ok(rec)
}
