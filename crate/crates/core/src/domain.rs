//! Project, building and workflow types shared by every other module.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Version written into every persisted document and every exported map.
pub const SCHEMA_VERSION: u32 = 1;

/// Construction year separating old and new building stock unless a project overrides it.
pub const DEFAULT_CUTOFF_YEAR: i32 = 1972;

/// Default cut points on the normalized index (0..100) for baja / media / alta.
pub const DEFAULT_VULN_THRESHOLDS: [f64; 2] = [33.3, 66.6];

/// Default cut points on the damage index (0..1) for menor .. colapso.
pub const DEFAULT_DAMAGE_THRESHOLDS: [f64; 4] = [0.15, 0.35, 0.6, 0.9];

/// Identity of the sampling generator, recorded on every project so that a
/// selection can be reproduced by a later release.
pub const RNG_IDENTITY: &str = "rand_chacha-0.9 ChaCha8Rng::seed_from_u64; rand-0.9 SliceRandom::shuffle";

pub type BuildingId = u64;

pub type Extra = BTreeMap<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProjectState {
    Created,
    TypesReconciled,
    TypologiesDefined,
    Sampled,
    FieldWork,
    UploadingResults,
    Closed,
}

impl ProjectState {
    pub const ALL: [ProjectState; 7] = [
        ProjectState::Created,
        ProjectState::TypesReconciled,
        ProjectState::TypologiesDefined,
        ProjectState::Sampled,
        ProjectState::FieldWork,
        ProjectState::UploadingResults,
        ProjectState::Closed,
    ];

    pub fn successor(self) -> Option<ProjectState> {
        use ProjectState::*;
        match self {
            Created => Some(TypesReconciled),
            TypesReconciled => Some(TypologiesDefined),
            TypologiesDefined => Some(Sampled),
            Sampled => Some(FieldWork),
            FieldWork => Some(UploadingResults),
            UploadingResults => Some(Closed),
            Closed => None,
        }
    }

    /// Legal edges: one step forward along the chain, plus a return from
    /// `UploadingResults` to `FieldWork` for another survey round.
    pub fn can_transition_to(self, target: ProjectState) -> bool {
        self.successor() == Some(target)
            || (self == ProjectState::UploadingResults && target == ProjectState::FieldWork)
    }

    pub fn as_str(self) -> &'static str {
        use ProjectState::*;
        match self {
            Created => "Created",
            TypesReconciled => "TypesReconciled",
            TypologiesDefined => "TypologiesDefined",
            Sampled => "Sampled",
            FieldWork => "FieldWork",
            UploadingResults => "UploadingResults",
            Closed => "Closed",
        }
    }
}

impl fmt::Display for ProjectState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProjectState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProjectState::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Invalid(format!("unknown project state {s:?}")))
    }
}

/// Survey class of one vulnerability parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Class {
    A,
    B,
    C,
    D,
}

impl Class {
    pub const ALL: [Class; 4] = [Class::A, Class::B, Class::C, Class::D];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Class {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Class::A),
            "B" | "b" => Ok(Class::B),
            "C" | "c" => Ok(Class::C),
            "D" | "d" => Ok(Class::D),
            other => Err(Error::Invalid(format!("class must be A-D, got {other:?}"))),
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Class::A => "A",
            Class::B => "B",
            Class::C => "C",
            Class::D => "D",
        };
        f.write_str(c)
    }
}

/// One parameter of the vulnerability scale: class scores for A..D and a weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub name: String,
    pub k: [f64; 4],
    pub w: f64,
}

/// The eleven-parameter scoring matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnerabilityScale {
    pub rows: Vec<ScaleRow>,
}

impl VulnerabilityScale {
    pub const PARAMETERS: usize = 11;

    /// Largest attainable index: every parameter at its worst class.
    pub fn max_vi(&self) -> f64 {
        self.rows.iter().map(|r| r.k.iter().copied().fold(0.0_f64, f64::max) * r.w).sum()
    }
}

impl Default for VulnerabilityScale {
    fn default() -> Self {
        const ROWS: [(&str, [f64; 4], f64); 11] = [
            ("Organización del sistema resistente", [0.0, 5.0, 20.0, 45.0], 1.00),
            ("Calidad del sistema resistente", [0.0, 5.0, 25.0, 45.0], 0.25),
            ("Resistencia convencional", [0.0, 5.0, 25.0, 45.0], 1.50),
            ("Posición del edificio y cimentación", [0.0, 5.0, 25.0, 45.0], 0.75),
            ("Diafragmas horizontales", [0.0, 5.0, 15.0, 45.0], 1.00),
            ("Configuración en planta", [0.0, 5.0, 25.0, 45.0], 0.50),
            ("Configuración en elevación", [0.0, 5.0, 25.0, 45.0], 1.00),
            ("Distancia máxima entre los muros", [0.0, 5.0, 25.0, 45.0], 0.25),
            ("Tipo de cubierta", [0.0, 15.0, 25.0, 45.0], 1.00),
            ("Elementos no estructurales", [0.0, 0.0, 25.0, 45.0], 0.25),
            ("Estado de conservación", [0.0, 5.0, 25.0, 45.0], 1.00),
        ];
        VulnerabilityScale {
            rows: ROWS.iter().map(|(name, k, w)| ScaleRow { name: (*name).to_string(), k: *k, w: *w }).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BuildingKind {
    Cadastral,
    Independent,
}

impl BuildingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BuildingKind::Cadastral => "Cadastral",
            BuildingKind::Independent => "Independent",
        }
    }
}

/// Six-part cadastral identification of a building.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CadastralKey {
    pub departamento: String,
    pub centro: String,
    pub distrito: String,
    pub manzana: String,
    pub lote: String,
    pub edificacion: String,
}

impl CadastralKey {
    /// Block (manzana) identifier: the first four parts joined by `-`.
    pub fn block_key(&self) -> String {
        format!("{}-{}-{}-{}", self.departamento, self.centro, self.distrito, self.manzana)
    }

    /// Parcel (lote) identifier: the first five parts joined by `-`.
    pub fn parcel_key(&self) -> String {
        format!("{}-{}", self.block_key(), self.lote)
    }
}

impl fmt::Display for CadastralKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.parcel_key(), self.edificacion)
    }
}

/// An observed combination of resolved type codes and the construction-year split.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubTypologyKey {
    pub wall_type: String,
    pub roof_type: String,
    pub use_type: String,
    pub state_type: String,
    pub pre_cutoff: bool,
}

impl fmt::Display for SubTypologyKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}/{}",
            self.wall_type,
            self.roof_type,
            self.use_type,
            self.state_type,
            if self.pre_cutoff { "pre" } else { "post" }
        )
    }
}

impl FromStr for SubTypologyKey {
    type Err = Error;

    /// Parses the display form `wall/roof/use/state/pre|post`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('/').map(str::trim).collect();
        let [wall, roof, use_type, state, era] = parts[..] else {
            return Err(Error::Invalid(format!("subtypology key {s:?} needs five '/'-separated parts")));
        };
        let pre_cutoff = match era {
            "pre" => true,
            "post" => false,
            _ => return Err(Error::Invalid(format!("subtypology key {s:?} must end in pre or post"))),
        };
        Ok(SubTypologyKey {
            wall_type: wall.to_string(),
            roof_type: roof.to_string(),
            use_type: use_type.to_string(),
            state_type: state.to_string(),
            pre_cutoff,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub x: f64,
    pub y: f64,
}

/// Quantitative fields of the survey sheet, stored as measured.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawFields {
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub floors: Option<f64>,
    #[serde(rename = "At", default, skip_serializing_if = "Option::is_none")]
    pub total_area: Option<f64>,
    #[serde(rename = "Ax", default, skip_serializing_if = "Option::is_none")]
    pub resistant_area_x: Option<f64>,
    #[serde(rename = "Ay", default, skip_serializing_if = "Option::is_none")]
    pub resistant_area_y: Option<f64>,
    #[serde(rename = "tk", default, skip_serializing_if = "Option::is_none")]
    pub shear_strength: Option<f64>,
    #[serde(rename = "h", default, skip_serializing_if = "Option::is_none")]
    pub story_height: Option<f64>,
    #[serde(rename = "Pm", default, skip_serializing_if = "Option::is_none")]
    pub masonry_unit_weight: Option<f64>,
    #[serde(rename = "Ps", default, skip_serializing_if = "Option::is_none")]
    pub diaphragm_weight: Option<f64>,
    #[serde(rename = "b1", default, skip_serializing_if = "Option::is_none")]
    pub plan_ratio_b1: Option<f64>,
    #[serde(rename = "b2", default, skip_serializing_if = "Option::is_none")]
    pub plan_ratio_b2: Option<f64>,
    #[serde(rename = "porch_pct", default, skip_serializing_if = "Option::is_none")]
    pub porch_pct: Option<f64>,
    #[serde(rename = "T_over_H", default, skip_serializing_if = "Option::is_none")]
    pub t_over_h: Option<f64>,
    #[serde(rename = "deltaM_over_M_pct", default, skip_serializing_if = "Option::is_none")]
    pub delta_m_over_m_pct: Option<f64>,
    #[serde(rename = "L_over_S", default, skip_serializing_if = "Option::is_none")]
    pub l_over_s: Option<f64>,
}

impl RawFields {
    /// Column names as they appear on the survey sheet, in sheet order.
    pub const NAMES: [&'static str; 14] = [
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

    fn slots(&self) -> [&Option<f64>; 14] {
        [
            &self.floors,
            &self.total_area,
            &self.resistant_area_x,
            &self.resistant_area_y,
            &self.shear_strength,
            &self.story_height,
            &self.masonry_unit_weight,
            &self.diaphragm_weight,
            &self.plan_ratio_b1,
            &self.plan_ratio_b2,
            &self.porch_pct,
            &self.t_over_h,
            &self.delta_m_over_m_pct,
            &self.l_over_s,
        ]
    }

    fn slots_mut(&mut self) -> [&mut Option<f64>; 14] {
        [
            &mut self.floors,
            &mut self.total_area,
            &mut self.resistant_area_x,
            &mut self.resistant_area_y,
            &mut self.shear_strength,
            &mut self.story_height,
            &mut self.masonry_unit_weight,
            &mut self.diaphragm_weight,
            &mut self.plan_ratio_b1,
            &mut self.plan_ratio_b2,
            &mut self.porch_pct,
            &mut self.t_over_h,
            &mut self.delta_m_over_m_pct,
            &mut self.l_over_s,
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        let i = Self::NAMES.iter().position(|n| *n == name)?;
        *self.slots()[i]
    }

    pub fn set(&mut self, name: &str, value: Option<f64>) -> Result<()> {
        let i = Self::NAMES
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| Error::Invalid(format!("unknown survey field {name:?}")))?;
        *self.slots_mut()[i] = value;
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.slots().iter().all(|v| v.is_none())
    }

    /// Every present value must be a finite number ≥ 0.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in Self::NAMES.iter().zip(self.slots()) {
            if let Some(v) = v {
                if !v.is_finite() || *v < 0.0 {
                    return Err(Error::Invalid(format!("survey field {name} must be ≥ 0, got {v}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyRecord {
    /// Class per parameter, index 0 = parameter 1.
    pub classes: [Class; 11],
    #[serde(default, skip_serializing_if = "RawFields::is_empty")]
    pub raw: RawFields,
    #[serde(default)]
    pub observer_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<NaiveDate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ViSource {
    Direct,
    Propagated,
    #[default]
    None,
}

/// A row of the building hierarchy; `kind` selects which optional fields are legal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub kind: BuildingKind,
    pub id: BuildingId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cadastral_key: Option<CadastralKey>,
    #[serde(default)]
    pub wall_type: String,
    #[serde(default)]
    pub roof_type: String,
    #[serde(default)]
    pub use_type: String,
    #[serde(default)]
    pub state_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub construction_year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtypology_key: Option<SubTypologyKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub typology_id: Option<String>,
    #[serde(default)]
    pub selected_for_survey: bool,
    #[serde(default)]
    pub surveyed: bool,
    #[serde(default)]
    pub edited: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coord: Option<Coord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photo_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survey: Option<SurveyRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vi_norm: Option<f64>,
    #[serde(default)]
    pub vi_source: ViSource,
    #[serde(flatten)]
    pub extra: Extra,
}

impl Building {
    pub fn cadastral(id: BuildingId, key: CadastralKey) -> Building {
        Building { kind: BuildingKind::Cadastral, cadastral_key: Some(key), ..Building::independent(id) }
    }

    pub fn independent(id: BuildingId) -> Building {
        Building {
            kind: BuildingKind::Independent,
            id,
            cadastral_key: None,
            wall_type: String::new(),
            roof_type: String::new(),
            use_type: String::new(),
            state_type: String::new(),
            construction_year: None,
            subtypology_key: None,
            typology_id: None,
            selected_for_survey: false,
            surveyed: false,
            edited: false,
            coord: None,
            photo_id: None,
            survey: None,
            vi: None,
            vi_norm: None,
            vi_source: ViSource::None,
            extra: Extra::new(),
        }
    }

    pub fn block_key(&self) -> Option<String> {
        self.cadastral_key.as_ref().map(CadastralKey::block_key)
    }

    /// Checks the per-kind field rules and the survey/VI consistency rules.
    pub fn check(&self, scale_max: f64) -> Result<()> {
        let bad = |msg: &str| Err(Error::Invalid(format!("building {}: {msg}", self.id)));
        match self.kind {
            BuildingKind::Independent => {
                if self.cadastral_key.is_some() || self.subtypology_key.is_some() || self.typology_id.is_some() {
                    return bad("independent buildings carry no cadastral key, subtypology or typology");
                }
                if self.vi_source == ViSource::Propagated {
                    return bad("independent buildings never receive propagated values");
                }
            }
            BuildingKind::Cadastral => {
                if self.cadastral_key.is_none() {
                    return bad("cadastral building without cadastral key");
                }
            }
        }
        if self.surveyed && self.survey.is_none() {
            return bad("surveyed without a survey record");
        }
        if let Some(vi) = self.vi {
            if !(0.0..=scale_max).contains(&vi) {
                return bad("vi outside the scale range");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum SampleQuota {
    Count(u32),
    Percent(f64),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TypologyStats {
    pub count: usize,
    pub surveyed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_vi_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_vi: Option<f64>,
    /// `None` means no surveyed members ("no-data").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<crate::risk::VulnerabilityLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Typology {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub subtypology_keys: BTreeSet<SubTypologyKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_quota: Option<SampleQuota>,
    #[serde(default)]
    pub stats: TypologyStats,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypocenter_lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypocenter_lon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildingDamage {
    pub d: f64,
    pub level: crate::risk::DamageLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub name: String,
    /// Horizontal ground acceleration as a fraction of g.
    pub ag: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<ScenarioMeta>,
    #[serde(default)]
    pub damages: BTreeMap<BuildingId, BuildingDamage>,
    #[serde(flatten)]
    pub extra: Extra,
}

/// Canonical decimal form of an acceleration; two scenarios clash when these match.
pub fn canonical_ag(ag: f64) -> String {
    format!("{ag}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Parcels,
    Blocks,
    ProjectArea,
}

impl LayerKind {
    pub const ALL: [LayerKind; 3] = [LayerKind::Parcels, LayerKind::Blocks, LayerKind::ProjectArea];

    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Parcels => "Parcels",
            LayerKind::Blocks => "Blocks",
            LayerKind::ProjectArea => "ProjectArea",
        }
    }
}

impl FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "parcels" => Ok(LayerKind::Parcels),
            "blocks" => Ok(LayerKind::Blocks),
            "projectarea" | "project-area" | "project_area" => Ok(LayerKind::ProjectArea),
            _ => Err(Error::Invalid(format!("unknown layer kind {s:?}"))),
        }
    }
}

pub type Ring = Vec<[f64; 2]>;

/// Polygonal footprint in GeoJSON shape (`{"type": ..., "coordinates": ...}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "coordinates")]
pub enum Footprint {
    Polygon(Vec<Ring>),
    MultiPolygon(Vec<Vec<Ring>>),
}

impl Footprint {
    /// All rings of all polygons, for even-odd containment.
    pub fn rings(&self) -> Vec<&Ring> {
        match self {
            Footprint::Polygon(rings) => rings.iter().collect(),
            Footprint::MultiPolygon(polys) => polys.iter().flatten().collect(),
        }
    }

    pub fn bbox(&self) -> [f64; 4] {
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for ring in self.rings() {
            for p in ring {
                b[0] = b[0].min(p[0]);
                b[1] = b[1].min(p[1]);
                b[2] = b[2].max(p[0]);
                b[3] = b[3].max(p[1]);
            }
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFeature {
    pub key: String,
    pub geometry: Footprint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapLayer {
    pub kind: LayerKind,
    pub key_property: String,
    pub features: Vec<LayerFeature>,
}

impl MapLayer {
    pub fn feature(&self, key: &str) -> Option<&LayerFeature> {
        self.features.iter().find(|f| f.key == key)
    }
}

/// Project-level settings and bookkeeping, persisted as `project.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectMeta {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub author: String,
    pub date: NaiveDate,
    pub state: ProjectState,
    pub scale: VulnerabilityScale,
    pub cutoff_year: i32,
    pub vuln_thresholds: [f64; 2],
    pub damage_thresholds: [f64; 4],
    #[serde(default)]
    pub stale: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stale_reason: Option<String>,
    pub rng: String,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Project {
    pub meta: ProjectMeta,
    pub buildings: BTreeMap<BuildingId, Building>,
    pub typologies: Vec<Typology>,
    pub scenarios: Vec<Scenario>,
    pub layers: BTreeMap<LayerKind, MapLayer>,
}

impl Project {
    pub fn new(id: impl Into<String>, name: impl Into<String>, date: NaiveDate) -> Project {
        Project {
            meta: ProjectMeta {
                id: id.into(),
                name: name.into(),
                description: String::new(),
                author: String::new(),
                date,
                state: ProjectState::Created,
                scale: VulnerabilityScale::default(),
                cutoff_year: DEFAULT_CUTOFF_YEAR,
                vuln_thresholds: DEFAULT_VULN_THRESHOLDS,
                damage_thresholds: DEFAULT_DAMAGE_THRESHOLDS,
                stale: false,
                stale_reason: None,
                rng: RNG_IDENTITY.to_string(),
                extra: Extra::new(),
            },
            buildings: BTreeMap::new(),
            typologies: Vec::new(),
            scenarios: Vec::new(),
            layers: BTreeMap::new(),
        }
    }

    pub fn state(&self) -> ProjectState {
        self.meta.state
    }

    /// Moves along one legal edge of the workflow graph. Preconditions beyond
    /// the graph itself are checked by [`crate::workflow::transition`].
    pub fn advance_state(&mut self, target: ProjectState) -> Result<()> {
        if !self.meta.state.can_transition_to(target) {
            return Err(Error::IllegalTransition { from: self.meta.state, to: target });
        }
        self.meta.state = target;
        Ok(())
    }

    pub fn mark_stale(&mut self, reason: impl Into<String>) {
        self.meta.stale = true;
        self.meta.stale_reason = Some(reason.into());
    }

    pub(crate) fn clear_stale(&mut self) {
        self.meta.stale = false;
        self.meta.stale_reason = None;
    }

    pub fn ensure_fresh(&self) -> Result<()> {
        if self.meta.stale {
            return Err(Error::StaleProject(self.meta.stale_reason.clone().unwrap_or_default()));
        }
        Ok(())
    }

    pub fn has_any_vi(&self) -> bool {
        self.buildings.values().any(|b| b.vi.is_some())
    }

    /// Replaces the scoring matrix; projects already holding indices become stale.
    pub fn set_scale(&mut self, scale: VulnerabilityScale) -> Result<()> {
        let report = crate::risk::validate_scale(&scale);
        if !report.is_empty() {
            return Err(Error::InvalidScale(report));
        }
        if scale != self.meta.scale && self.has_any_vi() {
            self.mark_stale("vulnerability scale changed");
        }
        self.meta.scale = scale;
        Ok(())
    }

    pub fn set_vuln_thresholds(&mut self, t: [f64; 2]) -> Result<()> {
        check_ascending(&t, 0.0, 100.0)?;
        if t != self.meta.vuln_thresholds && self.has_any_vi() {
            self.mark_stale("vulnerability thresholds changed");
        }
        self.meta.vuln_thresholds = t;
        Ok(())
    }

    pub fn set_damage_thresholds(&mut self, t: [f64; 4]) -> Result<()> {
        check_ascending(&t, 0.0, 1.0)?;
        if t != self.meta.damage_thresholds && !self.scenarios.is_empty() {
            self.mark_stale("damage thresholds changed");
        }
        self.meta.damage_thresholds = t;
        Ok(())
    }

    pub fn typology(&self, id: &str) -> Result<&Typology> {
        self.typologies.iter().find(|t| t.id == id).ok_or_else(|| Error::UnknownTypology(id.to_string()))
    }

    pub fn typology_mut(&mut self, id: &str) -> Result<&mut Typology> {
        self.typologies.iter_mut().find(|t| t.id == id).ok_or_else(|| Error::UnknownTypology(id.to_string()))
    }

    pub fn scenario(&self, id: &str) -> Result<&Scenario> {
        self.scenarios.iter().find(|s| s.id == id).ok_or_else(|| Error::UnknownScenario(id.to_string()))
    }

    pub fn building(&self, id: BuildingId) -> Result<&Building> {
        self.buildings.get(&id).ok_or(Error::UnknownBuilding(id))
    }

    pub fn next_building_id(&self) -> BuildingId {
        self.buildings.keys().next_back().map_or(1, |id| id + 1)
    }

    /// Sorted set of subtypology keys carried by cadastral buildings.
    pub fn discovered_keys(&self) -> BTreeSet<SubTypologyKey> {
        self.buildings.values().filter_map(|b| b.subtypology_key.clone()).collect()
    }

    pub fn assigned_keys(&self) -> BTreeMap<&SubTypologyKey, &str> {
        self.typologies.iter().flat_map(|t| t.subtypology_keys.iter().map(move |k| (k, t.id.as_str()))).collect()
    }
}

fn check_ascending(t: &[f64], lo: f64, hi: f64) -> Result<()> {
    let inside = t.iter().all(|v| v.is_finite() && *v > lo && *v < hi);
    let ascending = t.windows(2).all(|w| w[0] < w[1]);
    if inside && ascending {
        Ok(())
    } else {
        Err(Error::BadBandConfig(format!("thresholds {t:?} must be strictly ascending within ({lo}, {hi})")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn project() -> Project {
        Project::new("p1", "Test", NaiveDate::from_ymd_opt(2007, 7, 1).unwrap())
    }

    #[test]
    fn adjacent_transition_is_accepted() {
        let mut p = project();
        p.advance_state(ProjectState::TypesReconciled).unwrap();
        assert_eq!(p.state(), ProjectState::TypesReconciled);
    }

    #[test]
    fn skipping_states_is_rejected() {
        let mut p = project();
        let err = p.advance_state(ProjectState::Sampled).unwrap_err();
        assert!(matches!(err, Error::IllegalTransition { from: ProjectState::Created, to: ProjectState::Sampled }));
        assert_eq!(p.state(), ProjectState::Created);
    }

    #[test]
    fn closing_from_upload() {
        let mut p = project();
        p.meta.state = ProjectState::UploadingResults;
        p.advance_state(ProjectState::Closed).unwrap();
        assert!(p.advance_state(ProjectState::Created).is_err());
    }

    #[test]
    fn transition_graph_has_seven_edges() {
        let legal: Vec<_> = ProjectState::ALL
            .iter()
            .flat_map(|a| ProjectState::ALL.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| a.can_transition_to(*b))
            .collect();
        assert_eq!(legal.len(), 7);
        assert!(legal.contains(&(ProjectState::UploadingResults, ProjectState::Closed)));
    }

    #[test]
    fn stale_flag_keeps_latest_reason() {
        let mut p = project();
        p.mark_stale("weights changed");
        assert!(p.meta.stale);
        p.mark_stale("scale K changed");
        assert!(p.meta.stale);
        assert_eq!(p.meta.stale_reason.as_deref(), Some("scale K changed"));
    }

    #[test]
    fn subtypology_key_text_form() {
        let k: SubTypologyKey = "BLOQUE/ZINC/HAB/BUENO/pre".parse().unwrap();
        assert!(k.pre_cutoff);
        assert_eq!(k.to_string().parse::<SubTypologyKey>().unwrap(), k);
        assert!("BLOQUE/ZINC/HAB/pre".parse::<SubTypologyKey>().is_err());
        assert!("BLOQUE/ZINC/HAB/BUENO/old".parse::<SubTypologyKey>().is_err());
    }

    #[test]
    fn default_scale_max_is_382_5() {
        assert_eq!(VulnerabilityScale::default().max_vi(), 382.5);
    }

    #[test]
    fn scale_change_marks_stale_only_with_vi() {
        let mut p = project();
        let mut scale = VulnerabilityScale::default();
        scale.rows[2].w = 1.25;
        p.set_scale(scale.clone()).unwrap();
        assert!(!p.meta.stale);

        let mut b = Building::independent(1);
        b.vi = Some(10.0);
        p.buildings.insert(1, b);
        scale.rows[2].w = 1.0;
        p.set_scale(scale).unwrap();
        assert!(p.meta.stale);
    }

    #[test]
    fn thresholds_must_ascend() {
        let mut p = project();
        assert!(p.set_vuln_thresholds([40.0, 20.0]).is_err());
        assert!(p.set_vuln_thresholds([0.0, 20.0]).is_err());
        assert!(p.set_damage_thresholds([0.1, 0.2, 0.3, 1.0]).is_err());
        p.set_damage_thresholds([0.1, 0.2, 0.3, 0.4]).unwrap();
    }

    #[test]
    fn independent_building_rules() {
        let mut b = Building::independent(3);
        assert!(b.check(382.5).is_ok());
        b.typology_id = Some("T1".into());
        assert!(b.check(382.5).is_err());
        let mut b = Building::independent(3);
        b.surveyed = true;
        assert!(b.check(382.5).is_err());
    }
}
