//! Cadastral table parsing and the initial building inventory.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::domain::{Building, CadastralKey, Project, ProjectState};
use crate::error::{Error, Result};
use crate::masters::TypeCategory;

/// Logical cadastre fields, in the order [`ColumnMap`] stores them.
pub const CADASTRE_FIELDS: [&str; 11] =
    ["dep", "centro", "distrito", "manzana", "lote", "edificacion", "pared", "techo", "uso", "estado", "anio"];

/// Binds each logical field to a header of the input table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    headers: [String; 11],
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap { headers: CADASTRE_FIELDS.map(str::to_string) }
    }
}

impl ColumnMap {
    pub fn bind(mut self, field: &str, header: &str) -> Result<ColumnMap> {
        let i = CADASTRE_FIELDS
            .iter()
            .position(|f| *f == field)
            .ok_or_else(|| Error::Invalid(format!("unknown cadastre field {field:?}")))?;
        self.headers[i] = header.to_string();
        Ok(self)
    }

    /// Parses `field=HEADER` pairs separated by commas, e.g. `manzana=MANZ,dep=DEPARTAM`.
    pub fn from_pairs(spec: &str) -> Result<ColumnMap> {
        spec.split(',').map(str::trim).filter(|p| !p.is_empty()).try_fold(ColumnMap::default(), |map, pair| {
            let (field, header) = pair
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("column binding {pair:?} is not field=HEADER")))?;
            map.bind(field.trim(), header.trim())
        })
    }

    pub fn header(&self, field: &str) -> Option<&str> {
        CADASTRE_FIELDS.iter().position(|f| *f == field).map(|i| self.headers[i].as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CadastreRow {
    pub row_number: usize,
    pub key: CadastralKey,
    pub wall_type: String,
    pub roof_type: String,
    pub use_type: String,
    pub state_type: String,
    pub construction_year: i32,
}

impl CadastreRow {
    pub fn type_value(&self, category: TypeCategory) -> &str {
        match category {
            TypeCategory::Wall => &self.wall_type,
            TypeCategory::Roof => &self.roof_type,
            TypeCategory::Use => &self.use_type,
            TypeCategory::State => &self.state_type,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail")]
pub enum RowProblem {
    BadYear(String),
    MissingField(String),
    DuplicateKey { first_row: usize },
    FieldCount { expected: usize, got: usize },
    Encoding,
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub row_number: usize,
    pub reason: RowProblem,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CadastreParse {
    pub rows: Vec<CadastreRow>,
    pub errors: Vec<RowError>,
}

/// Locates the mapped columns in a header row, case-insensitively.
pub(crate) fn locate_columns(headers: &csv::ByteRecord, wanted: &[&str]) -> Result<Vec<usize>> {
    let names: Vec<String> = headers
        .iter()
        .map(|h| String::from_utf8_lossy(h).trim().trim_start_matches('\u{feff}').to_lowercase())
        .collect();
    wanted
        .iter()
        .map(|w| {
            names.iter().position(|n| *n == w.to_lowercase()).ok_or_else(|| Error::MissingColumn((*w).to_string()))
        })
        .collect()
}

pub(crate) fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader)
}

/// Parses a cadastral CSV table. Missing mapped columns abort before any row
/// is read; after that every record ends up as a row or as a row error.
pub fn parse_cadastre<R: Read>(reader: R, mapping: &ColumnMap) -> Result<CadastreParse> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.byte_headers().map_err(|e| Error::MissingColumn(format!("unreadable header: {e}")))?.clone();
    let wanted: Vec<&str> = mapping.headers.iter().map(String::as_str).collect();
    let cols = locate_columns(&headers, &wanted)?;

    let mut out = CadastreParse::default();
    let mut seen: HashMap<CadastralKey, usize> = HashMap::new();
    let mut record = csv::ByteRecord::new();
    let mut fallback_row = 1;
    loop {
        fallback_row += 1;
        let row_number = match rdr.read_byte_record(&mut record) {
            Ok(false) => break,
            Ok(true) => record.position().map_or(fallback_row, |p| p.line() as usize),
            Err(e) => {
                let row_number = e.position().map_or(fallback_row, |p| p.line() as usize);
                let fatal = matches!(e.kind(), csv::ErrorKind::Io(_));
                out.errors.push(RowError { row_number, reason: RowProblem::Malformed(e.to_string()) });
                if fatal {
                    break;
                }
                continue;
            }
        };
        match parse_record(&record, &cols, headers.len(), row_number) {
            Ok(row) => {
                if let Some(first) = seen.get(&row.key) {
                    out.errors.push(RowError { row_number, reason: RowProblem::DuplicateKey { first_row: *first } });
                } else {
                    seen.insert(row.key.clone(), row_number);
                    out.rows.push(row);
                }
            }
            Err(reason) => out.errors.push(RowError { row_number, reason }),
        }
    }
    Ok(out)
}

fn parse_record(
    record: &csv::ByteRecord,
    cols: &[usize],
    width: usize,
    row_number: usize,
) -> std::result::Result<CadastreRow, RowProblem> {
    if cols.iter().any(|c| *c >= record.len()) {
        return Err(RowProblem::FieldCount { expected: width, got: record.len() });
    }
    let mut values = Vec::with_capacity(cols.len());
    for &c in cols {
        let raw = record.get(c).unwrap_or_default();
        let text = std::str::from_utf8(raw).map_err(|_| RowProblem::Encoding)?;
        values.push(text.trim().to_string());
    }
    for (i, v) in values.iter().take(6).enumerate() {
        if v.is_empty() {
            return Err(RowProblem::MissingField(CADASTRE_FIELDS[i].to_string()));
        }
    }
    let year_text = &values[10];
    let construction_year = year_text.parse::<i32>().map_err(|_| RowProblem::BadYear(year_text.clone()))?;
    let mut it = values.into_iter();
    let mut next = || it.next().unwrap_or_default();
    Ok(CadastreRow {
        row_number,
        key: CadastralKey {
            departamento: next(),
            centro: next(),
            distrito: next(),
            manzana: next(),
            lote: next(),
            edificacion: next(),
        },
        wall_type: next(),
        roof_type: next(),
        use_type: next(),
        state_type: next(),
        construction_year,
    })
}

/// Distinct raw values per type category with their occurrence counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCensus {
    pub categories: BTreeMap<TypeCategory, BTreeMap<String, usize>>,
}

impl TypeCensus {
    pub fn values(&self, category: TypeCategory) -> impl Iterator<Item = (&String, &usize)> {
        self.categories.get(&category).into_iter().flatten()
    }

    fn add(&mut self, category: TypeCategory, value: &str) {
        *self.categories.entry(category).or_default().entry(value.to_string()).or_default() += 1;
    }
}

pub fn discover_types(rows: &[CadastreRow]) -> TypeCensus {
    let mut census = TypeCensus::default();
    for row in rows {
        for cat in TypeCategory::ALL {
            census.add(cat, row.type_value(cat));
        }
    }
    census
}

/// Census over the cadastral buildings already held by a project.
pub fn project_type_census(project: &Project) -> TypeCensus {
    let mut census = TypeCensus::default();
    for b in project.buildings.values().filter(|b| b.cadastral_key.is_some()) {
        for cat in TypeCategory::ALL {
            census.add(cat, super::building_type_value(b, cat));
        }
    }
    census
}

/// Replaces the project inventory with one cadastral building per row,
/// numbered from 1 in row order.
pub fn import_cadastre(project: &mut Project, rows: &[CadastreRow]) -> Result<usize> {
    if project.state() != ProjectState::Created {
        return Err(Error::WrongState { op: "import_cadastre", state: project.state() });
    }
    project.buildings.clear();
    for (i, row) in rows.iter().enumerate() {
        let id = i as u64 + 1;
        let mut b = Building::cadastral(id, row.key.clone());
        b.wall_type = row.wall_type.clone();
        b.roof_type = row.roof_type.clone();
        b.use_type = row.use_type.clone();
        b.state_type = row.state_type.clone();
        b.construction_year = Some(row.construction_year);
        project.buildings.insert(id, b);
    }
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "dep,centro,distrito,manzana,lote,edificacion,pared,techo,uso,estado,anio\n";

    fn parse(body: &str) -> CadastreParse {
        parse_cadastre(format!("{HEADER}{body}").as_bytes(), &ColumnMap::default()).unwrap()
    }

    #[test]
    fn well_formed_lines() {
        let p = parse(
            "08,01,02,U206,1,1,BLOQUE,ZINC,HAB,BUENO,1965\n\
             08,01,02,U206,2,1,MADERA,ZINC,HAB,MALO,1980\n\
             08,01,02,U207,1,1,BLOQUE,TEJA,COM,BUENO,1990\n",
        );
        assert_eq!(p.rows.len(), 3);
        assert!(p.errors.is_empty());
        assert_eq!(p.rows[0].key.block_key(), "08-01-02-U206");
        assert_eq!(p.rows[2].row_number, 4);
    }

    #[test]
    fn bad_year_is_row_error() {
        let p = parse("08,01,02,U206,1,1,BLOQUE,ZINC,HAB,BUENO,19x2\n");
        assert!(p.rows.is_empty());
        assert_eq!(p.errors, vec![RowError { row_number: 2, reason: RowProblem::BadYear("19x2".into()) }]);
    }

    #[test]
    fn duplicate_key_is_row_error() {
        let p = parse(
            "08,01,02,U206,1,1,BLOQUE,ZINC,HAB,BUENO,1965\n\
             08,01,02,U206,1,1,MADERA,ZINC,HAB,MALO,1980\n",
        );
        assert_eq!(p.rows.len(), 1);
        assert_eq!(p.errors[0].reason, RowProblem::DuplicateKey { first_row: 2 });
    }

    #[test]
    fn missing_key_field_and_short_rows() {
        let p = parse("08,01,02,,1,1,BLOQUE,ZINC,HAB,BUENO,1965\n08,01\n");
        assert_eq!(p.errors.len(), 2);
        assert_eq!(p.errors[0].reason, RowProblem::MissingField("manzana".into()));
        assert!(matches!(p.errors[1].reason, RowProblem::FieldCount { .. }));
    }

    #[test]
    fn missing_column_is_fatal() {
        let err = parse_cadastre("dep,centro\n1,2\n".as_bytes(), &ColumnMap::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "distrito"));
        assert!(matches!(parse_cadastre(&b""[..], &ColumnMap::default()), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn custom_mapping() {
        let map = ColumnMap::from_pairs("dep=DEPARTAM, distrito=DISTRO, manzana=MANZ, edificacion=EDIFIC").unwrap();
        let text = "DEPARTAM,centro,DISTRO,MANZ,lote,EDIFIC,pared,techo,uso,estado,anio\n\
                    08,01,02,U206,1,1,BLOQUE,ZINC,HAB,BUENO,1965\n";
        let p = parse_cadastre(text.as_bytes(), &map).unwrap();
        assert_eq!(p.rows.len(), 1);
        assert!(ColumnMap::from_pairs("nonsense").is_err());
    }

    #[test]
    fn census_counts() {
        let p = parse(
            "1,1,1,1,1,1,block,ZINC,HAB,BUENO,1965\n\
             1,1,1,1,2,1,block,ZINC,HAB,BUENO,1965\n\
             1,1,1,1,3,1,wood,ZINC,HAB,BUENO,1965\n",
        );
        let census = discover_types(&p.rows);
        let walls: Vec<_> = census.values(TypeCategory::Wall).map(|(k, v)| (k.as_str(), *v)).collect();
        assert_eq!(walls, vec![("block", 2), ("wood", 1)]);
        let roofs: Vec<_> = census.values(TypeCategory::Roof).collect();
        assert_eq!(roofs.len(), 1);
    }

    proptest! {
        // Lines free of quotes and line breaks map one-to-one onto records.
        #[test]
        fn every_line_is_row_or_error(lines in proptest::collection::vec("[0-9a-zA-Z ,;x-]{1,60}", 0..40)) {
            let body = lines.iter().map(|l| format!("{l}\n")).collect::<String>();
            let p = parse(&body);
            prop_assert_eq!(p.rows.len() + p.errors.len(), lines.len());
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..400)) {
            let mut input = HEADER.as_bytes().to_vec();
            input.extend(bytes);
            let _ = parse_cadastre(&input[..], &ColumnMap::default());
            let _ = parse_cadastre(&input[HEADER.len()..], &ColumnMap::default());
        }
    }
}
