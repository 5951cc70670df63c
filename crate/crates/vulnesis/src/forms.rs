//! Printable field-work reports.
//!
//! Report A lists every building with blank x, y and photo columns for the
//! location pass. Report B has one row per building selected for survey,
//! with cadastral types pre-filled for checking on site and blank class and
//! measurement columns. A filled-in report B can be uploaded as field data.

use serde::Serialize;

use vulnesis_core::ingest::FIELD_COLUMNS;
use vulnesis_core::{Building, Error, Project, ProjectState, Result};

const ID_COLUMNS: [&str; 9] = ["id", "kind", "dep", "centro", "distrito", "manzana", "lote", "edificacion", "typology"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldForms {
    pub report_a: String,
    pub report_b: String,
}

fn identification(b: &Building) -> Vec<String> {
    let mut row = vec![b.id.to_string(), b.kind.as_str().to_string()];
    match &b.cadastral_key {
        Some(k) => row.extend(
            [&k.departamento, &k.centro, &k.distrito, &k.manzana, &k.lote, &k.edificacion].map(|s| s.to_string()),
        ),
        None => row.extend(std::iter::repeat_n(String::new(), 6)),
    }
    row.push(b.typology_id.clone().unwrap_or_default());
    row
}

fn to_csv(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Invalid(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(&r).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

pub fn export_field_forms(project: &Project) -> Result<FieldForms> {
    let state = project.state();
    if state < ProjectState::Sampled {
        return Err(Error::WrongState { op: "export_field_forms", state });
    }

    let mut header_a: Vec<&str> = ID_COLUMNS.to_vec();
    header_a.extend(["x", "y", "photo"]);
    let rows_a = project
        .buildings
        .values()
        .map(|b| {
            let mut row = identification(b);
            row.extend([String::new(), String::new(), String::new()]);
            row
        })
        .collect();

    let mut header_b: Vec<&str> = ID_COLUMNS.to_vec();
    header_b.extend(FIELD_COLUMNS.iter().skip(1));
    let rows_b = project
        .buildings
        .values()
        .filter(|b| b.selected_for_survey)
        .map(|b| {
            let mut row = identification(b);
            for col in FIELD_COLUMNS.iter().skip(1) {
                row.push(match *col {
                    "pared" => b.wall_type.clone(),
                    "techo" => b.roof_type.clone(),
                    "uso" => b.use_type.clone(),
                    "estado" => b.state_type.clone(),
                    "anio" => b.construction_year.map(|y| y.to_string()).unwrap_or_default(),
                    _ => String::new(),
                });
            }
            row
        })
        .collect();

    Ok(FieldForms { report_a: to_csv(&header_a, rows_a)?, report_b: to_csv(&header_b, rows_b)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use vulnesis_core::ingest::parse_field_data;
    use vulnesis_core::{CadastralKey, RawFields};

    fn project(n: u64, selected: &[u64]) -> Project {
        let mut p = Project::new("p", "p", NaiveDate::from_ymd_opt(2007, 1, 1).unwrap());
        for id in 1..=n {
            let key = CadastralKey {
                departamento: "08".into(),
                centro: "01".into(),
                distrito: "02".into(),
                manzana: "U206".into(),
                lote: id.to_string(),
                edificacion: "1".into(),
            };
            let mut b = Building::cadastral(id, key);
            b.wall_type = "BLOQUE".into();
            b.construction_year = Some(1965);
            b.selected_for_survey = selected.contains(&id);
            p.buildings.insert(id, b);
        }
        p.meta.state = ProjectState::Sampled;
        p
    }

    fn rows(csv: &str) -> Vec<csv::StringRecord> {
        csv::Reader::from_reader(csv.as_bytes()).records().map(Result::unwrap).collect()
    }

    #[test]
    fn report_sizes_and_join() {
        let forms = export_field_forms(&project(10, &[2, 5, 9])).unwrap();
        let a = rows(&forms.report_a);
        let b = rows(&forms.report_b);
        assert_eq!(a.len(), 10);
        assert_eq!(b.len(), 3);
        let ids_a: Vec<&str> = a.iter().map(|r| &r[0]).collect();
        assert!(b.iter().all(|r| ids_a.contains(&&r[0])));
    }

    #[test]
    fn report_b_carries_sheet_columns_and_prefill() {
        let forms = export_field_forms(&project(3, &[1])).unwrap();
        let mut rdr = csv::Reader::from_reader(forms.report_b.as_bytes());
        let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_string).collect();
        for name in RawFields::NAMES.iter().chain(["p1", "p11", "x", "y", "photo"].iter()) {
            assert!(header.iter().any(|h| h == name), "{name}");
        }
        let row = rdr.records().next().unwrap().unwrap();
        let col = |n: &str| header.iter().position(|h| h == n).unwrap();
        assert_eq!(&row[col("pared")], "BLOQUE");
        assert_eq!(&row[col("anio")], "1965");
        assert_eq!(&row[col("p1")], "");

        let batch = parse_field_data(forms.report_b.as_bytes()).unwrap();
        assert_eq!(batch.records.len(), 1);
        assert!(batch.errors.is_empty());
    }

    #[test]
    fn forms_need_a_sample() {
        let mut p = project(3, &[]);
        p.meta.state = ProjectState::TypologiesDefined;
        assert!(matches!(export_field_forms(&p), Err(Error::WrongState { .. })));
    }
}
