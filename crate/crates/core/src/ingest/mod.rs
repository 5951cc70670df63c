//! Getting data into a project: the cadastral table, type reconciliation,
//! subtypology discovery, cartography layers and field survey records.

mod cadastre;
mod cartography;
mod field;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{Building, Project, SubTypologyKey};
use crate::error::{Error, Result};
use crate::masters::{TypeCategory, TypeMasters};

pub use cadastre::{
    discover_types, import_cadastre, parse_cadastre, project_type_census, CadastreParse, CadastreRow, ColumnMap,
    RowError, RowProblem, TypeCensus, CADASTRE_FIELDS,
};
pub use cartography::{load_cartography, match_report, parse_layer, MatchReport};
pub use field::{
    ingest_field_data, parse_field_data, CadastralCorrection, FieldBatch, FieldOutcome, FieldRecord, FieldTarget,
    FIELD_COLUMNS,
};

pub(crate) fn building_type_value(b: &Building, category: TypeCategory) -> &str {
    match category {
        TypeCategory::Wall => &b.wall_type,
        TypeCategory::Roof => &b.roof_type,
        TypeCategory::Use => &b.use_type,
        TypeCategory::State => &b.state_type,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reconciliation {
    /// raw value -> master code
    pub matched: BTreeMap<TypeCategory, BTreeMap<String, String>>,
    pub unmatched: BTreeMap<TypeCategory, Vec<String>>,
}

impl Reconciliation {
    pub fn unmatched_count(&self) -> usize {
        self.unmatched.values().map(Vec::len).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.unmatched_count() == 0
    }
}

/// Splits every discovered raw value into matched (by code or alias) and unmatched.
pub fn reconcile_types(census: &TypeCensus, masters: &TypeMasters) -> Reconciliation {
    let mut out = Reconciliation::default();
    for cat in TypeCategory::ALL {
        let master = masters.get(cat);
        for (raw, _) in census.values(cat) {
            match master.resolve(raw) {
                Some(code) => {
                    out.matched.entry(cat).or_default().insert(raw.clone(), code.to_string());
                }
                None => out.unmatched.entry(cat).or_default().push(raw.clone()),
            }
        }
    }
    out
}

/// Subtypology key of a building, or `None` when a type value does not resolve
/// or the building has no construction year.
pub fn subtypology_key(b: &Building, masters: &TypeMasters, cutoff_year: i32) -> Option<SubTypologyKey> {
    let code = |cat| masters.get(cat).resolve(building_type_value(b, cat)).map(str::to_string);
    Some(SubTypologyKey {
        wall_type: code(TypeCategory::Wall)?,
        roof_type: code(TypeCategory::Roof)?,
        use_type: code(TypeCategory::Use)?,
        state_type: code(TypeCategory::State)?,
        pre_cutoff: b.construction_year? < cutoff_year,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtypologyCount {
    pub key: SubTypologyKey,
    pub count: usize,
}

/// Tags every cadastral building with its subtypology key and returns the
/// distinct keys with their counts, sorted by key.
pub fn discover_subtypologies(project: &mut Project, masters: &TypeMasters) -> Result<Vec<SubtypologyCount>> {
    let cutoff = project.meta.cutoff_year;
    let mut keys = Vec::new();
    let mut unresolved = BTreeSet::new();
    for b in project.buildings.values().filter(|b| b.cadastral_key.is_some()) {
        match subtypology_key(b, masters, cutoff) {
            Some(k) => keys.push((b.id, k)),
            None => {
                for cat in TypeCategory::ALL {
                    let raw = building_type_value(b, cat);
                    if masters.get(cat).resolve(raw).is_none() {
                        unresolved.insert((cat, raw.to_string()));
                    }
                }
                if b.construction_year.is_none() {
                    unresolved.insert((TypeCategory::State, format!("building {} without year", b.id)));
                }
            }
        }
    }
    if !unresolved.is_empty() {
        return Err(Error::UnreconciledTypes(unresolved.len()));
    }
    let mut counts: BTreeMap<SubTypologyKey, usize> = BTreeMap::new();
    for (id, key) in keys {
        *counts.entry(key.clone()).or_default() += 1;
        if let Some(b) = project.buildings.get_mut(&id) {
            b.subtypology_key = Some(key);
        }
    }
    Ok(counts.into_iter().map(|(key, count)| SubtypologyCount { key, count }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CadastralKey, Project};
    use crate::masters::Masters;
    use chrono::NaiveDate;

    fn masters() -> Masters {
        let mut m = Masters::default();
        m.register_type(TypeCategory::Wall, "BLOQUE", "").unwrap();
        m.register_type(TypeCategory::Roof, "ZINC", "").unwrap();
        m.register_type(TypeCategory::Use, "HAB", "").unwrap();
        m.register_type(TypeCategory::State, "BUENO", "").unwrap();
        m
    }

    fn building(id: u64, wall: &str, year: i32) -> Building {
        let key = CadastralKey {
            departamento: "08".into(),
            centro: "01".into(),
            distrito: "02".into(),
            manzana: "U206".into(),
            lote: id.to_string(),
            edificacion: "1".into(),
        };
        let mut b = Building::cadastral(id, key);
        b.wall_type = wall.into();
        b.roof_type = "ZINC".into();
        b.use_type = "HAB".into();
        b.state_type = "BUENO".into();
        b.construction_year = Some(year);
        b
    }

    fn project(buildings: Vec<Building>) -> Project {
        let mut p = Project::new("p", "p", NaiveDate::from_ymd_opt(2007, 1, 1).unwrap());
        for b in buildings {
            p.buildings.insert(b.id, b);
        }
        p
    }

    #[test]
    fn reconcile_by_code_alias_and_unknown() {
        let mut m = masters();
        m.add_alias(TypeCategory::Wall, "bloke", "BLOQUE").unwrap();
        let p = project(vec![building(1, "BLOQUE", 1960), building(2, "bloke", 1960), building(3, "tapial", 1960)]);
        let r = reconcile_types(&project_type_census(&p), &m.types);
        assert_eq!(r.matched[&TypeCategory::Wall]["BLOQUE"], "BLOQUE");
        assert_eq!(r.matched[&TypeCategory::Wall]["bloke"], "BLOQUE");
        assert_eq!(r.unmatched[&TypeCategory::Wall], vec!["tapial".to_string()]);
        assert!(!r.is_complete());

        m.register_type(TypeCategory::Wall, "TAPIAL", "rammed earth").unwrap();
        assert!(reconcile_types(&project_type_census(&p), &m.types).is_complete());
    }

    #[test]
    fn identical_buildings_share_a_key() {
        let mut p =
            project(vec![building(1, "BLOQUE", 1960), building(2, "BLOQUE", 1961), building(3, "BLOQUE", 1950)]);
        let keys = discover_subtypologies(&mut p, &masters().types).unwrap();
        assert_eq!(keys.len(), 1);
        assert_eq!(keys[0].count, 3);
        assert!(p.buildings.values().all(|b| b.subtypology_key.as_ref() == Some(&keys[0].key)));
    }

    #[test]
    fn cutoff_splits_keys() {
        let mut p = project(vec![building(1, "BLOQUE", 1970), building(2, "BLOQUE", 1980)]);
        let keys = discover_subtypologies(&mut p, &masters().types).unwrap();
        assert_eq!(keys.len(), 2);
        assert!(keys.iter().any(|k| k.key.pre_cutoff));
        assert!(keys.iter().any(|k| !k.key.pre_cutoff));
    }

    #[test]
    fn unreconciled_types_block_discovery() {
        let mut p = project(vec![building(1, "tapial", 1970)]);
        assert!(matches!(discover_subtypologies(&mut p, &masters().types), Err(Error::UnreconciledTypes(1))));
        assert!(p.buildings[&1].subtypology_key.is_none());
    }
}
