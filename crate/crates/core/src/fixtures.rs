//! Small in-memory projects shared by unit tests.

use chrono::NaiveDate;

use crate::domain::{Building, CadastralKey, Project, ProjectState};
use crate::ingest::subtypology_key;
use crate::masters::{Masters, TypeCategory};

pub fn masters() -> Masters {
    let mut m = Masters::default();
    for (cat, codes) in [
        (TypeCategory::Wall, &["BLOQUE", "MADERA", "ADOBE"][..]),
        (TypeCategory::Roof, &["ZINC", "TEJA"][..]),
        (TypeCategory::Use, &["HAB", "COM"][..]),
        (TypeCategory::State, &["BUENO", "MALO"][..]),
    ] {
        for code in codes {
            m.register_type(cat, code, "").unwrap();
        }
    }
    m
}

pub fn key(manzana: &str, lote: u64) -> CadastralKey {
    CadastralKey {
        departamento: "08".into(),
        centro: "01".into(),
        distrito: "02".into(),
        manzana: manzana.into(),
        lote: lote.to_string(),
        edificacion: "1".into(),
    }
}

pub fn building(id: u64, manzana: &str, wall: &str, year: i32) -> Building {
    let mut b = Building::cadastral(id, key(manzana, id));
    b.wall_type = wall.into();
    b.roof_type = "ZINC".into();
    b.use_type = "HAB".into();
    b.state_type = "BUENO".into();
    b.construction_year = Some(year);
    b.subtypology_key = subtypology_key(&b, &masters().types, 1972);
    b
}

pub fn project(buildings: impl IntoIterator<Item = Building>, state: ProjectState) -> Project {
    let mut p = Project::new("p", "p", NaiveDate::from_ymd_opt(2007, 7, 1).unwrap());
    for b in buildings {
        p.buildings.insert(b.id, b);
    }
    p.meta.state = state;
    p
}
