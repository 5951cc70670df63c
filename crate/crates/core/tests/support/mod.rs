//! Synthetic inventories shared by the integration tests.

#![allow(dead_code)]

use std::fmt::Write as _;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vulnesis_core::ingest::{
    import_cadastre, ingest_field_data, load_cartography, parse_cadastre, ColumnMap, FieldRecord, FieldTarget,
};
use vulnesis_core::masters::{Masters, TypeCategory};
use vulnesis_core::typology::{assign_subtypologies, create_typology, propagate_vi, sample, SampleMode, SampleSpec};
use vulnesis_core::workflow::transition;
use vulnesis_core::{Class, Coord, LayerKind, Project, ProjectState};

/// Raw cadastral spellings and the code each one stands for.
pub const WALLS: [(&str, &str); 6] = [
    ("BLOQUE", "BLOQUE"),
    ("Bloque de concreto", "BLOQUE"),
    ("ADOBE", "ADOBE"),
    ("adobe", "ADOBE"),
    ("MADERA", "MADERA"),
    ("TAQUEZAL", "TAQUEZAL"),
];
pub const ROOFS: [(&str, &str); 3] = [("ZINC", "ZINC"), ("Lamina zinc", "ZINC"), ("TEJA", "TEJA")];
pub const USES: [(&str, &str); 3] = [("HAB", "HAB"), ("Vivienda", "HAB"), ("COM", "COM")];
pub const STATES: [(&str, &str); 3] = [("BUENO", "BUENO"), ("REGULAR", "REGULAR"), ("MALO", "MALO")];

pub const BLOCK_SIZE: f64 = 100.0;
pub const GRID_COLUMNS: usize = 12;

pub fn date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2007, 6, 1).unwrap()
}

pub fn masters() -> Masters {
    let mut m = Masters::default();
    for (cat, vocab) in [
        (TypeCategory::Wall, &WALLS[..]),
        (TypeCategory::Roof, &ROOFS[..]),
        (TypeCategory::Use, &USES[..]),
        (TypeCategory::State, &STATES[..]),
    ] {
        for (raw, code) in vocab.iter().filter(|(r, c)| r == c) {
            m.register_type(cat, code, raw).unwrap();
        }
        for (raw, code) in vocab.iter().filter(|(r, c)| !r.eq_ignore_ascii_case(c)) {
            m.add_alias(cat, raw, code).unwrap();
        }
    }
    m
}

pub fn manzana(block: usize) -> String {
    format!("M{block:03}")
}

pub fn block_key(block: usize) -> String {
    format!("08-01-02-{}", manzana(block))
}

pub fn block_origin(block: usize) -> (f64, f64) {
    ((block % GRID_COLUMNS) as f64 * BLOCK_SIZE, (block / GRID_COLUMNS) as f64 * BLOCK_SIZE)
}

fn pick<'a>(rng: &mut ChaCha8Rng, vocab: &'a [(&'a str, &'a str)]) -> &'a str {
    vocab[rng.random_range(0..vocab.len())].0
}

/// Cadastral table with `per_block` buildings in each of `blocks` blocks.
pub fn cadastre_csv(blocks: usize, per_block: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = String::from("dep,centro,distrito,manzana,lote,edificacion,pared,techo,uso,estado,anio\n");
    for block in 0..blocks {
        for lote in 1..=per_block {
            let year = rng.random_range(1930..2007);
            writeln!(
                s,
                "08,01,02,{},{lote},1,{},{},{},{},{year}",
                manzana(block),
                pick(&mut rng, &WALLS),
                pick(&mut rng, &ROOFS),
                pick(&mut rng, &USES),
                pick(&mut rng, &STATES)
            )
            .unwrap();
        }
    }
    s
}

fn square(x: f64, y: f64, size: f64) -> String {
    format!("[[[{x},{y}],[{},{y}],[{},{}],[{x},{}],[{x},{y}]]]", x + size, x + size, y + size, y + size)
}

pub fn blocks_geojson(blocks: usize) -> String {
    let features: Vec<String> = (0..blocks)
        .map(|b| {
            let (x, y) = block_origin(b);
            format!(
                r#"{{"type":"Feature","properties":{{"CODIGO":"{}"}},"geometry":{{"type":"Polygon","coordinates":{}}}}}"#,
                block_key(b),
                square(x, y, BLOCK_SIZE)
            )
        })
        .collect();
    format!(r#"{{"type":"FeatureCollection","features":[{}]}}"#, features.join(","))
}

pub fn area_geojson(id: &str, blocks: usize) -> String {
    let rows = blocks.div_ceil(GRID_COLUMNS) as f64;
    let side = BLOCK_SIZE * GRID_COLUMNS as f64;
    format!(
        r#"{{"type":"FeatureCollection","features":[{{"type":"Feature","properties":{{"name":"{id}"}},"geometry":{{"type":"Polygon","coordinates":[[[0,0],[{side},0],[{side},{}],[0,{}],[0,0]]]}}}}]}}"#,
        rows * BLOCK_SIZE,
        rows * BLOCK_SIZE
    )
}

/// A project carried from cadastral import to propagated field results:
/// four typologies split by wall material, a `survey_percent` sample and a
/// survey of every selected building.
pub fn surveyed_project(blocks: usize, per_block: usize, survey_percent: f64, seed: u64) -> (Project, Masters) {
    let mut masters = masters();
    let mut p = Project::new("desk", "Desk study", date());

    let parsed = parse_cadastre(cadastre_csv(blocks, per_block, seed).as_bytes(), &ColumnMap::default()).unwrap();
    assert!(parsed.errors.is_empty(), "{:?}", parsed.errors);
    import_cadastre(&mut p, &parsed.rows).unwrap();
    transition(&mut p, &masters.types, ProjectState::TypesReconciled).unwrap();

    for wall in ["BLOQUE", "ADOBE", "MADERA", "TAQUEZAL"] {
        let tid = create_typology(&mut p, &mut masters, &format!("Muros de {wall}"), "").unwrap().id.clone();
        let keys: Vec<_> = p.discovered_keys().into_iter().filter(|k| k.wall_type == wall).collect();
        assign_subtypologies(&mut p, &tid, &keys).unwrap();
    }
    transition(&mut p, &masters.types, ProjectState::TypologiesDefined).unwrap();

    let picked = sample(&mut p, &SampleSpec::new(SampleMode::TotalPercent, survey_percent, seed)).unwrap();
    transition(&mut p, &masters.types, ProjectState::Sampled).unwrap();
    transition(&mut p, &masters.types, ProjectState::FieldWork).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for id in picked.selected {
        let block: usize = p.buildings[&id].cadastral_key.as_ref().unwrap().manzana[1..].parse().unwrap();
        let (x, y) = block_origin(block);
        let mut r = FieldRecord::new(FieldTarget::Existing(id));
        r.classes = (0..11).map(|_| Some(Class::ALL[rng.random_range(0..4)])).collect();
        r.coord = Some(Coord { x: x + rng.random_range(1.0..99.0), y: y + rng.random_range(1.0..99.0) });
        r.observer_id = Some("brigada-1".into());
        r.date = Some(date());
        ingest_field_data(&mut p, &masters.types, &r).unwrap();
    }
    propagate_vi(&mut p).unwrap();

    load_cartography(&mut p, &blocks_geojson(blocks), LayerKind::Blocks, "CODIGO").unwrap();
    load_cartography(&mut p, &area_geojson("desk", blocks), LayerKind::ProjectArea, "name").unwrap();
    (p, masters)
}
