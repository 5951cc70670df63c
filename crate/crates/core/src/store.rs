//! On-disk project directories.
//!
//! ```text
//! <root>/masters.json
//! <root>/<id>/project.json
//! <root>/<id>/buildings.jsonl      one building per line, "kind" discriminates
//! <root>/<id>/typologies.json
//! <root>/<id>/scenarios.json
//! <root>/<id>/cartography/<Kind>.geojson
//! <root>/<id>/.lock                held by the single writer
//! ```
//!
//! Every document carries `schema_version`. Keys are written sorted and
//! buildings by id, so saving an unchanged project reproduces the same bytes.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::domain::{
    Building, LayerKind, MapLayer, Project, ProjectMeta, ProjectState, Scenario, Typology, SCHEMA_VERSION,
};
use crate::error::{Error, Result};
use crate::ingest::parse_layer;
use crate::masters::Masters;

pub const PROJECT_FILE: &str = "project.json";
pub const BUILDINGS_FILE: &str = "buildings.jsonl";
pub const TYPOLOGIES_FILE: &str = "typologies.json";
pub const SCENARIOS_FILE: &str = "scenarios.json";
pub const MASTERS_FILE: &str = "masters.json";
pub const CARTOGRAPHY_DIR: &str = "cartography";
pub const LOCK_FILE: &str = ".lock";
pub const MASTERS_LOCK_FILE: &str = ".masters.lock";

const KINDS: [&str; 2] = ["Cadastral", "Independent"];

/// Project ids double as directory names.
pub fn validate_project_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        && !id.starts_with('-');
    if ok {
        Ok(())
    } else {
        Err(Error::Invalid(format!("project id {id:?} must be 1-64 characters of [A-Za-z0-9_-]")))
    }
}

pub fn project_dir(root: &Path, id: &str) -> PathBuf {
    root.join(id)
}

/// Exclusive write access to one project directory, released on drop.
#[derive(Debug)]
pub struct ProjectLock {
    id: String,
    path: PathBuf,
}

/// Exclusive write access to the system masters, released on drop.
#[derive(Debug)]
pub struct MastersLock {
    path: PathBuf,
}

impl Drop for MastersLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn create_lock_file(path: &Path) -> Result<()> {
    match OpenOptions::new().write(true).create_new(true).open(path) {
        Ok(mut f) => {
            let _ = writeln!(f, "{}", std::process::id());
            Ok(())
        }
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::LockHeld(path.to_path_buf())),
        Err(e) => Err(Error::io(path, e)),
    }
}

pub fn lock_masters(root: &Path) -> Result<MastersLock> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let path = root.join(MASTERS_LOCK_FILE);
    create_lock_file(&path)?;
    Ok(MastersLock { path })
}

impl ProjectLock {
    pub fn project_id(&self) -> &str {
        &self.id
    }
}

impl Drop for ProjectLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn lock_project(root: &Path, id: &str) -> Result<ProjectLock> {
    validate_project_id(id)?;
    let dir = project_dir(root, id);
    if !dir.is_dir() {
        return Err(Error::UnknownProject(id.to_string()));
    }
    let path = dir.join(LOCK_FILE);
    create_lock_file(&path)?;
    Ok(ProjectLock { id: id.to_string(), path })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().expect("files live in a directory");
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Serializes through `Value` so object keys come out sorted.
fn versioned<T: Serialize>(value: &T) -> Map<String, Value> {
    let mut doc = match serde_json::to_value(value).expect("domain types serialize") {
        Value::Object(m) => m,
        other => Map::from_iter([("value".to_string(), other)]),
    };
    doc.insert("schema_version".into(), json!(SCHEMA_VERSION));
    doc
}

fn pretty(doc: &Map<String, Value>) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(doc).expect("json values serialize");
    bytes.push(b'\n');
    bytes
}

fn layer_geojson(layer: &MapLayer) -> Value {
    let features: Vec<Value> = layer
        .features
        .iter()
        .map(|f| {
            json!({
                "type": "Feature",
                "properties": { layer.key_property.as_str(): f.key },
                "geometry": f.geometry,
            })
        })
        .collect();
    json!({
        "type": "FeatureCollection",
        "features": features,
        "key_property": layer.key_property,
        "schema_version": SCHEMA_VERSION,
    })
}

/// Writes every file of the project, each through a temporary file and rename.
pub fn save_project(root: &Path, project: &Project, lock: &ProjectLock) -> Result<()> {
    if lock.id != project.meta.id {
        return Err(Error::Invalid(format!("lock for {:?} does not cover project {:?}", lock.id, project.meta.id)));
    }
    let dir = project_dir(root, &project.meta.id);
    let carto = dir.join(CARTOGRAPHY_DIR);
    fs::create_dir_all(&carto).map_err(|e| Error::io(&carto, e))?;

    write_atomic(&dir.join(PROJECT_FILE), &pretty(&versioned(&project.meta)))?;

    let mut lines = Vec::new();
    for b in project.buildings.values() {
        serde_json::to_writer(&mut lines, &versioned(b)).expect("json values serialize");
        lines.push(b'\n');
    }
    write_atomic(&dir.join(BUILDINGS_FILE), &lines)?;

    let mut doc = Map::new();
    doc.insert("schema_version".into(), json!(SCHEMA_VERSION));
    doc.insert("typologies".into(), serde_json::to_value(&project.typologies).expect("serializable"));
    write_atomic(&dir.join(TYPOLOGIES_FILE), &pretty(&doc))?;

    let mut doc = Map::new();
    doc.insert("schema_version".into(), json!(SCHEMA_VERSION));
    doc.insert("scenarios".into(), serde_json::to_value(&project.scenarios).expect("serializable"));
    write_atomic(&dir.join(SCENARIOS_FILE), &pretty(&doc))?;

    for kind in LayerKind::ALL {
        let path = carto.join(format!("{}.geojson", kind.as_str()));
        match project.layers.get(&kind) {
            Some(layer) => {
                let mut bytes = serde_json::to_vec(&layer_geojson(layer)).expect("serializable");
                bytes.push(b'\n');
                write_atomic(&path, &bytes)?;
            }
            None if path.exists() => fs::remove_file(&path).map_err(|e| Error::io(&path, e))?,
            None => {}
        }
    }
    Ok(())
}

fn corrupt(file: &str, line: usize, err: &serde_json::Error) -> Error {
    Error::CorruptFile {
        file: file.to_string(),
        line: line.max(err.line()),
        column: err.column(),
        message: err.to_string(),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Removes and checks `schema_version`, which must be present and not newer than ours.
fn take_version(file: &str, line: usize, doc: &mut Map<String, Value>) -> Result<()> {
    match doc.remove("schema_version").as_ref().and_then(Value::as_u64) {
        Some(v) if v > u64::from(SCHEMA_VERSION) => Err(Error::SchemaTooNew { file: file.to_string(), version: v }),
        Some(_) => Ok(()),
        None => Err(Error::CorruptFile {
            file: file.to_string(),
            line,
            column: 0,
            message: "missing or non-integer schema_version".into(),
        }),
    }
}

fn parse_doc(file: &str, line: usize, text: &str) -> Result<Map<String, Value>> {
    let mut doc: Map<String, Value> = serde_json::from_str(text).map_err(|e| corrupt(file, line, &e))?;
    take_version(file, line, &mut doc)?;
    Ok(doc)
}

fn from_doc<T: DeserializeOwned>(file: &str, line: usize, doc: Map<String, Value>) -> Result<T> {
    serde_json::from_value(Value::Object(doc)).map_err(|e| Error::CorruptFile {
        file: file.to_string(),
        line,
        column: 0,
        message: e.to_string(),
    })
}

fn field<T: DeserializeOwned>(file: &str, mut doc: Map<String, Value>, name: &str) -> Result<T> {
    let value = doc.remove(name).unwrap_or(Value::Array(Vec::new()));
    serde_json::from_value(value).map_err(|e| Error::CorruptFile {
        file: file.to_string(),
        line: 1,
        column: 0,
        message: format!("{name}: {e}"),
    })
}

fn load_buildings(path: &Path, scale_max: f64) -> Result<BTreeMap<u64, Building>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_doc(BUILDINGS_FILE, n, &line)?;
        let kind = doc.get("kind").and_then(Value::as_str).unwrap_or_default();
        if !KINDS.contains(&kind) {
            return Err(Error::UnknownKind(kind.to_string()));
        }
        let b: Building = from_doc(BUILDINGS_FILE, n, doc)?;
        b.check(scale_max).map_err(|e| Error::CorruptFile {
            file: BUILDINGS_FILE.to_string(),
            line: n,
            column: 0,
            message: e.to_string(),
        })?;
        if out.insert(b.id, b).is_some() {
            return Err(Error::CorruptFile {
                file: BUILDINGS_FILE.to_string(),
                line: n,
                column: 0,
                message: "duplicate building id".into(),
            });
        }
    }
    Ok(out)
}

fn load_layer(path: &Path, kind: LayerKind) -> Result<MapLayer> {
    let file = format!("{CARTOGRAPHY_DIR}/{}.geojson", kind.as_str());
    let text = read(path)?;
    let doc = parse_doc(&file, 1, &text)?;
    let key_property = doc.get("key_property").and_then(Value::as_str).unwrap_or("key").to_string();
    parse_layer(&text, kind, &key_property).map_err(|e| Error::CorruptFile {
        file,
        line: 1,
        column: 0,
        message: e.to_string(),
    })
}

pub fn load_project(root: &Path, id: &str) -> Result<Project> {
    validate_project_id(id)?;
    let dir = project_dir(root, id);
    if !dir.join(PROJECT_FILE).is_file() {
        return Err(Error::UnknownProject(id.to_string()));
    }
    let meta: ProjectMeta = from_doc(PROJECT_FILE, 1, parse_doc(PROJECT_FILE, 1, &read(&dir.join(PROJECT_FILE))?)?)?;
    let buildings = load_buildings(&dir.join(BUILDINGS_FILE), meta.scale.max_vi())?;
    let typologies: Vec<Typology> =
        field(TYPOLOGIES_FILE, parse_doc(TYPOLOGIES_FILE, 1, &read(&dir.join(TYPOLOGIES_FILE))?)?, "typologies")?;
    let scenarios: Vec<Scenario> =
        field(SCENARIOS_FILE, parse_doc(SCENARIOS_FILE, 1, &read(&dir.join(SCENARIOS_FILE))?)?, "scenarios")?;
    let mut layers = BTreeMap::new();
    for kind in LayerKind::ALL {
        let path = dir.join(CARTOGRAPHY_DIR).join(format!("{}.geojson", kind.as_str()));
        if path.is_file() {
            layers.insert(kind, load_layer(&path, kind)?);
        }
    }
    Ok(Project { meta, buildings, typologies, scenarios, layers })
}

/// Creates the directory of a new project and writes its first snapshot.
pub fn create_project(root: &Path, project: &Project) -> Result<()> {
    validate_project_id(&project.meta.id)?;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let dir = project_dir(root, &project.meta.id);
    match fs::create_dir(&dir) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
            return Err(Error::ProjectExists(project.meta.id.clone()))
        }
        Err(e) => return Err(Error::io(&dir, e)),
    }
    let lock = lock_project(root, &project.meta.id)?;
    save_project(root, project, &lock)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectEntry {
    pub id: String,
    pub name: String,
    pub state: ProjectState,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryError {
    pub id: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inventory {
    pub projects: Vec<ProjectEntry>,
    pub errors: Vec<InventoryError>,
}

/// Every project directory under `root`, sorted by id. Directories that fail
/// to load are reported in `errors`.
pub fn list_projects(root: &Path) -> Inventory {
    let mut inv = Inventory::default();
    let Ok(entries) = fs::read_dir(root) else {
        return inv;
    };
    let mut ids: Vec<String> = entries
        .flatten()
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|name| validate_project_id(name).is_ok())
        .collect();
    ids.sort();
    for id in ids {
        match load_project(root, &id) {
            Ok(p) => inv.projects.push(ProjectEntry { id, name: p.meta.name, state: p.meta.state, date: p.meta.date }),
            Err(e) => inv.errors.push(InventoryError { id, code: e.code().to_string(), message: e.to_string() }),
        }
    }
    inv
}

/// System masters, empty when the root has none yet.
pub fn load_masters(root: &Path) -> Result<Masters> {
    let path = root.join(MASTERS_FILE);
    if !path.exists() {
        return Ok(Masters::default());
    }
    from_doc(MASTERS_FILE, 1, parse_doc(MASTERS_FILE, 1, &read(&path)?)?)
}

pub fn save_masters(root: &Path, masters: &Masters, _lock: &MastersLock) -> Result<()> {
    write_atomic(&root.join(MASTERS_FILE), &pretty(&versioned(masters)))
}
