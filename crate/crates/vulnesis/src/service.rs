//! One method per workflow action. Mutations take the project lock, load the
//! last committed snapshot, apply the operation and save before returning;
//! a failed operation leaves the stored project untouched.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use vulnesis_core::geo::{self, BuildingFilter, Granularity, Metric};
use vulnesis_core::ingest::{self, ColumnMap, FieldRecord, MatchReport, Reconciliation, TypeCensus};
use vulnesis_core::masters::{Masters, TypeCategory};
use vulnesis_core::scenario::define_scenario;
use vulnesis_core::store::{self, MastersLock, ProjectLock};
use vulnesis_core::typology::{self, PropagationReport, SampleResult, SampleSpec};
use vulnesis_core::workflow::{self, RecomputeReport};
use vulnesis_core::{
    Building, Error, LayerKind, Project, ProjectMeta, ProjectState, Result, ScenarioMeta, SubTypologyKey, Typology,
    VulnerabilityScale,
};

use crate::forms::{export_field_forms, FieldForms};

const LOCK_WAIT: Duration = Duration::from_secs(5);

/// A directory of projects plus the shared masters file.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewProject {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub author: String,
    #[serde(default)]
    pub date: Option<NaiveDate>,
    #[serde(default)]
    pub cutoff_year: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ListEntry {
    Project(store::ProjectEntry),
    Broken { id: String, error: store::InventoryError },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectSummary {
    #[serde(flatten)]
    pub meta: ProjectMeta,
    pub counts: BTreeMap<&'static str, usize>,
    pub layers: Vec<LayerKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CadastreImport {
    pub imported: usize,
    pub errors: Vec<ingest::RowError>,
    pub census: TypeCensus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypesView {
    pub census: TypeCensus,
    pub reconciliation: Reconciliation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "lowercase")]
pub enum TypesAction {
    Reconcile,
    Register {
        category: TypeCategory,
        code: String,
        #[serde(default)]
        label: String,
    },
    Alias {
        category: TypeCategory,
        alias: String,
        code: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubtypologyView {
    pub key: SubTypologyKey,
    pub label: String,
    pub count: usize,
    pub typology_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NewTypology {
    FromMaster {
        master_id: String,
    },
    Named {
        name: String,
        #[serde(default)]
        description: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyList {
    pub keys: Vec<SubTypologyKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordError {
    pub row_number: usize,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldIngestReport {
    pub applied: Vec<ingest::FieldOutcome>,
    pub errors: Vec<RecordError>,
    pub stale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewScenario {
    #[serde(default)]
    pub name: Option<String>,
    pub ag: f64,
    #[serde(default)]
    pub meta: Option<ScenarioMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioView {
    pub id: String,
    pub name: String,
    pub ag: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meta: Option<ScenarioMeta>,
    pub buildings: usize,
    pub mean_d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildingList {
    pub total: usize,
    pub filtered: usize,
    pub buildings: Vec<Building>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    #[serde(default)]
    pub scale: Option<VulnerabilityScale>,
    #[serde(default)]
    pub vuln_thresholds: Option<[f64; 2]>,
    #[serde(default)]
    pub damage_thresholds: Option<[f64; 4]>,
}

fn scenario_view(s: &vulnesis_core::Scenario) -> ScenarioView {
    let n = s.damages.len();
    ScenarioView {
        id: s.id.clone(),
        name: s.name.clone(),
        ag: s.ag,
        meta: s.meta.clone(),
        buildings: n,
        mean_d: (n > 0).then(|| s.damages.values().map(|d| d.d).sum::<f64>() / n as f64),
    }
}

fn row_error(e: &ingest::RowError) -> RecordError {
    let v = serde_json::to_value(&e.reason).unwrap_or(Value::Null);
    RecordError {
        row_number: e.row_number,
        code: v["kind"].as_str().unwrap_or("InvalidRow").to_string(),
        message: match &v["detail"] {
            Value::String(s) => s.clone(),
            Value::Null => String::new(),
            other => other.to_string(),
        },
    }
}

/// Retries while another writer holds the lock, up to [`LOCK_WAIT`].
fn acquire<T>(mut attempt: impl FnMut() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    loop {
        match attempt() {
            Err(Error::LockHeld(_)) if start.elapsed() < LOCK_WAIT => std::thread::sleep(Duration::from_millis(10)),
            other => return other,
        }
    }
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Workspace {
        Workspace { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn lock(&self, id: &str) -> Result<ProjectLock> {
        acquire(|| store::lock_project(&self.root, id))
    }

    fn lock_masters(&self) -> Result<MastersLock> {
        acquire(|| store::lock_masters(&self.root))
    }

    fn read<T>(&self, id: &str, f: impl FnOnce(&Project) -> Result<T>) -> Result<T> {
        f(&store::load_project(&self.root, id)?)
    }

    fn write<T>(&self, id: &str, f: impl FnOnce(&mut Project) -> Result<T>) -> Result<T> {
        let lock = self.lock(id)?;
        let mut project = store::load_project(&self.root, id)?;
        let out = f(&mut project)?;
        store::save_project(&self.root, &project, &lock)?;
        Ok(out)
    }

    fn write_with_masters<T>(&self, id: &str, f: impl FnOnce(&mut Project, &mut Masters) -> Result<T>) -> Result<T> {
        let lock = self.lock(id)?;
        let masters_lock = self.lock_masters()?;
        let mut project = store::load_project(&self.root, id)?;
        let mut masters = store::load_masters(&self.root)?;
        let before = masters.clone();
        let out = f(&mut project, &mut masters)?;
        store::save_project(&self.root, &project, &lock)?;
        if masters != before {
            store::save_masters(&self.root, &masters, &masters_lock)?;
        }
        Ok(out)
    }

    pub fn masters(&self) -> Result<Masters> {
        store::load_masters(&self.root)
    }

    pub fn list(&self) -> Vec<ListEntry> {
        let inv = store::list_projects(&self.root);
        let mut out: Vec<ListEntry> = inv.projects.into_iter().map(ListEntry::Project).collect();
        out.extend(inv.errors.into_iter().map(|e| ListEntry::Broken { id: e.id.clone(), error: e }));
        out
    }

    pub fn create(&self, req: NewProject) -> Result<ProjectMeta> {
        let date = req.date.unwrap_or_else(|| chrono::Local::now().date_naive());
        let mut p = Project::new(req.id.trim(), req.name.trim(), date);
        if p.meta.name.is_empty() {
            return Err(Error::EmptyName);
        }
        p.meta.description = req.description;
        p.meta.author = req.author;
        if let Some(y) = req.cutoff_year {
            p.meta.cutoff_year = y;
        }
        store::create_project(&self.root, &p)?;
        Ok(p.meta)
    }

    pub fn summary(&self, id: &str) -> Result<ProjectSummary> {
        self.read(id, |p| {
            let count = |f: &dyn Fn(&Building) -> bool| p.buildings.values().filter(|b| f(b)).count();
            let counts = BTreeMap::from([
                ("buildings", p.buildings.len()),
                ("cadastral", count(&|b| b.cadastral_key.is_some())),
                ("independent", count(&|b| b.cadastral_key.is_none())),
                ("selected", count(&|b| b.selected_for_survey)),
                ("surveyed", count(&|b| b.surveyed)),
                ("typologies", p.typologies.len()),
                ("scenarios", p.scenarios.len()),
            ]);
            Ok(ProjectSummary { meta: p.meta.clone(), counts, layers: p.layers.keys().copied().collect() })
        })
    }

    pub fn import_cadastre(&self, id: &str, csv: &[u8], mapping: Option<&str>) -> Result<CadastreImport> {
        let map = match mapping {
            Some(m) if !m.trim().is_empty() => ColumnMap::from_pairs(m)?,
            _ => ColumnMap::default(),
        };
        let parsed = ingest::parse_cadastre(csv, &map)?;
        self.write(id, |p| {
            let imported = ingest::import_cadastre(p, &parsed.rows)?;
            Ok(CadastreImport { imported, errors: parsed.errors, census: ingest::discover_types(&parsed.rows) })
        })
    }

    pub fn types(&self, id: &str) -> Result<TypesView> {
        let masters = self.masters()?;
        self.read(id, |p| {
            let census = ingest::project_type_census(p);
            let reconciliation = ingest::reconcile_types(&census, &masters.types);
            Ok(TypesView { census, reconciliation })
        })
    }

    pub fn types_action(&self, id: &str, action: TypesAction) -> Result<TypesView> {
        store::load_project(&self.root, id)?;
        if action != TypesAction::Reconcile {
            let lock = self.lock_masters()?;
            let mut masters = store::load_masters(&self.root)?;
            match &action {
                TypesAction::Register { category, code, label } => {
                    masters.register_type(*category, code, label)?;
                }
                TypesAction::Alias { category, alias, code } => {
                    masters.add_alias(*category, alias, code)?;
                }
                TypesAction::Reconcile => {}
            }
            store::save_masters(&self.root, &masters, &lock)?;
        }
        self.types(id)
    }

    pub fn subtypologies(&self, id: &str) -> Result<Vec<SubtypologyView>> {
        self.read(id, |p| {
            let owners = p.assigned_keys();
            let mut counts: BTreeMap<&SubTypologyKey, usize> = BTreeMap::new();
            for k in p.buildings.values().filter_map(|b| b.subtypology_key.as_ref()) {
                *counts.entry(k).or_default() += 1;
            }
            Ok(counts
                .into_iter()
                .map(|(k, count)| SubtypologyView {
                    key: k.clone(),
                    label: k.to_string(),
                    count,
                    typology_id: owners.get(k).map(|t| t.to_string()),
                })
                .collect())
        })
    }

    pub fn typologies(&self, id: &str) -> Result<Vec<Typology>> {
        self.read(id, |p| Ok(p.typologies.clone()))
    }

    pub fn create_typology(&self, id: &str, req: NewTypology) -> Result<Typology> {
        self.write_with_masters(id, |p, m| {
            let t = match &req {
                NewTypology::FromMaster { master_id } => typology::import_master_typology(p, m, master_id)?,
                NewTypology::Named { name, description } => typology::create_typology(p, m, name, description)?,
            };
            Ok(t.clone())
        })
    }

    pub fn delete_typology(&self, id: &str, tid: &str) -> Result<Typology> {
        self.write(id, |p| typology::delete_typology(p, tid))
    }

    pub fn assign(&self, id: &str, tid: &str, keys: &[SubTypologyKey]) -> Result<Typology> {
        self.write(id, |p| typology::assign_subtypologies(p, tid, keys).cloned())
    }

    pub fn unassign(&self, id: &str, tid: &str, keys: &[SubTypologyKey]) -> Result<Typology> {
        self.write(id, |p| typology::unassign_subtypologies(p, tid, keys).cloned())
    }

    pub fn sample(&self, id: &str, spec: &SampleSpec) -> Result<SampleResult> {
        self.write(id, |p| typology::sample(p, spec))
    }

    pub fn field_forms(&self, id: &str) -> Result<FieldForms> {
        self.read(id, export_field_forms)
    }

    /// Applies a batch record by record; rejected records are reported and
    /// the accepted ones are committed.
    pub fn field_data(
        &self,
        id: &str,
        records: Vec<(usize, FieldRecord)>,
        mut errors: Vec<RecordError>,
    ) -> Result<FieldIngestReport> {
        let masters = self.masters()?;
        self.write(id, |p| {
            let state = p.state();
            if !matches!(state, ProjectState::FieldWork | ProjectState::UploadingResults) {
                return Err(Error::WrongState { op: "ingest_field_data", state });
            }
            let mut applied = Vec::new();
            for (row_number, r) in &records {
                match ingest::ingest_field_data(p, &masters.types, r) {
                    Ok(o) => applied.push(o),
                    Err(e) => errors.push(RecordError {
                        row_number: *row_number,
                        code: e.code().into(),
                        message: e.to_string(),
                    }),
                }
            }
            errors.sort_by_key(|e| e.row_number);
            Ok(FieldIngestReport { applied, errors, stale: p.meta.stale })
        })
    }

    pub fn field_data_csv(&self, id: &str, csv: &[u8]) -> Result<FieldIngestReport> {
        let batch = ingest::parse_field_data(csv)?;
        let errors = batch.errors.iter().map(row_error).collect();
        self.field_data(id, batch.records, errors)
    }

    pub fn field_data_json(&self, id: &str, records: Vec<FieldRecord>) -> Result<FieldIngestReport> {
        self.field_data(id, records.into_iter().enumerate().map(|(i, r)| (i + 1, r)).collect(), Vec::new())
    }

    pub fn scenarios(&self, id: &str) -> Result<Vec<ScenarioView>> {
        self.read(id, |p| Ok(p.scenarios.iter().map(scenario_view).collect()))
    }

    pub fn define_scenario(&self, id: &str, req: NewScenario) -> Result<ScenarioView> {
        self.write(id, |p| define_scenario(p, req.name, req.ag, req.meta).map(scenario_view))
    }

    pub fn propagate(&self, id: &str) -> Result<PropagationReport> {
        self.write(id, typology::propagate_vi)
    }

    pub fn buildings(&self, id: &str, filter: &BuildingFilter) -> Result<BuildingList> {
        self.read(id, |p| {
            let r = geo::filter_buildings(p, filter)?;
            Ok(BuildingList {
                total: r.total,
                filtered: r.filtered,
                buildings: r.buildings.into_iter().cloned().collect(),
            })
        })
    }

    pub fn map(&self, id: &str, metric: &Metric, granularity: Granularity) -> Result<String> {
        self.read(id, |p| geo::export_map(p, metric, granularity))
    }

    pub fn transition(&self, id: &str, target: ProjectState) -> Result<ProjectMeta> {
        let masters = self.masters()?;
        self.write(id, |p| {
            workflow::transition(p, &masters.types, target)?;
            Ok(p.meta.clone())
        })
    }

    pub fn cartography(&self, id: &str, kind: LayerKind, key_property: &str, text: &str) -> Result<MatchReport> {
        self.write(id, |p| ingest::load_cartography(p, text, kind, key_property))
    }

    pub fn settings(&self, id: &str, s: &Settings) -> Result<ProjectMeta> {
        self.write(id, |p| {
            if let Some(t) = s.vuln_thresholds {
                p.set_vuln_thresholds(t)?;
            }
            if let Some(t) = s.damage_thresholds {
                p.set_damage_thresholds(t)?;
            }
            if let Some(scale) = &s.scale {
                p.set_scale(scale.clone())?;
            }
            Ok(p.meta.clone())
        })
    }

    pub fn recompute(&self, id: &str) -> Result<RecomputeReport> {
        let masters = self.masters()?;
        self.write(id, |p| workflow::recompute_all(p, &masters.types))
    }
}
