//! Point-in-polygon, block assignment, aggregation at building / block /
//! project level, building filters and GeoJSON map export.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use geojson::{Feature, FeatureCollection, Geometry, GeometryValue, JsonObject};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::domain::{Building, BuildingId, Coord, Footprint, LayerKind, Project, Ring, ViSource, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::risk::{damage_level, vulnerability_level, Level, VulnerabilityLevel};

/// Note placed on every exported map: positions are emitted as stored.
pub const CRS_NOTE: &str = "planar, project-local CRS";

/// Level label for features without a value.
pub const NO_DATA: &str = "no-data";

fn on_segment(p: Coord, a: [f64; 2], b: [f64; 2]) -> bool {
    let cross = (b[0] - a[0]) * (p.y - a[1]) - (b[1] - a[1]) * (p.x - a[0]);
    cross == 0.0 && p.x >= a[0].min(b[0]) && p.x <= a[0].max(b[0]) && p.y >= a[1].min(b[1]) && p.y <= a[1].max(b[1])
}

/// Even-odd containment over all rings, so holes subtract. Points on any
/// edge count as inside.
pub fn point_in_polygon(p: Coord, rings: &[Ring]) -> Result<bool> {
    if let Some(r) = rings.iter().find(|r| r.len() < 4) {
        return Err(Error::DegenerateRing(r.len()));
    }
    let mut inside = false;
    for ring in rings {
        for edge in ring.windows(2) {
            let (a, b) = (edge[0], edge[1]);
            if on_segment(p, a, b) {
                return Ok(true);
            }
            if (a[1] > p.y) != (b[1] > p.y) {
                let x = a[0] + (p.y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
    }
    Ok(inside)
}

fn footprint_contains(f: &Footprint, p: Coord) -> Result<bool> {
    let [x0, y0, x1, y1] = f.bbox();
    if p.x < x0 || p.x > x1 || p.y < y0 || p.y > y1 {
        return Ok(false);
    }
    match f {
        Footprint::Polygon(rings) => point_in_polygon(p, rings),
        Footprint::MultiPolygon(polys) => {
            for rings in polys {
                if point_in_polygon(p, rings)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockAssignment {
    pub blocks: BTreeMap<BuildingId, String>,
    pub unassigned: Vec<BuildingId>,
}

/// Resolves each building to a feature of the Blocks layer. Coordinates win;
/// a building whose coordinates fall in no polygon, or that has none, falls
/// back to its cadastral block key when the layer holds that key.
pub fn assign_blocks(project: &Project) -> Result<BlockAssignment> {
    let layer = project.layers.get(&LayerKind::Blocks).ok_or(Error::NoBlocksLayer)?;
    let keys: BTreeSet<&str> = layer.features.iter().map(|f| f.key.as_str()).collect();
    let mut out = BlockAssignment::default();
    for b in project.buildings.values() {
        let mut hit = None;
        if let Some(c) = b.coord {
            for f in &layer.features {
                if footprint_contains(&f.geometry, c)? {
                    hit = Some(f.key.clone());
                    break;
                }
            }
        }
        let hit = hit.or_else(|| b.block_key().filter(|k| keys.contains(k.as_str())));
        match hit {
            Some(k) => {
                out.blocks.insert(b.id, k);
            }
            None => out.unassigned.push(b.id),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Granularity {
    Building,
    Block,
    Project,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Building => "building",
            Granularity::Block => "block",
            Granularity::Project => "project",
        }
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "building" | "buildings" => Ok(Granularity::Building),
            "block" | "blocks" | "manzana" => Ok(Granularity::Block),
            "project" => Ok(Granularity::Project),
            _ => Err(Error::Invalid(format!("unknown granularity {s:?}"))),
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "metric", content = "scenario_id", rename_all = "lowercase")]
pub enum Metric {
    Vulnerability,
    Damage(String),
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Vulnerability => "vulnerability",
            Metric::Damage(_) => "damage",
        }
    }

    pub fn scenario_id(&self) -> Option<&str> {
        match self {
            Metric::Vulnerability => None,
            Metric::Damage(s) => Some(s),
        }
    }

    /// Builds a metric from its name and, for damage, the scenario id.
    pub fn parse(name: &str, scenario: Option<&str>) -> Result<Metric> {
        match (name.to_ascii_lowercase().as_str(), scenario) {
            ("vulnerability", _) => Ok(Metric::Vulnerability),
            ("damage", Some(s)) => Ok(Metric::Damage(s.to_string())),
            ("damage", None) => Err(Error::Invalid("damage maps need a scenario id".into())),
            _ => Err(Error::Invalid(format!("unknown metric {name:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateFeature {
    pub key: String,
    pub value: Option<f64>,
    pub level: String,
    /// Members holding the metric.
    pub n: usize,
    /// All members, valued or not.
    pub members: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vi_source: Option<ViSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub granularity: Granularity,
    pub metric: Metric,
    pub features: Vec<AggregateFeature>,
}

fn metric_values(project: &Project, metric: &Metric) -> Result<BTreeMap<BuildingId, f64>> {
    Ok(match metric {
        Metric::Vulnerability => project.buildings.values().filter_map(|b| Some((b.id, b.vi_norm?))).collect(),
        Metric::Damage(sid) => project.scenario(sid)?.damages.iter().map(|(id, d)| (*id, d.d)).collect(),
    })
}

fn level_name(project: &Project, metric: &Metric, value: Option<f64>) -> Result<String> {
    Ok(match value {
        None => NO_DATA.to_string(),
        Some(v) => match metric {
            Metric::Vulnerability => vulnerability_level(v, &project.meta.vuln_thresholds)?.name().to_string(),
            Metric::Damage(_) => damage_level(v, &project.meta.damage_thresholds)?.name().to_string(),
        },
    })
}

fn group_feature(
    project: &Project,
    metric: &Metric,
    key: String,
    ids: &[BuildingId],
    values: &BTreeMap<BuildingId, f64>,
) -> Result<AggregateFeature> {
    let valued: Vec<f64> = ids.iter().filter_map(|id| values.get(id).copied()).collect();
    let value = (!valued.is_empty()).then(|| valued.iter().sum::<f64>() / valued.len() as f64);
    Ok(AggregateFeature {
        level: level_name(project, metric, value)?,
        key,
        value,
        n: valued.len(),
        members: ids.len(),
        vi_source: None,
    })
}

/// Block membership: the Blocks layer when loaded (every layer feature
/// appears, empty or not), cadastral block keys otherwise.
fn block_groups(project: &Project) -> Result<BTreeMap<String, Vec<BuildingId>>> {
    let mut groups: BTreeMap<String, Vec<BuildingId>> = BTreeMap::new();
    match project.layers.get(&LayerKind::Blocks) {
        Some(layer) => {
            for f in &layer.features {
                groups.entry(f.key.clone()).or_default();
            }
            for (id, key) in assign_blocks(project)?.blocks {
                groups.entry(key).or_default().push(id);
            }
        }
        None => {
            for b in project.buildings.values() {
                if let Some(k) = b.block_key() {
                    groups.entry(k).or_default().push(b.id);
                }
            }
        }
    }
    Ok(groups)
}

/// Means of the metric over buildings holding it, per building, per block or
/// for the whole project.
pub fn aggregate(project: &Project, metric: &Metric, granularity: Granularity) -> Result<AggregateResult> {
    project.ensure_fresh()?;
    let values = metric_values(project, metric)?;
    let mut features = Vec::new();
    match granularity {
        Granularity::Building => {
            for b in project.buildings.values() {
                let value = values.get(&b.id).copied();
                features.push(AggregateFeature {
                    key: b.id.to_string(),
                    value,
                    level: level_name(project, metric, value)?,
                    n: usize::from(value.is_some()),
                    members: 1,
                    vi_source: Some(b.vi_source),
                });
            }
        }
        Granularity::Block => {
            for (key, ids) in block_groups(project)? {
                features.push(group_feature(project, metric, key, &ids, &values)?);
            }
        }
        Granularity::Project => {
            let ids: Vec<BuildingId> = project.buildings.keys().copied().collect();
            features.push(group_feature(project, metric, project.meta.id.clone(), &ids, &values)?);
        }
    }
    Ok(AggregateResult { granularity, metric: metric.clone(), features })
}

fn footprint_geometry(f: &Footprint) -> Geometry {
    Geometry::new(match f {
        Footprint::Polygon(rings) => GeometryValue::new_polygon(rings.iter().map(|r| r.iter().copied())),
        Footprint::MultiPolygon(polys) => {
            GeometryValue::new_multi_polygon(polys.iter().map(|p| p.iter().map(|r| r.iter().copied())))
        }
    })
}

fn building_geometry(project: &Project, b: &Building) -> Option<Geometry> {
    let parcel = b.cadastral_key.as_ref().and_then(|k| {
        let key = k.parcel_key();
        project.layers.get(&LayerKind::Parcels)?.feature(&key).map(|f| footprint_geometry(&f.geometry))
    });
    parcel.or_else(|| b.coord.map(|c| Geometry::new(GeometryValue::new_point([c.x, c.y]))))
}

/// Thematic map as a GeoJSON FeatureCollection string. Features follow the
/// aggregate order; geometry comes from building points (or matching parcel
/// polygons), the Blocks layer or the ProjectArea layer.
pub fn export_map(project: &Project, metric: &Metric, granularity: Granularity) -> Result<String> {
    let geometry_source = match granularity {
        Granularity::Building => None,
        Granularity::Block => Some(project.layers.get(&LayerKind::Blocks).ok_or(Error::MissingLayer("block"))?),
        Granularity::Project => {
            Some(project.layers.get(&LayerKind::ProjectArea).ok_or(Error::MissingLayer("project"))?)
        }
    };
    let result = aggregate(project, metric, granularity)?;
    let mut features = Vec::with_capacity(result.features.len());
    for af in &result.features {
        let geometry = match geometry_source {
            None => {
                let id: BuildingId = af.key.parse().expect("building keys are ids");
                building_geometry(project, project.building(id)?)
            }
            Some(layer) if granularity == Granularity::Project => {
                layer.features.first().map(|f| footprint_geometry(&f.geometry))
            }
            Some(layer) => layer.feature(&af.key).map(|f| footprint_geometry(&f.geometry)),
        };
        let mut props = JsonObject::new();
        props.insert("key".into(), json!(af.key));
        props.insert("metric".into(), json!(metric.name()));
        props.insert("value".into(), json!(af.value));
        props.insert("level".into(), json!(af.level));
        props.insert("n".into(), json!(af.n));
        props.insert("members".into(), json!(af.members));
        props.insert("schema_version".into(), json!(SCHEMA_VERSION));
        if let Some(sid) = metric.scenario_id() {
            props.insert("scenario_id".into(), json!(sid));
        }
        if let Some(src) = af.vi_source {
            props.insert("vi_source".into(), serde_json::to_value(src).expect("plain enum"));
        }
        features.push(Feature { bbox: None, geometry, id: None, properties: Some(props), foreign_members: None });
    }
    let mut top = JsonObject::new();
    top.insert("crs_note".into(), Value::from(CRS_NOTE));
    top.insert("schema_version".into(), json!(SCHEMA_VERSION));
    top.insert("granularity".into(), json!(granularity.as_str()));
    let fc = FeatureCollection { bbox: None, features, foreign_members: Some(top) };
    Ok(fc.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurveyKind {
    Encuestadas,
    #[serde(rename = "NO_Encuestadas")]
    NoEncuestadas,
}

impl FromStr for SurveyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "encuestadas" => Ok(SurveyKind::Encuestadas),
            "no_encuestadas" => Ok(SurveyKind::NoEncuestadas),
            _ => Err(Error::Invalid(format!("unknown survey kind {s:?}"))),
        }
    }
}

/// Criteria combine conjunctively; absent criteria match everything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildingFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<BTreeSet<BuildingId>>,
    /// Encuestadas: selected for field survey.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survey_kind: Option<SurveyKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub typology_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vuln_level: Option<VulnerabilityLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterResult<'p> {
    pub total: usize,
    pub filtered: usize,
    pub buildings: Vec<&'p Building>,
}

pub fn filter_buildings<'p>(project: &'p Project, filter: &BuildingFilter) -> Result<FilterResult<'p>> {
    if let Some(tid) = &filter.typology_id {
        project.typology(tid)?;
    }
    let thresholds = project.meta.vuln_thresholds;
    let mut buildings = Vec::new();
    for b in project.buildings.values() {
        let level = match (filter.vuln_level, b.vi_norm) {
            (Some(_), Some(v)) => Some(vulnerability_level(v, &thresholds)?),
            _ => None,
        };
        let keep = filter.ids.as_ref().is_none_or(|ids| ids.contains(&b.id))
            && filter.survey_kind.is_none_or(|k| (k == SurveyKind::Encuestadas) == b.selected_for_survey)
            && filter.edited.is_none_or(|e| e == b.edited)
            && filter.typology_id.as_ref().is_none_or(|t| b.typology_id.as_ref() == Some(t))
            && filter.vuln_level.is_none_or(|l| level == Some(l));
        if keep {
            buildings.push(b);
        }
    }
    Ok(FilterResult { total: project.buildings.len(), filtered: buildings.len(), buildings })
}
