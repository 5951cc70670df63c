//! Earthquake scenarios: per-building damage for a given a/g.

use std::collections::BTreeMap;

use crate::domain::{canonical_ag, BuildingDamage, BuildingId, Extra, Project, Scenario, ScenarioMeta};
use crate::error::{Error, Result};
use crate::risk::{damage_index, damage_level};

/// Damage for every building that currently holds a normalized index.
pub(crate) fn compute_damages(project: &Project, ag: f64) -> Result<BTreeMap<BuildingId, BuildingDamage>> {
    let thresholds = project.meta.damage_thresholds;
    project
        .buildings
        .values()
        .filter_map(|b| b.vi_norm.map(|v| (b.id, v)))
        .map(|(id, v)| {
            let d = damage_index(v, ag)?;
            Ok((id, BuildingDamage { d, level: damage_level(d, &thresholds)? }))
        })
        .collect()
}

fn next_scenario_id(project: &Project) -> String {
    let n = project.scenarios.iter().filter_map(|s| s.id.strip_prefix('S')?.parse::<u64>().ok()).max().unwrap_or(0);
    format!("S{}", n + 1)
}

/// Adds a scenario and evaluates it right away. Accelerations are unique per
/// project, compared on their canonical decimal form.
pub fn define_scenario(
    project: &mut Project,
    name: Option<String>,
    ag: f64,
    meta: Option<ScenarioMeta>,
) -> Result<&Scenario> {
    if !(ag.is_finite() && ag > 0.0) {
        return Err(Error::InvalidAcceleration(ag));
    }
    let canon = canonical_ag(ag);
    if project.scenarios.iter().any(|s| canonical_ag(s.ag) == canon) {
        return Err(Error::DuplicateAcceleration(canon));
    }
    project.ensure_fresh()?;
    let damages = compute_damages(project, ag)?;
    let scenario = Scenario {
        id: next_scenario_id(project),
        name: name.filter(|n| !n.trim().is_empty()).unwrap_or_else(|| format!("a/g = {canon}")),
        ag,
        meta,
        damages,
        extra: Extra::new(),
    };
    project.scenarios.push(scenario);
    Ok(project.scenarios.last().expect("just pushed"))
}

/// Rebuilds the damage map of an existing scenario from current indices.
pub fn run_scenario<'p>(project: &'p mut Project, id: &str) -> Result<&'p Scenario> {
    project.ensure_fresh()?;
    rerun(project, id)
}

pub(crate) fn rerun<'p>(project: &'p mut Project, id: &str) -> Result<&'p Scenario> {
    let ag = project.scenario(id)?.ag;
    let damages = compute_damages(project, ag)?;
    let scenario =
        project.scenarios.iter_mut().find(|s| s.id == id).ok_or_else(|| Error::UnknownScenario(id.to_string()))?;
    scenario.damages = damages;
    Ok(scenario)
}
