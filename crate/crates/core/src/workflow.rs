//! Guarded state transitions and full recomputation of derived values.

use serde::{Deserialize, Serialize};

use crate::domain::{BuildingKind, Project, ProjectState, ViSource};
use crate::error::{Error, Result};
use crate::ingest::{discover_subtypologies, subtypology_key};
use crate::masters::TypeMasters;
use crate::risk::{compute_vi, normalize_vi, validate_scale};
use crate::scenario::rerun;
use crate::typology::{propagate_vi, refresh_all_stats, unassigned_keys, PropagationReport};

/// Moves the project along one legal edge after checking what that edge needs:
///
/// * `TypesReconciled`: buildings imported and every type value resolved
///   (subtypology keys are tagged as a side effect)
/// * `TypologiesDefined`: at least one typology and no unassigned subtypology
/// * `Sampled`: at least one building selected for survey
/// * `Closed`: nothing stale
pub fn transition(project: &mut Project, masters: &TypeMasters, target: ProjectState) -> Result<()> {
    let from = project.state();
    if !from.can_transition_to(target) {
        return Err(Error::IllegalTransition { from, to: target });
    }
    match target {
        ProjectState::TypesReconciled => {
            if project.buildings.is_empty() {
                return Err(Error::PreconditionFailed("no cadastral buildings imported".into()));
            }
            discover_subtypologies(project, masters)?;
        }
        ProjectState::TypologiesDefined => {
            if project.typologies.is_empty() {
                return Err(Error::PreconditionFailed("no typology defined".into()));
            }
            let free = unassigned_keys(project).len();
            if free > 0 {
                return Err(Error::PreconditionFailed(format!("{free} subtypologies belong to no typology")));
            }
        }
        ProjectState::Sampled => {
            if !project.buildings.values().any(|b| b.selected_for_survey) {
                return Err(Error::PreconditionFailed("no building selected for survey".into()));
            }
        }
        ProjectState::Closed => project.ensure_fresh()?,
        _ => {}
    }
    project.advance_state(target)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecomputeReport {
    pub direct: usize,
    pub retagged: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propagation: Option<PropagationReport>,
    pub scenarios: usize,
}

/// Rebuilds everything derived from surveys: direct indices under the current
/// scale, subtypology keys and typology membership, propagated indices,
/// statistics and scenario damages. Clears the stale flag.
pub fn recompute_all(project: &mut Project, masters: &TypeMasters) -> Result<RecomputeReport> {
    let violations = validate_scale(&project.meta.scale);
    if !violations.is_empty() {
        return Err(Error::InvalidScale(violations));
    }
    let mut report = RecomputeReport::default();
    let scale = project.meta.scale.clone();
    let cutoff = project.meta.cutoff_year;
    let owners: std::collections::BTreeMap<_, String> =
        project.assigned_keys().into_iter().map(|(k, t)| (k.clone(), t.to_string())).collect();

    let mut updated = project.buildings.clone();
    for b in updated.values_mut() {
        if b.kind == BuildingKind::Cadastral && b.subtypology_key.is_some() {
            if let Some(key) = subtypology_key(b, masters, cutoff) {
                if b.subtypology_key.as_ref() != Some(&key) {
                    b.typology_id = owners.get(&key).cloned();
                    b.subtypology_key = Some(key);
                    report.retagged += 1;
                }
            }
        }
        if let (ViSource::Direct, Some(survey)) = (b.vi_source, &b.survey) {
            let vi = compute_vi(&survey.classes, &scale)?;
            b.vi = Some(vi);
            b.vi_norm = Some(normalize_vi(vi, &scale)?);
            report.direct += 1;
        }
    }
    project.buildings = updated;

    if report.direct > 0 {
        report.propagation = Some(propagate_vi(project)?);
    } else {
        refresh_all_stats(project);
    }
    let ids: Vec<String> = project.scenarios.iter().map(|s| s.id.clone()).collect();
    for id in &ids {
        rerun(project, id)?;
    }
    report.scenarios = ids.len();
    project.clear_stale();
    Ok(report)
}
