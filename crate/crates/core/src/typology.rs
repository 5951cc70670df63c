//! Typologies over subtypology keys: membership, block-stratified sampling,
//! index propagation and per-typology statistics.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    BuildingId, BuildingKind, Extra, Project, ProjectState, SampleQuota, SubTypologyKey, Typology, TypologyStats,
    ViSource,
};
use crate::error::{Error, Result};
use crate::masters::Masters;
use crate::risk::{denormalize_vi, vulnerability_level};

fn ensure_membership_editable(project: &Project, op: &'static str) -> Result<()> {
    match project.state() {
        ProjectState::TypesReconciled | ProjectState::TypologiesDefined => Ok(()),
        state => Err(Error::WrongState { op, state }),
    }
}

fn next_typology_id(project: &Project) -> String {
    let n = project.typologies.iter().filter_map(|t| t.id.strip_prefix('T')?.parse::<u64>().ok()).max().unwrap_or(0);
    format!("T{}", n + 1)
}

fn push_typology<'p>(project: &'p mut Project, name: &str, description: &str) -> Result<&'p Typology> {
    let name = name.trim();
    if name.is_empty() {
        return Err(Error::EmptyName);
    }
    if project.typologies.iter().any(|t| t.name == name) {
        return Err(Error::DuplicateName(name.to_string()));
    }
    let typology = Typology {
        id: next_typology_id(project),
        name: name.to_string(),
        description: description.to_string(),
        subtypology_keys: BTreeSet::new(),
        sample_quota: None,
        stats: TypologyStats::default(),
        extra: Extra::new(),
    };
    project.typologies.push(typology);
    Ok(project.typologies.last().expect("just pushed"))
}

/// Adds an empty typology to the project and records it in the system masters.
pub fn create_typology<'p>(
    project: &'p mut Project,
    masters: &mut Masters,
    name: &str,
    description: &str,
) -> Result<&'p Typology> {
    ensure_membership_editable(project, "create_typology")?;
    let t = push_typology(project, name, description)?;
    masters.remember_typology(&t.name, &t.description);
    Ok(t)
}

/// Copies name and description of a master typology; membership starts empty.
pub fn import_master_typology<'p>(
    project: &'p mut Project,
    masters: &Masters,
    master_id: &str,
) -> Result<&'p Typology> {
    ensure_membership_editable(project, "import_master_typology")?;
    let m = masters.typology_master(master_id)?;
    push_typology(project, &m.name, &m.description)
}

fn typology_index(project: &Project, id: &str) -> Result<usize> {
    project.typologies.iter().position(|t| t.id == id).ok_or_else(|| Error::UnknownTypology(id.to_string()))
}

fn retag(project: &mut Project, keys: &BTreeSet<SubTypologyKey>, typology: Option<&str>) {
    for b in project.buildings.values_mut() {
        if b.subtypology_key.as_ref().is_some_and(|k| keys.contains(k)) {
            b.typology_id = typology.map(str::to_string);
        }
    }
}

/// Moves unassigned keys into a typology and tags their buildings.
pub fn assign_subtypologies<'p>(
    project: &'p mut Project,
    typology_id: &str,
    keys: &[SubTypologyKey],
) -> Result<&'p Typology> {
    ensure_membership_editable(project, "assign_subtypologies")?;
    let idx = typology_index(project, typology_id)?;
    let discovered = project.discovered_keys();
    let keys: BTreeSet<SubTypologyKey> = keys.iter().cloned().collect();
    {
        let assigned = project.assigned_keys();
        for k in &keys {
            if !discovered.contains(k) {
                return Err(Error::UnknownSubtypology(k.to_string()));
            }
            if let Some(owner) = assigned.get(k) {
                return Err(Error::KeyAlreadyAssigned { key: k.to_string(), typology: owner.to_string() });
            }
        }
    }
    retag(project, &keys, Some(typology_id));
    project.typologies[idx].subtypology_keys.extend(keys);
    refresh_stats(project, typology_id);
    Ok(&project.typologies[idx])
}

/// Returns member keys to the unassigned pool and clears their buildings' typology.
pub fn unassign_subtypologies<'p>(
    project: &'p mut Project,
    typology_id: &str,
    keys: &[SubTypologyKey],
) -> Result<&'p Typology> {
    ensure_membership_editable(project, "unassign_subtypologies")?;
    let idx = typology_index(project, typology_id)?;
    let keys: BTreeSet<SubTypologyKey> = keys.iter().cloned().collect();
    if let Some(k) = keys.iter().find(|k| !project.typologies[idx].subtypology_keys.contains(*k)) {
        return Err(Error::KeyNotMember(k.to_string()));
    }
    retag(project, &keys, None);
    project.typologies[idx].subtypology_keys.retain(|k| !keys.contains(k));
    refresh_stats(project, typology_id);
    Ok(&project.typologies[idx])
}

/// Removes a typology; its keys become unassigned.
pub fn delete_typology(project: &mut Project, typology_id: &str) -> Result<Typology> {
    ensure_membership_editable(project, "delete_typology")?;
    let idx = typology_index(project, typology_id)?;
    let removed = project.typologies.remove(idx);
    retag(project, &removed.subtypology_keys, None);
    Ok(removed)
}

/// Keys discovered in the project that no typology holds.
pub fn unassigned_keys(project: &Project) -> BTreeSet<SubTypologyKey> {
    let assigned = project.assigned_keys();
    project.discovered_keys().into_iter().filter(|k| !assigned.contains_key(k)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleMode {
    TotalCount,
    TotalPercent,
    PerTypologyCount,
    PerTypologyPercent,
}

/// How many buildings to select. `value` is a count or a percentage in
/// (0, 100] depending on `mode`; per-typology modes may override it per id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub mode: SampleMode,
    pub value: f64,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
    pub seed: u64,
}

impl SampleSpec {
    pub fn new(mode: SampleMode, value: f64, seed: u64) -> SampleSpec {
        SampleSpec { mode, value, overrides: BTreeMap::new(), seed }
    }

    fn check_value(&self, v: f64) -> Result<()> {
        let ok = match self.mode {
            SampleMode::TotalCount | SampleMode::PerTypologyCount => v >= 1.0 && v.fract() == 0.0,
            SampleMode::TotalPercent | SampleMode::PerTypologyPercent => v > 0.0 && v <= 100.0,
        };
        if ok && v.is_finite() {
            Ok(())
        } else {
            Err(Error::OutOfRange { what: "sample quota", value: v })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub selected: BTreeSet<BuildingId>,
    /// typology id -> number selected
    pub per_typology: BTreeMap<String, usize>,
    pub seed: u64,
    pub rng: String,
}

fn percent_quota(percent: f64, population: usize) -> usize {
    ((percent * population as f64 / 100.0).ceil() as usize).min(population)
}

/// Splits `total` over strata proportionally to population, by largest
/// remainder; ties go to the stratum listed first.
fn allocate(total: usize, populations: &[usize]) -> Vec<usize> {
    let sum: usize = populations.iter().sum();
    if sum == 0 {
        return vec![0; populations.len()];
    }
    let mut quotas: Vec<usize> = populations.iter().map(|p| total * p / sum).collect();
    let mut order: Vec<usize> = (0..populations.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(total * populations[i] % sum));
    let left = total - quotas.iter().sum::<usize>();
    for &i in order.iter().take(left) {
        quotas[i] += 1;
    }
    quotas
}

/// Picks `quota` ids spread across blocks: blocks are visited round-robin in
/// shuffled order, and each block yields its members in shuffled order.
fn draw(blocks: &BTreeMap<String, Vec<BuildingId>>, quota: usize, rng: &mut ChaCha8Rng) -> Vec<BuildingId> {
    let mut queues: Vec<Vec<BuildingId>> = blocks.values().cloned().collect();
    queues.shuffle(rng);
    for q in &mut queues {
        q.shuffle(rng);
    }
    let mut out = Vec::with_capacity(quota);
    let mut round = 0;
    while out.len() < quota {
        let before = out.len();
        for q in &queues {
            if out.len() == quota {
                break;
            }
            if let Some(id) = q.get(round) {
                out.push(*id);
            }
        }
        if out.len() == before {
            break;
        }
        round += 1;
    }
    out
}

/// Selects buildings for field survey, stratified by typology and spread
/// across cadastral blocks. Replaces any earlier selection.
pub fn sample(project: &mut Project, spec: &SampleSpec) -> Result<SampleResult> {
    let state = project.state();
    if state != ProjectState::TypologiesDefined {
        return Err(Error::WrongState { op: "sample", state });
    }
    spec.check_value(spec.value)?;
    for (tid, v) in &spec.overrides {
        project.typology(tid)?;
        spec.check_value(*v)?;
    }
    let unassigned =
        project.buildings.values().filter(|b| b.kind == BuildingKind::Cadastral && b.typology_id.is_none()).count();
    if unassigned > 0 {
        return Err(Error::UnassignedBuildingsRemain(unassigned));
    }

    let mut strata: Vec<(String, BTreeMap<String, Vec<BuildingId>>, usize)> =
        project.typologies.iter().map(|t| (t.id.clone(), BTreeMap::new(), 0)).collect();
    for b in project.buildings.values().filter(|b| b.kind == BuildingKind::Cadastral) {
        let tid = b.typology_id.as_deref().expect("checked above");
        let stratum = strata.iter_mut().find(|s| s.0 == tid).ok_or_else(|| Error::UnknownTypology(tid.to_string()))?;
        stratum.1.entry(b.block_key().unwrap_or_default()).or_default().push(b.id);
        stratum.2 += 1;
    }

    let populations: Vec<usize> = strata.iter().map(|s| s.2).collect();
    let total_population: usize = populations.iter().sum();
    let quotas: Vec<usize> = match spec.mode {
        SampleMode::TotalCount | SampleMode::TotalPercent => {
            let total = if spec.mode == SampleMode::TotalCount {
                spec.value as usize
            } else {
                percent_quota(spec.value, total_population)
            };
            if total > total_population {
                return Err(Error::QuotaExceedsPopulation {
                    stratum: project.meta.id.clone(),
                    quota: total,
                    population: total_population,
                });
            }
            allocate(total, &populations)
        }
        SampleMode::PerTypologyCount | SampleMode::PerTypologyPercent => {
            let mut quotas = Vec::with_capacity(strata.len());
            for (tid, _, population) in &strata {
                let v = spec.overrides.get(tid).copied().unwrap_or(spec.value);
                let q = match (spec.mode, *population) {
                    (_, 0) => 0,
                    (SampleMode::PerTypologyCount, _) => v as usize,
                    _ => percent_quota(v, *population),
                };
                if q > *population {
                    return Err(Error::QuotaExceedsPopulation {
                        stratum: tid.clone(),
                        quota: q,
                        population: *population,
                    });
                }
                quotas.push(q);
            }
            quotas
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut selected = BTreeSet::new();
    let mut per_typology = BTreeMap::new();
    for ((tid, blocks, _), quota) in strata.iter().zip(&quotas) {
        let picked = draw(blocks, *quota, &mut rng);
        per_typology.insert(tid.clone(), picked.len());
        selected.extend(picked);
    }

    for b in project.buildings.values_mut() {
        b.selected_for_survey = selected.contains(&b.id);
    }
    for (t, quota) in project.typologies.iter_mut().zip(&quotas) {
        t.sample_quota = Some(SampleQuota::Count(*quota as u32));
    }
    Ok(SampleResult { selected, per_typology, seed: spec.seed, rng: project.meta.rng.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypologyPropagation {
    pub typology_id: String,
    pub surveyed: usize,
    pub propagated: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_vi_norm: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PropagationReport {
    pub typologies: Vec<TypologyPropagation>,
    /// Typologies without any directly surveyed member.
    pub no_data: Vec<String>,
    pub propagated: usize,
}

/// Gives every unsurveyed cadastral building the mean normalized index of
/// its typology's directly surveyed members.
pub fn propagate_vi(project: &mut Project) -> Result<PropagationReport> {
    if !project.buildings.values().any(|b| b.vi_source == ViSource::Direct) {
        return Err(Error::NothingSurveyed);
    }
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for b in project.buildings.values().filter(|b| b.kind == BuildingKind::Cadastral) {
        if let (Some(tid), ViSource::Direct, Some(v)) = (&b.typology_id, b.vi_source, b.vi_norm) {
            let e = sums.entry(tid.clone()).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    let means: BTreeMap<String, f64> = sums.iter().map(|(t, (s, n))| (t.clone(), s / *n as f64)).collect();

    let scale = project.meta.scale.clone();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for b in project.buildings.values_mut() {
        if b.kind != BuildingKind::Cadastral || b.vi_source == ViSource::Direct {
            continue;
        }
        match b.typology_id.as_ref().and_then(|t| means.get(t).map(|m| (t, *m))) {
            Some((tid, mean)) => {
                b.vi_norm = Some(mean);
                b.vi = Some(denormalize_vi(mean, &scale));
                b.vi_source = ViSource::Propagated;
                *counts.entry(tid.clone()).or_default() += 1;
            }
            None if b.vi_source == ViSource::Propagated => {
                b.vi_norm = None;
                b.vi = None;
                b.vi_source = ViSource::None;
            }
            None => {}
        }
    }

    let mut report = PropagationReport::default();
    for t in &project.typologies {
        let propagated = counts.get(&t.id).copied().unwrap_or(0);
        report.propagated += propagated;
        if !means.contains_key(&t.id) {
            report.no_data.push(t.id.clone());
        }
        report.typologies.push(TypologyPropagation {
            typology_id: t.id.clone(),
            surveyed: sums.get(&t.id).map_or(0, |s| s.1),
            propagated,
            mean_vi_norm: means.get(&t.id).copied(),
        });
    }
    refresh_all_stats(project);
    Ok(report)
}

/// Count, surveyed count, mean normalized index and summed index of the
/// directly surveyed members, with the level of the mean.
pub fn typology_stats(project: &Project, typology_id: &str) -> Result<TypologyStats> {
    project.typology(typology_id)?;
    let mut stats = TypologyStats::default();
    let mut sum_norm = 0.0;
    let mut total = 0.0;
    for b in project.buildings.values().filter(|b| b.typology_id.as_deref() == Some(typology_id)) {
        stats.count += 1;
        if let (ViSource::Direct, Some(v), Some(vn)) = (b.vi_source, b.vi, b.vi_norm) {
            stats.surveyed += 1;
            sum_norm += vn;
            total += v;
        }
    }
    if stats.surveyed > 0 {
        let avg = sum_norm / stats.surveyed as f64;
        stats.avg_vi_norm = Some(avg);
        stats.total_vi = Some(total);
        stats.level = Some(vulnerability_level(avg, &project.meta.vuln_thresholds)?);
    }
    Ok(stats)
}

pub(crate) fn refresh_stats(project: &mut Project, typology_id: &str) {
    if let Ok(stats) = typology_stats(project, typology_id) {
        if let Ok(t) = project.typology_mut(typology_id) {
            t.stats = stats;
        }
    }
}

pub(crate) fn refresh_all_stats(project: &mut Project) {
    let ids: Vec<String> = project.typologies.iter().map(|t| t.id.clone()).collect();
    for id in ids {
        refresh_stats(project, &id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Building, Class, SurveyRecord};
    use crate::fixtures::{building, project};
    use crate::risk::{compute_vi, normalize_vi, VulnerabilityLevel};

    fn key_of(p: &Project, id: BuildingId) -> SubTypologyKey {
        p.buildings[&id].subtypology_key.clone().unwrap()
    }

    fn survey(b: &mut Building, classes: [Class; 11]) {
        let scale = crate::domain::VulnerabilityScale::default();
        let vi = compute_vi(&classes, &scale).unwrap();
        b.vi = Some(vi);
        b.vi_norm = Some(normalize_vi(vi, &scale).unwrap());
        b.vi_source = ViSource::Direct;
        b.surveyed = true;
        b.survey = Some(SurveyRecord { classes, raw: Default::default(), observer_id: String::new(), date: None });
    }

    fn two_key_project() -> Project {
        project(
            vec![
                building(1, "U1", "BLOQUE", 1960),
                building(2, "U1", "BLOQUE", 1990),
                building(3, "U2", "MADERA", 1960),
                building(4, "U2", "ADOBE", 1960),
            ],
            ProjectState::TypesReconciled,
        )
    }

    #[test]
    fn create_and_duplicate_names() {
        let mut p = two_key_project();
        let mut m = Masters::default();
        let t = create_typology(&mut p, &mut m, "Tipologia4", "confined masonry").unwrap();
        assert!(t.subtypology_keys.is_empty());
        assert_eq!(m.typologies.len(), 1);
        assert!(matches!(create_typology(&mut p, &mut m, "Tipologia4", ""), Err(Error::DuplicateName(_))));
        assert!(matches!(create_typology(&mut p, &mut m, "  ", ""), Err(Error::EmptyName)));
        p.meta.state = ProjectState::Sampled;
        assert!(matches!(create_typology(&mut p, &mut m, "Other", ""), Err(Error::WrongState { .. })));
    }

    #[test]
    fn import_from_master() {
        let mut p = two_key_project();
        let mut m = Masters::default();
        let id = m.remember_typology("Adobe", "earth walls").id.clone();
        assert_eq!(import_master_typology(&mut p, &m, &id).unwrap().description, "earth walls");
        assert!(matches!(import_master_typology(&mut p, &m, &id), Err(Error::DuplicateName(_))));
        assert!(matches!(import_master_typology(&mut p, &m, "M99"), Err(Error::UnknownMaster(_))));
    }

    #[test]
    fn assign_unassign_and_delete() {
        let mut p = two_key_project();
        let mut m = Masters::default();
        let t1 = create_typology(&mut p, &mut m, "A", "").unwrap().id.clone();
        let t2 = create_typology(&mut p, &mut m, "B", "").unwrap().id.clone();
        let (k1, k2, k3) = (key_of(&p, 1), key_of(&p, 2), key_of(&p, 3));

        let t = assign_subtypologies(&mut p, &t1, &[k1.clone(), k2.clone()]).unwrap();
        assert_eq!(t.subtypology_keys.len(), 2);
        assert_eq!(t.stats.count, 2);
        assert!(matches!(
            assign_subtypologies(&mut p, &t2, &[k3.clone(), k1.clone()]),
            Err(Error::KeyAlreadyAssigned { .. })
        ));
        assert_eq!(p.typology(&t2).unwrap().subtypology_keys.len(), 0);
        assert!(matches!(unassign_subtypologies(&mut p, &t2, std::slice::from_ref(&k1)), Err(Error::KeyNotMember(_))));

        unassign_subtypologies(&mut p, &t1, std::slice::from_ref(&k2)).unwrap();
        assign_subtypologies(&mut p, &t2, std::slice::from_ref(&k2)).unwrap();
        assert_eq!(p.buildings[&2].typology_id.as_deref(), Some(t2.as_str()));

        let removed = delete_typology(&mut p, &t1).unwrap();
        assert_eq!(removed.subtypology_keys.len(), 1);
        assert!(p.buildings[&1].typology_id.is_none());
        assert_eq!(unassigned_keys(&p).len(), 3);
        assert!(matches!(delete_typology(&mut p, &t1), Err(Error::UnknownTypology(_))));
    }

    fn sampled_fixture() -> Project {
        let mut bs = Vec::new();
        for id in 1..=20 {
            bs.push(building(id, &format!("U{}", id % 5), if id <= 6 { "ADOBE" } else { "BLOQUE" }, 1960));
        }
        let mut p = project(bs, ProjectState::TypesReconciled);
        let mut m = Masters::default();
        let a = create_typology(&mut p, &mut m, "adobe", "").unwrap().id.clone();
        let b = create_typology(&mut p, &mut m, "bloque", "").unwrap().id.clone();
        let (ka, kb) = (key_of(&p, 1), key_of(&p, 7));
        assign_subtypologies(&mut p, &a, &[ka]).unwrap();
        assign_subtypologies(&mut p, &b, &[kb]).unwrap();
        p.meta.state = ProjectState::TypologiesDefined;
        p
    }

    #[test]
    fn full_percent_selects_everyone() {
        let mut p = sampled_fixture();
        let r = sample(&mut p, &SampleSpec::new(SampleMode::PerTypologyPercent, 100.0, 1)).unwrap();
        assert_eq!(r.selected.len(), 20);
        assert!(p.buildings.values().all(|b| b.selected_for_survey));
    }

    #[test]
    fn count_above_population_is_rejected() {
        let mut p = sampled_fixture();
        let err = sample(&mut p, &SampleSpec::new(SampleMode::PerTypologyCount, 10.0, 1)).unwrap_err();
        assert!(matches!(err, Error::QuotaExceedsPopulation { quota: 10, population: 6, .. }));
        assert!(p.buildings.values().all(|b| !b.selected_for_survey));
    }

    #[test]
    fn quota_spreads_over_blocks() {
        let mut p = sampled_fixture();
        let r = sample(&mut p, &SampleSpec::new(SampleMode::PerTypologyCount, 4.0, 9)).unwrap();
        let blocks: BTreeSet<String> = r
            .selected
            .iter()
            .filter(|id| p.buildings[id].typology_id.as_deref() == Some("T2"))
            .map(|id| p.buildings[id].block_key().unwrap())
            .collect();
        assert_eq!(blocks.len(), 4);
        assert_eq!(r.per_typology["T1"], 4);
    }

    #[test]
    fn sampling_is_seeded() {
        let mut a = sampled_fixture();
        let mut b = sampled_fixture();
        let spec = SampleSpec::new(SampleMode::TotalPercent, 30.0, 42);
        let ra = sample(&mut a, &spec).unwrap();
        let rb = sample(&mut b, &spec).unwrap();
        assert_eq!(ra.selected, rb.selected);
        assert_eq!(ra.selected.len(), 6);
    }

    #[test]
    fn unassigned_buildings_block_sampling() {
        let mut p = sampled_fixture();
        p.buildings.get_mut(&1).unwrap().typology_id = None;
        let err = sample(&mut p, &SampleSpec::new(SampleMode::TotalCount, 3.0, 1)).unwrap_err();
        assert!(matches!(err, Error::UnassignedBuildingsRemain(1)));
        p.meta.state = ProjectState::Sampled;
        assert!(matches!(
            sample(&mut p, &SampleSpec::new(SampleMode::TotalCount, 3.0, 1)),
            Err(Error::WrongState { .. })
        ));
    }

    #[test]
    fn invalid_quota_values() {
        let mut p = sampled_fixture();
        for (mode, v) in [
            (SampleMode::TotalPercent, 0.0),
            (SampleMode::TotalPercent, 100.5),
            (SampleMode::TotalCount, 0.0),
            (SampleMode::PerTypologyCount, 2.5),
        ] {
            assert!(matches!(sample(&mut p, &SampleSpec::new(mode, v, 1)), Err(Error::OutOfRange { .. })));
        }
    }

    #[test]
    fn largest_remainder_allocation() {
        assert_eq!(allocate(6, &[6, 14]), vec![2, 4]);
        assert_eq!(allocate(3, &[1, 1, 1, 1]), vec![1, 1, 1, 0]);
        assert_eq!(allocate(0, &[5, 5]), vec![0, 0]);
        assert_eq!(allocate(7, &[3, 4]), vec![3, 4]);
    }

    #[test]
    fn propagation_mean_and_guards() {
        let mut p = sampled_fixture();
        assert!(matches!(propagate_vi(&mut p), Err(Error::NothingSurveyed)));
        // all-A gives 0, all-D gives 100 on the normalized scale
        survey(p.buildings.get_mut(&7).unwrap(), [Class::A; 11]);
        survey(p.buildings.get_mut(&8).unwrap(), [Class::D; 11]);
        let mut ind = Building::independent(99);
        survey(&mut ind, [Class::B; 11]);
        p.buildings.insert(99, ind);

        let r = propagate_vi(&mut p).unwrap();
        assert_eq!(r.no_data, vec!["T1".to_string()]);
        assert_eq!(r.propagated, 12);
        let b9 = &p.buildings[&9];
        assert_eq!(b9.vi_norm, Some(50.0));
        assert_eq!(b9.vi, Some(191.25));
        assert_eq!(b9.vi_source, ViSource::Propagated);
        assert_eq!(p.buildings[&7].vi_source, ViSource::Direct);
        assert_eq!(p.buildings[&1].vi_source, ViSource::None);
        assert_eq!(p.buildings[&99].vi_source, ViSource::Direct);
    }

    #[test]
    fn stats_over_direct_surveys() {
        let mut p = sampled_fixture();
        let t2 = typology_stats(&p, "T2").unwrap();
        assert_eq!((t2.count, t2.surveyed, t2.avg_vi_norm, t2.level), (14, 0, None, None));

        survey(p.buildings.get_mut(&7).unwrap(), [Class::A; 11]);
        let s = typology_stats(&p, "T2").unwrap();
        assert_eq!(s.avg_vi_norm, Some(0.0));
        assert_eq!(s.level, Some(VulnerabilityLevel::Baja));

        let mut classes = [Class::A; 11];
        classes[0] = Class::C;
        classes[2] = Class::B;
        survey(p.buildings.get_mut(&8).unwrap(), classes);
        survey(p.buildings.get_mut(&9).unwrap(), [Class::D; 11]);
        p.buildings.get_mut(&7).unwrap().vi_source = ViSource::None;
        let s = typology_stats(&p, "T2").unwrap();
        assert_eq!(s.total_vi, Some(410.0));
        let expected = (27.5 / 3.825 + 100.0) / 2.0;
        assert!((s.avg_vi_norm.unwrap() - expected).abs() < 1e-12);
        assert!(matches!(typology_stats(&p, "T9"), Err(Error::UnknownTypology(_))));
    }
}
