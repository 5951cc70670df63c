//! Vulnerability index, normalization, damage functions and classification bands.
//!
//! Everything here is a pure function of its arguments.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{Class, VulnerabilityScale};
use crate::error::{Error, Result};

const K_MAX: f64 = 45.0;
const W_MIN: f64 = 0.25;
const W_MAX: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScaleViolation {
    RowCount(usize),
    KOutOfRange { row: usize, class: Class, value: f64 },
    KNotNonDecreasing { row: usize },
    WOutOfRange { row: usize, value: f64 },
}

impl fmt::Display for ScaleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScaleViolation::RowCount(n) => write!(f, "scale has {n} rows, expected 11"),
            ScaleViolation::KOutOfRange { row, class, value } => {
                write!(f, "row {row}: K out of range for class {class}: {value}")
            }
            ScaleViolation::KNotNonDecreasing { row } => write!(f, "row {row}: K not non-decreasing"),
            ScaleViolation::WOutOfRange { row, value } => write!(f, "row {row}: W out of range: {value}"),
        }
    }
}

/// Lists every violated constraint; an empty list means the scale is usable.
/// Rows are reported 1-based.
pub fn validate_scale(scale: &VulnerabilityScale) -> Vec<ScaleViolation> {
    let mut out = Vec::new();
    if scale.rows.len() != VulnerabilityScale::PARAMETERS {
        out.push(ScaleViolation::RowCount(scale.rows.len()));
    }
    for (i, row) in scale.rows.iter().enumerate() {
        let row_no = i + 1;
        for class in Class::ALL {
            let value = row.k[class.index()];
            if !(0.0..=K_MAX).contains(&value) {
                out.push(ScaleViolation::KOutOfRange { row: row_no, class, value });
            }
        }
        if row.k.windows(2).any(|w| w[0].partial_cmp(&w[1]).is_none_or(|o| o.is_gt())) {
            out.push(ScaleViolation::KNotNonDecreasing { row: row_no });
        }
        if !(W_MIN..=W_MAX).contains(&row.w) {
            out.push(ScaleViolation::WOutOfRange { row: row_no, value: row.w });
        }
    }
    out
}

/// Weighted sum of the class scores of the eleven parameters.
pub fn compute_vi(classes: &[Class], scale: &VulnerabilityScale) -> Result<f64> {
    let report = validate_scale(scale);
    if !report.is_empty() {
        return Err(Error::InvalidScale(report));
    }
    if classes.len() != VulnerabilityScale::PARAMETERS {
        return Err(Error::WrongArity(classes.len()));
    }
    Ok(scale.rows.iter().zip(classes).map(|(row, class)| row.k[class.index()] * row.w).sum())
}

/// Rescales an index to 0..100 relative to the scale maximum.
pub fn normalize_vi(vi: f64, scale: &VulnerabilityScale) -> Result<f64> {
    let max = scale.max_vi();
    if !(0.0..=max).contains(&vi) || max <= 0.0 {
        return Err(Error::OutOfRange { what: "vulnerability index", value: vi });
    }
    Ok(100.0 * vi / max)
}

/// Inverse of [`normalize_vi`].
pub fn denormalize_vi(vi_norm: f64, scale: &VulnerabilityScale) -> f64 {
    vi_norm * scale.max_vi() / 100.0
}

/// Straight-line segment of a damage function: `d = slope * ag - intercept`,
/// clamped to [0, 1] when evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DamageCurve {
    pub vi_norm_anchor: f64,
    pub slope: f64,
    pub intercept: f64,
}

impl DamageCurve {
    pub fn eval(&self, ag: f64) -> f64 {
        (self.slope * ag - self.intercept).clamp(0.0, 1.0)
    }

    /// Acceleration at which damage starts.
    pub fn onset(&self) -> f64 {
        self.intercept / self.slope
    }

    /// Acceleration at which damage reaches total collapse.
    pub fn collapse(&self) -> f64 {
        (1.0 + self.intercept) / self.slope
    }
}

const fn anchor(vi_norm_anchor: f64, slope: f64, intercept: f64) -> DamageCurve {
    DamageCurve { vi_norm_anchor, slope, intercept }
}

/// Damage functions at normalized indices 0, 10, ..., 100.
pub const DAMAGE_CURVES: [DamageCurve; 11] = [
    anchor(0.0, 2.0786, 0.1188),
    anchor(10.0, 2.4086, 0.1226),
    anchor(20.0, 2.7861, 0.1194),
    anchor(30.0, 3.2845, 0.1261),
    anchor(40.0, 3.8356, 0.1301),
    anchor(50.0, 4.5161, 0.1452),
    anchor(60.0, 5.1376, 0.1376),
    anchor(70.0, 5.8947, 0.1368),
    anchor(80.0, 6.7470, 0.1325),
    anchor(90.0, 7.6712, 0.1371),
    anchor(100.0, 8.6154, 0.1231),
];

fn check_vi_norm(vi_norm: f64) -> Result<()> {
    if (0.0..=100.0).contains(&vi_norm) {
        Ok(())
    } else {
        Err(Error::OutOfRange { what: "normalized vulnerability index", value: vi_norm })
    }
}

/// Damage function for any normalized index. Anchors return the tabulated
/// coefficients unchanged; between anchors slope and intercept are each
/// interpolated linearly.
pub fn damage_curve(vi_norm: f64) -> Result<DamageCurve> {
    check_vi_norm(vi_norm)?;
    let pos = vi_norm / 10.0;
    let i = pos.floor() as usize;
    if i >= DAMAGE_CURVES.len() - 1 {
        return Ok(DAMAGE_CURVES[DAMAGE_CURVES.len() - 1]);
    }
    let t = pos - i as f64;
    let (lo, hi) = (DAMAGE_CURVES[i], DAMAGE_CURVES[i + 1]);
    if t == 0.0 {
        return Ok(lo);
    }
    Ok(DamageCurve {
        vi_norm_anchor: vi_norm,
        slope: lo.slope + t * (hi.slope - lo.slope),
        intercept: lo.intercept + t * (hi.intercept - lo.intercept),
    })
}

pub fn damage_index(vi_norm: f64, ag: f64) -> Result<f64> {
    if !(ag.is_finite() && ag >= 0.0) {
        return Err(Error::OutOfRange { what: "acceleration", value: ag });
    }
    Ok(damage_curve(vi_norm)?.eval(ag))
}

/// `(onset, collapse)` accelerations for a normalized index.
pub fn damage_bounds(vi_norm: f64) -> Result<(f64, f64)> {
    let c = damage_curve(vi_norm)?;
    Ok((c.onset(), c.collapse()))
}

/// An ordered set of named bands.
pub trait Level: Copy + Sized + 'static {
    const ALL: &'static [Self];
    fn name(self) -> &'static str;

    fn ordinal(self) -> usize {
        Self::ALL.iter().position(|l| l.name() == self.name()).unwrap_or(0)
    }

    fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownLevel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VulnerabilityLevel {
    Baja,
    Media,
    Alta,
}

impl Level for VulnerabilityLevel {
    const ALL: &'static [Self] = &[VulnerabilityLevel::Baja, VulnerabilityLevel::Media, VulnerabilityLevel::Alta];

    fn name(self) -> &'static str {
        match self {
            VulnerabilityLevel::Baja => "baja",
            VulnerabilityLevel::Media => "media",
            VulnerabilityLevel::Alta => "alta",
        }
    }
}

impl FromStr for VulnerabilityLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DamageLevel {
    Menor,
    Moderado,
    Severo,
    Total,
    Colapso,
}

impl Level for DamageLevel {
    const ALL: &'static [Self] =
        &[DamageLevel::Menor, DamageLevel::Moderado, DamageLevel::Severo, DamageLevel::Total, DamageLevel::Colapso];

    fn name(self) -> &'static str {
        match self {
            DamageLevel::Menor => "menor",
            DamageLevel::Moderado => "moderado",
            DamageLevel::Severo => "severo",
            DamageLevel::Total => "total",
            DamageLevel::Colapso => "colapso",
        }
    }
}

impl FromStr for DamageLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// Returns `levels[j]` where `j` counts the thresholds at or below `value`;
/// a value equal to a threshold falls in the upper band.
pub fn classify<L: Copy>(value: f64, thresholds: &[f64], levels: &[L]) -> Result<L> {
    if levels.len() != thresholds.len() + 1 {
        return Err(Error::BadBandConfig(format!(
            "{} levels need {} thresholds, got {}",
            levels.len(),
            levels.len().saturating_sub(1),
            thresholds.len()
        )));
    }
    if thresholds.iter().any(|t| !t.is_finite()) || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::BadBandConfig(format!("thresholds {thresholds:?} are not strictly ascending")));
    }
    if value.is_nan() {
        return Err(Error::OutOfRange { what: "classified value", value });
    }
    let j = thresholds.iter().filter(|t| **t <= value).count();
    Ok(levels[j])
}

pub fn vulnerability_level(vi_norm: f64, thresholds: &[f64; 2]) -> Result<VulnerabilityLevel> {
    classify(vi_norm, thresholds, VulnerabilityLevel::ALL)
}

pub fn damage_level(d: f64, thresholds: &[f64; 4]) -> Result<DamageLevel> {
    classify(d, thresholds, DamageLevel::ALL)
}
