//! Semantic compression cost: the piecewise-linear computation overhead
//! `Q(rho) = max_m (A_m rho + B_m)` and the resulting computation power.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One affine piece `slope * rho + intercept` of the overhead curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub slope: f64,
    pub intercept: f64,
}

impl Segment {
    pub const fn new(slope: f64, intercept: f64) -> Self {
        Self { slope, intercept }
    }

    pub fn at(&self, rho: f64) -> f64 {
        self.slope * rho + self.intercept
    }
}

/// Per-user compression profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionProfile {
    pub segments: Vec<Segment>,
    pub rho_min: f64,
}

/// A violated profile invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileViolation {
    NoSegments,
    NonNegativeSlope { segment: usize, slope: f64 },
    NonPositiveIntercept { segment: usize, intercept: f64 },
    /// `Q(1)` must be exactly zero: no compression costs nothing.
    NonZeroAtOne { value: f64 },
    RhoMinOutOfRange { rho_min: f64 },
}

impl std::fmt::Display for ProfileViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::NoSegments => write!(f, "profile has no segments"),
            Self::NonNegativeSlope { segment, slope } => {
                write!(f, "segment {segment} has non-negative slope {slope}")
            }
            Self::NonPositiveIntercept { segment, intercept } => {
                write!(f, "segment {segment} has non-positive intercept {intercept}")
            }
            Self::NonZeroAtOne { value } => write!(f, "overhead at rho = 1 is {value}, expected 0"),
            Self::RhoMinOutOfRange { rho_min } => write!(f, "rho_min {rho_min} outside (0, 1]"),
        }
    }
}

/// Tolerance on `Q(1) = 0`.
const ZERO_AT_ONE_TOL: f64 = 1e-9;

impl CompressionProfile {
    pub fn new(segments: Vec<Segment>, rho_min: f64) -> Self {
        Self { segments, rho_min }
    }

    /// Three segments with steepening slope and `rho_min = 0.2`.
    pub fn default_profile() -> Self {
        Self::new(
            vec![Segment::new(-1.0, 1.0), Segment::new(-3.0, 2.2), Segment::new(-8.0, 5.0)],
            0.2,
        )
    }

    /// Evaluates `max_m (A_m rho + B_m)` with no range checks.
    pub fn overhead_unchecked(&self, rho: f64) -> f64 {
        self.segments.iter().map(|s| s.at(rho)).fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Default for CompressionProfile {
    fn default() -> Self {
        Self::default_profile()
    }
}

pub fn validate_profile(profile: &CompressionProfile) -> Vec<ProfileViolation> {
    let mut out = Vec::new();
    if profile.segments.is_empty() {
        out.push(ProfileViolation::NoSegments);
    }
    for (i, s) in profile.segments.iter().enumerate() {
        if !(s.slope < 0.0) {
            out.push(ProfileViolation::NonNegativeSlope { segment: i, slope: s.slope });
        }
        if !(s.intercept > 0.0) {
            out.push(ProfileViolation::NonPositiveIntercept { segment: i, intercept: s.intercept });
        }
    }
    if !profile.segments.is_empty() {
        let q1 = profile.overhead_unchecked(1.0);
        if q1.abs() > ZERO_AT_ONE_TOL {
            out.push(ProfileViolation::NonZeroAtOne { value: q1 });
        }
    }
    if !(profile.rho_min > 0.0 && profile.rho_min <= 1.0) {
        out.push(ProfileViolation::RhoMinOutOfRange { rho_min: profile.rho_min });
    }
    out
}

/// Computation overhead `Q(rho)` for `rho` in `[rho_min, 1]`.
pub fn overhead(profile: &CompressionProfile, rho: f64) -> Result<f64> {
    // a hair of slack so values produced by an LP at the bounds are accepted
    let eps = 1e-12;
    if !(rho >= profile.rho_min - eps && rho <= 1.0 + eps) {
        return Err(Error::Domain(format!(
            "compression ratio {rho} outside [{}, 1]",
            profile.rho_min
        )));
    }
    Ok(profile.overhead_unchecked(rho).max(0.0))
}

/// `eta * sum_k Q_k(rho_k)`, in watts.
pub fn computation_power(profiles: &[CompressionProfile], rho: &[f64], eta: f64) -> Result<f64> {
    if profiles.len() != rho.len() {
        return Err(Error::Dimension(format!(
            "{} profiles but {} compression ratios",
            profiles.len(),
            rho.len()
        )));
    }
    let total = profiles
        .iter()
        .zip(rho)
        .map(|(p, r)| overhead(p, *r))
        .sum::<Result<f64>>()?;
    Ok(eta * total)
}
