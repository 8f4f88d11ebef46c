//! Initial hyperparameters: uniform weights and an elbow threshold taken at
//! the maximum-curvature point of the sorted, normalized score profile.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores sorted in decreasing order and min-max normalized, on the uniform
/// grid `t_m = m / (n - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedScoreCurve {
    pub t: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Time index of each curve point.
    pub order: Vec<usize>,
    pub min: f64,
    pub max: f64,
}

impl SortedScoreCurve {
    /// Maps a normalized value back to the score scale.
    pub fn denormalize(&self, g: f64) -> f64 {
        self.min + g * (self.max - self.min)
    }
}

/// Curvature at interior grid points: `kappa[j]` belongs to grid point `j + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureProfile {
    pub kappa: Vec<f64>,
}

impl CurvatureProfile {
    /// Grid index of the maximum curvature. Values within a relative 1e-9
    /// of the maximum count as ties, and the smallest index wins, so the
    /// choice survives rounding noise from rescaled inputs.
    pub fn argmax(&self) -> usize {
        let max = self.kappa.iter().copied().fold(0.0, f64::max);
        let best = self
            .kappa
            .iter()
            .position(|&k| k >= max * (1.0 - 1e-9))
            .unwrap_or(0);
        best + 1
    }
}

pub fn build_curve(scores: &[f64]) -> Result<SortedScoreCurve> {
    let n = scores.len();
    if n < 3 {
        return Err(Error::DegenerateScores);
    }
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return Err(Error::DegenerateScores);
    }
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps earlier time indices first among ties.
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let range = max - min;
    let gamma = order.iter().map(|&i| (scores[i] - min) / range).collect();
    let t = (0..n).map(|m| m as f64 / (n - 1) as f64).collect();
    Ok(SortedScoreCurve {
        t,
        gamma,
        order,
        min,
        max,
    })
}

/// Central-difference curvature `|s''| / (1 + s'^2)^(3/2)` on the uniform
/// grid `t in [0, 1]`.
pub fn curvature(gamma: &[f64]) -> Result<CurvatureProfile> {
    let n = gamma.len();
    if n < 3 {
        return Err(Error::DegenerateScores);
    }
    curvature_with_spacing(gamma, 1.0 / (n - 1) as f64)
}

/// Central-difference curvature with an explicit grid spacing `h`.
pub fn curvature_with_spacing(gamma: &[f64], h: f64) -> Result<CurvatureProfile> {
    if gamma.len() < 3 {
        return Err(Error::DegenerateScores);
    }
    let kappa = gamma
        .windows(3)
        .map(|w| {
            let d1 = (w[2] - w[0]) / (2.0 * h);
            let d2 = (w[2] - 2.0 * w[1] + w[0]) / (h * h);
            d2.abs() / (1.0 + d1 * d1).powf(1.5)
        })
        .collect();
    Ok(CurvatureProfile { kappa })
}

/// How the initial threshold was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitThreshold {
    /// Maximum-curvature elbow of the sorted score profile.
    Elbow,
    /// The largest score.
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElbowThreshold {
    pub threshold: f64,
    /// Elbow location on the curve grid; `None` when the fallback was used.
    pub t_star: Option<f64>,
    /// Normalized curve value at the elbow.
    pub normalized: Option<f64>,
}

/// Elbow threshold on the score scale.
///
/// Central differences are taken per rank step of the sorted profile, so the
/// elbow is the sharpest change in slope between consecutive ranked scores.
/// The threshold is the score at the elbow. An elbow on the floor value
/// would select everything, so it is lifted to the midpoint between the
/// floor and the next distinct score. Constant profiles yield `max + 1`,
/// which detects nothing.
pub fn init_threshold(scores: &[f64]) -> ElbowThreshold {
    let fallback = || ElbowThreshold {
        threshold: scores.iter().copied().fold(0.0, f64::max) + 1.0,
        t_star: None,
        normalized: None,
    };
    let Ok(curve) = build_curve(scores) else {
        return fallback();
    };
    let Ok(profile) = curvature_with_spacing(&curve.gamma, 1.0) else {
        return fallback();
    };
    let m = profile.argmax();
    let mut threshold = scores[curve.order[m]];
    let mut normalized = curve.gamma[m];
    if threshold <= curve.min {
        let next = curve.gamma[..m]
            .iter()
            .rposition(|&g| g > normalized)
            .map(|k| scores[curve.order[k]]);
        match next {
            Some(v) => {
                threshold = 0.5 * (curve.min + v);
                normalized = (threshold - curve.min) / (curve.max - curve.min);
            }
            None => return fallback(),
        }
    }
    if threshold.is_nan() || threshold <= 0.0 {
        return fallback();
    }
    ElbowThreshold {
        threshold,
        t_star: Some(curve.t[m]),
        normalized: Some(normalized),
    }
}

/// Uniform unit weights for `levels + 1` features.
pub fn init_weights(levels: usize) -> Vec<f64> {
    vec![1.0; levels + 1]
}
