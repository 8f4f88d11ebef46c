//! Weighted aggregation of features, topographic peak prominence, and
//! thresholding into change points.

use serde::{Deserialize, Serialize};

use crate::discrepancy::FeatureMatrix;
use crate::error::{Error, Result};

/// Per-feature weights and the detection threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub weights: Vec<f64>,
    pub threshold: f64,
}

impl Hyperparams {
    pub fn new(weights: Vec<f64>, threshold: f64) -> Result<Self> {
        let params = Self { weights, threshold };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::InvalidParams("no weights".into()));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParams("weights must be finite and non-negative".into()));
        }
        if self.weights.iter().all(|w| *w == 0.0) {
            return Err(Error::InvalidParams("at least one weight must be positive".into()));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::InvalidParams(format!(
                "threshold must be positive, got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    /// Joint rescaling of weights and threshold; detections are unchanged.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            weights: self.weights.iter().map(|w| w * factor).collect(),
            threshold: self.threshold * factor,
        }
    }
}

/// Aggregated score before and after the prominence transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub raw: Vec<f64>,
    pub prominent: Vec<f64>,
}

impl ScoreVector {
    pub fn from_raw(raw: Vec<f64>) -> Self {
        let prominent = prominence(&raw);
        Self { raw, prominent }
    }

    pub fn max(&self) -> f64 {
        self.prominent.iter().copied().fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.prominent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prominent.is_empty()
    }

    pub fn detections(&self, threshold: f64) -> Detections {
        threshold_scores(&self.prominent, threshold)
    }
}

/// Sorted change-point indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detections {
    pub indices: Vec<usize>,
}

/// `sum_k weights[k] * features[k]`, pointwise.
pub fn aggregate(features: &FeatureMatrix, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != features.count() {
        return Err(Error::WeightCountMismatch {
            expected: features.count(),
            found: weights.len(),
        });
    }
    let mut out = vec![0.0; features.len()];
    for (f, &w) in features.features.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(f) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Topographic prominence of every strict local maximum; 0 elsewhere.
///
/// A peak's reference interval extends in each direction until a sample at
/// least as high as the peak (or the array boundary, which is included).
/// The prominence is the peak height minus the higher of the two interval
/// minima. A flat summit is represented by its leftmost sample; endpoints
/// are never peaks.
pub fn prominence(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n < 3 {
        return out;
    }
    let mut i = 1;
    while i < n - 1 {
        if f[i] <= f[i - 1] {
            i += 1;
            continue;
        }
        let height = f[i];
        let mut end = i;
        while end + 1 < n && f[end + 1] == height {
            end += 1;
        }
        if end + 1 < n && f[end + 1] < height {
            let mut left_min = height;
            for &v in f[..i].iter().rev() {
                if v >= height {
                    break;
                }
                left_min = left_min.min(v);
            }
            let mut right_min = height;
            for &v in &f[end + 1..] {
                if v >= height {
                    break;
                }
                right_min = right_min.min(v);
            }
            out[i] = height - left_min.max(right_min);
        }
        i = end + 1;
    }
    out
}

fn threshold_scores(prominent: &[f64], threshold: f64) -> Detections {
    Detections {
        indices: prominent
            .iter()
            .enumerate()
            .filter(|(_, &s)| s >= threshold)
            .map(|(i, _)| i)
            .collect(),
    }
}

pub fn detect(features: &FeatureMatrix, params: &Hyperparams) -> Result<(ScoreVector, Detections)> {
    params.validate()?;
    let score = ScoreVector::from_raw(aggregate(features, &params.weights)?);
    let detections = score.detections(params.threshold);
    Ok((score, detections))
}
