//! Budgeted derivative-free search over weights and threshold, minimizing
//! `1 - F1` on the annotated part of the series.
//!
//! The search space is a seeded latin-hypercube design of `grid_size`
//! candidates. Of the `evaluations` budget, the incumbent is evaluated
//! first, then a global phase walks the design, and a local phase perturbs
//! the best point found so far with Gaussian steps of 10% of each range.
//! When the budget covers the whole design the search is exhaustive.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::active::AnnotationSet;
use crate::detect::{detect, Hyperparams};
use crate::discrepancy::FeatureMatrix;
use crate::error::{Error, Result};
use crate::eval::{match_points, prf};

/// Share of the non-incumbent budget spent on local refinement.
const LOCAL_FRACTION: f64 = 0.4;
/// Local step standard deviation, relative to each range.
const LOCAL_SIGMA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Upper bound of every weight; the lower bound is 0.
    pub weight_max: f64,
    /// Fixed threshold bounds. When `None` the range is anchored to the
    /// incumbent: `[0.5 * threshold, 2 * max score]`.
    #[serde(default)]
    pub threshold_range: Option<(f64, f64)>,
    pub grid_size: usize,
    pub evaluations: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            weight_max: 2.0,
            threshold_range: None,
            grid_size: 5000,
            evaluations: 50,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight_max.is_finite() && self.weight_max > 0.0) {
            return Err(Error::InvalidSearchSpace("weight_max must be positive".into()));
        }
        if let Some((lo, hi)) = self.threshold_range {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(Error::InvalidSearchSpace(format!(
                    "threshold range [{lo}, {hi}] must be positive and non-empty"
                )));
            }
        }
        if self.grid_size == 0 {
            return Err(Error::InvalidSearchSpace("grid_size must be at least 1".into()));
        }
        if self.evaluations == 0 || self.evaluations > self.grid_size {
            return Err(Error::InvalidSearchSpace(format!(
                "evaluations must lie in [1, grid_size = {}]",
                self.grid_size
            )));
        }
        Ok(())
    }

    /// Threshold bounds for a given incumbent and its peak score.
    pub fn threshold_bounds(&self, incumbent: &Hyperparams, max_score: f64) -> (f64, f64) {
        self.threshold_range.unwrap_or_else(|| {
            let lo = 0.5 * incumbent.threshold;
            let hi = (2.0 * max_score).max(2.0 * incumbent.threshold);
            (lo, hi)
        })
    }

    /// The latin-hypercube design: `grid_size` candidates.
    pub fn candidates(&self, n_weights: usize, bounds: (f64, f64), seed: u64) -> Vec<Hyperparams> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = self.grid_size;
        let dims = n_weights + 1;
        let columns: Vec<Vec<f64>> = (0..dims)
            .map(|dim| {
                let (lo, hi) = if dim < n_weights { (0.0, self.weight_max) } else { bounds };
                let mut strata: Vec<usize> = (0..g).collect();
                strata.shuffle(&mut rng);
                strata
                    .into_iter()
                    .map(|s| lo + (s as f64 + rng.random::<f64>()) / g as f64 * (hi - lo))
                    .collect()
            })
            .collect();
        (0..g)
            .map(|i| Hyperparams {
                weights: columns[..n_weights].iter().map(|c| c[i]).collect(),
                threshold: columns[n_weights][i],
            })
            .collect()
    }
}

/// Loss and the metrics behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub loss: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

impl ObjectiveValue {
    fn worst() -> Self {
        Self {
            loss: 1.0,
            f1: 0.0,
            precision: 0.0,
            recall: 0.0,
        }
    }
}

/// F1 of the detections that fall inside annotated windows against the
/// confirmed change points, with matching tolerance `eta`.
pub fn evaluate(
    params: &Hyperparams,
    features: &FeatureMatrix,
    labels: &AnnotationSet,
    eta: usize,
) -> Result<ObjectiveValue> {
    if labels.is_empty() {
        return Err(Error::NoAnnotations);
    }
    let (_, detections) = detect(features, params)?;
    let inside: Vec<usize> = detections
        .indices
        .into_iter()
        .filter(|&i| labels.is_covered(i))
        .collect();
    let report = match_points(&inside, labels.positives(), eta);
    let (precision, recall, f1) = prf(report.tp, inside.len(), labels.positives().len());
    Ok(ObjectiveValue {
        loss: 1.0 - f1,
        f1,
        precision,
        recall,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    pub params: Hyperparams,
    pub objective: ObjectiveValue,
    pub incumbent_objective: ObjectiveValue,
    pub evaluations: usize,
}

struct Search<'a> {
    features: &'a FeatureMatrix,
    labels: &'a AnnotationSet,
    eta: usize,
    best: Hyperparams,
    best_value: ObjectiveValue,
    count: usize,
}

impl Search<'_> {
    fn try_candidate(&mut self, candidate: Hyperparams) -> Result<()> {
        self.count += 1;
        // Degenerate candidates (all-zero weights) count as worst case.
        let value = if candidate.validate().is_ok() {
            evaluate(&candidate, self.features, self.labels, self.eta)?
        } else {
            ObjectiveValue::worst()
        };
        // Strict improvement only: earlier evaluations win ties.
        if value.loss < self.best_value.loss {
            self.best = candidate;
            self.best_value = value;
        }
        Ok(())
    }
}

/// Searches for hyperparameters with minimal loss on the annotations. The
/// incumbent is always evaluated, so the result is never worse than it.
pub fn optimize(
    features: &FeatureMatrix,
    labels: &AnnotationSet,
    space: &SearchSpace,
    incumbent: &Hyperparams,
    eta: usize,
    seed: u64,
) -> Result<Optimized> {
    space.validate()?;
    incumbent.validate()?;
    if labels.is_empty() {
        return Err(Error::NoAnnotations);
    }
    let n_weights = features.count();
    if incumbent.weights.len() != n_weights {
        return Err(Error::WeightCountMismatch {
            expected: n_weights,
            found: incumbent.weights.len(),
        });
    }
    let (incumbent_score, _) = detect(features, incumbent)?;
    let bounds = space.threshold_bounds(incumbent, incumbent_score.max());
    let design = space.candidates(n_weights, bounds, seed);

    let incumbent_objective = evaluate(incumbent, features, labels, eta)?;
    let mut search = Search {
        features,
        labels,
        eta,
        best: incumbent.clone(),
        best_value: incumbent_objective,
        count: 1,
    };

    let remaining = space.evaluations.saturating_sub(1);
    if space.evaluations >= space.grid_size {
        for candidate in design {
            search.try_candidate(candidate)?;
        }
    } else {
        let local = (remaining as f64 * LOCAL_FRACTION).round() as usize;
        let global = remaining - local;
        for candidate in design.into_iter().take(global) {
            search.try_candidate(candidate)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let weight_step = Normal::new(0.0, LOCAL_SIGMA * space.weight_max).expect("positive sigma");
        let threshold_step = Normal::new(0.0, LOCAL_SIGMA * (bounds.1 - bounds.0)).expect("positive sigma");
        for _ in 0..local {
            let center = &search.best;
            let candidate = Hyperparams {
                weights: center
                    .weights
                    .iter()
                    .map(|w| (w + weight_step.sample(&mut rng)).clamp(0.0, space.weight_max))
                    .collect(),
                threshold: (center.threshold + threshold_step.sample(&mut rng)).clamp(bounds.0, bounds.1),
            };
            search.try_candidate(candidate)?;
        }
    }

    Ok(Optimized {
        params: search.best,
        objective: search.best_value,
        incumbent_objective,
        evaluations: search.count,
    })
}
