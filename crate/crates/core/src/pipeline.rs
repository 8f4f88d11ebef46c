//! The unsupervised detector end to end: decomposition, feature extraction,
//! initial hyperparameters and thresholding.

use serde::{Deserialize, Serialize};

use crate::detect::{detect, Detections, Hyperparams, ScoreVector};
use crate::discrepancy::{extract_features, FeatureMatrix, Ridge};
use crate::error::{Error, Result};
use crate::init::{init_threshold, init_weights, InitThreshold};
use crate::signal_io::TimeSeries;
use crate::wavelet::{max_levels, mdwd, WaveletFilters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Decomposition depth `K`; the detector produces `K + 1` features.
    pub levels: usize,
    /// Discrepancy window size, in samples of each sub-band.
    pub window: usize,
    #[serde(default)]
    pub ridge: Ridge,
    #[serde(default = "InitThreshold::default_mode")]
    pub init: InitThreshold,
}

impl InitThreshold {
    fn default_mode() -> Self {
        Self::Elbow
    }
}

impl DetectorConfig {
    pub fn new(levels: usize, window: usize) -> Self {
        Self {
            levels,
            window,
            ridge: Ridge::default(),
            init: InitThreshold::Elbow,
        }
    }

    /// Deepest admissible decomposition for a length-`n` series: the
    /// coarsest sub-band must hold both the wavelet filter and two windows.
    pub fn max_levels(&self, n: usize, filters: &WaveletFilters) -> usize {
        max_levels(n, filters.len().max(2 * self.window))
    }
}

/// Output of one unsupervised run.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub features: FeatureMatrix,
    pub params: Hyperparams,
    pub score: ScoreVector,
    pub detections: Detections,
}

#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    filters: WaveletFilters,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Self {
        Self {
            config,
            filters: WaveletFilters::db2(),
        }
    }

    pub fn with_filters(config: DetectorConfig, filters: WaveletFilters) -> Self {
        Self { config, filters }
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn features(&self, x: &TimeSeries) -> Result<FeatureMatrix> {
        let n = x.len();
        let max_levels = self.config.max_levels(n, &self.filters);
        if self.config.levels == 0 || self.config.levels > max_levels {
            return Err(Error::TooManyLevels {
                levels: self.config.levels,
                n,
                max_levels,
            });
        }
        let bands = mdwd(x, self.config.levels, &self.filters)?;
        extract_features(&bands, self.config.window, n, &self.config.ridge)
    }

    /// Uniform weights and the configured initial threshold.
    pub fn initial_params(&self, features: &FeatureMatrix) -> Result<(Hyperparams, ScoreVector)> {
        let weights = init_weights(features.count() - 1);
        let score = ScoreVector::from_raw(crate::detect::aggregate(features, &weights)?);
        let threshold = match self.config.init {
            InitThreshold::Elbow => init_threshold(&score.prominent).threshold,
            InitThreshold::Max => {
                let max = score.max();
                if max > 0.0 {
                    max
                } else {
                    1.0
                }
            }
        };
        Ok((Hyperparams::new(weights, threshold)?, score))
    }

    pub fn run(&self, x: &TimeSeries) -> Result<DetectionResult> {
        let features = self.features(x)?;
        let (params, _) = self.initial_params(&features)?;
        let (score, detections) = detect(&features, &params)?;
        Ok(DetectionResult {
            features,
            params,
            score,
            detections,
        })
    }
}
