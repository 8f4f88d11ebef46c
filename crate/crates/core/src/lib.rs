//! Multiresolution change-point detection for multivariate time series.
//!
//! The unsupervised detector decomposes each channel with a multilevel
//! wavelet transform, scores every sub-band with a sliding-window Gaussian
//! discrepancy, resamples the scores to the original time axis, combines
//! them with per-level weights and keeps the peaks whose prominence clears a
//! threshold. The [`active`] module refines the weights and the threshold
//! from labels gathered on queried windows.

pub mod active;
pub mod detect;
pub mod discrepancy;
pub mod error;
pub mod eval;
pub mod init;
pub mod optimize;
pub mod pipeline;
pub mod signal_io;
pub mod synth;
pub mod wavelet;

pub use detect::{Detections, Hyperparams, ScoreVector};
pub use discrepancy::{FeatureMatrix, Ridge};
pub use error::{Error, Result};
pub use pipeline::{DetectionResult, Detector, DetectorConfig};
pub use signal_io::{LabelSet, TimeSeries};
