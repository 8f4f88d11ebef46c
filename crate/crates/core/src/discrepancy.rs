//! Sliding-window Normal Discrepancy scoring and Fourier resampling.
//!
//! For a sub-band `xb` and window size `w`, the score at index `i` compares
//! the Gaussian fit of the centered window `xb[i-w+1 ..= i+w]` against the
//! fits of its two halves:
//!
//! `w * ln(det S / sqrt(det S_L * det S_R))`
//!
//! with maximum-likelihood covariances (divisor = window length, each window
//! centered on its own mean). This is non-negative because
//! `S >= (S_L + S_R) / 2` and `ln det` is concave.

use std::collections::VecDeque;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavelet::{Channels, SubbandSet};

/// Diagonal loading applied to every covariance before taking determinants:
/// `eps = relative * tr(S) / d + absolute`, where `S` is the centered-window
/// covariance. The same `eps` is used for all three matrices at one index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ridge {
    pub relative: f64,
    pub absolute: f64,
}

impl Ridge {
    pub const fn absolute(eps: f64) -> Self {
        Self {
            relative: 0.0,
            absolute: eps,
        }
    }

    fn epsilon(&self, trace: f64, d: usize) -> f64 {
        self.relative * trace / d as f64 + self.absolute
    }
}

impl Default for Ridge {
    fn default() -> Self {
        Self {
            relative: 1e-6,
            absolute: 1e-12,
        }
    }
}

/// The `K + 1` resampled discrepancy features, each as long as the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub features: Vec<Vec<f64>>,
    pub window_size: usize,
    pub ridge: Ridge,
}

impl FeatureMatrix {
    /// Wraps raw feature rows (all rows must share one length `>= 3`).
    pub fn from_rows(features: Vec<Vec<f64>>) -> Result<Self> {
        let n = features.first().map_or(0, Vec::len);
        if features.is_empty() || n < 3 || features.iter().any(|f| f.len() != n) {
            return Err(Error::InvalidParams(
                "feature rows must be non-empty and of equal length >= 3".into(),
            ));
        }
        Ok(Self {
            features,
            window_size: 0,
            ridge: Ridge::default(),
        })
    }

    pub fn count(&self) -> usize {
        self.features.len()
    }

    pub fn len(&self) -> usize {
        self.features[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// CSV export, one feature per row.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for f in &self.features {
            wtr.write_record(f.iter().map(f64::to_string))?;
        }
        wtr.flush().map_err(|source| Error::Io {
            path: "<feature output>".into(),
            source,
        })
    }
}

/// The `(left, right, center)` sample blocks around index `i`.
pub fn windows(xbar: &[Vec<f64>], i: usize, w: usize) -> Result<(Channels, Channels, Channels)> {
    let len = xbar.first().map_or(0, Vec::len);
    if w == 0 || w > i + 1 || i + w >= len {
        return Err(Error::WindowOutOfBounds { index: i, w, len });
    }
    let slice = |a: usize, b: usize| -> Channels { xbar.iter().map(|ch| ch[a..=b].to_vec()).collect() };
    Ok((
        slice(i + 1 - w, i),
        slice(i + 1, i + w),
        slice(i + 1 - w, i + w),
    ))
}

/// Mean and scatter (sum of centered outer products, row-major d x d).
#[derive(Debug, Clone)]
struct WindowStats {
    mean: Vec<f64>,
    scatter: Vec<f64>,
}

impl WindowStats {
    fn compute(xbar: &[Vec<f64>], start: usize, w: usize) -> Self {
        let d = xbar.len();
        let mean: Vec<f64> = xbar
            .iter()
            .map(|ch| ch[start..start + w].iter().sum::<f64>() / w as f64)
            .collect();
        let mut scatter = vec![0.0; d * d];
        let mut centered = vec![0.0; d];
        for t in start..start + w {
            for (c, (ch, m)) in centered.iter_mut().zip(xbar.iter().zip(&mean)) {
                *c = ch[t] - m;
            }
            for a in 0..d {
                for b in a..d {
                    scatter[a * d + b] += centered[a] * centered[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                scatter[a * d + b] = scatter[b * d + a];
            }
        }
        Self { mean, scatter }
    }
}

/// `ln det(A + eps I)` via Cholesky. `a` is row-major and symmetric.
fn ln_det_ridged(a: &[f64], d: usize, eps: f64) -> f64 {
    let mut l = vec![0.0; d * d];
    let mut acc = 0.0;
    for j in 0..d {
        let mut diag = a[j * d + j] + eps;
        for k in 0..j {
            diag -= l[j * d + k] * l[j * d + k];
        }
        // Ridged matrices are positive definite; the floor only absorbs rounding.
        let diag = diag.max(f64::MIN_POSITIVE);
        let root = diag.sqrt();
        l[j * d + j] = root;
        acc += diag.ln();
        for i in j + 1..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v -= l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = v / root;
        }
    }
    acc
}

fn score_from_stats(left: &WindowStats, right: &WindowStats, w: usize, ridge: &Ridge) -> f64 {
    let d = left.mean.len();
    let wf = w as f64;
    let mut center = vec![0.0; d * d];
    for a in 0..d {
        let da = left.mean[a] - right.mean[a];
        for b in 0..d {
            let db = left.mean[b] - right.mean[b];
            center[a * d + b] =
                (left.scatter[a * d + b] + right.scatter[a * d + b] + 0.5 * wf * da * db) / (2.0 * wf);
        }
    }
    let cov_l: Vec<f64> = left.scatter.iter().map(|v| v / wf).collect();
    let cov_r: Vec<f64> = right.scatter.iter().map(|v| v / wf).collect();
    let trace: f64 = (0..d).map(|a| center[a * d + a]).sum();
    let eps = ridge.epsilon(trace, d);
    wf * (ln_det_ridged(&center, d, eps)
        - 0.5 * (ln_det_ridged(&cov_l, d, eps) + ln_det_ridged(&cov_r, d, eps)))
}

/// Unclipped discrepancy scores; boundary indices without two full windows are 0.
pub fn normal_discrepancy_raw(xbar: &[Vec<f64>], w: usize, ridge: &Ridge) -> Result<Vec<f64>> {
    let len = xbar.first().map_or(0, Vec::len);
    if w < 2 {
        return Err(Error::InvalidParams(format!("window size must be >= 2, got {w}")));
    }
    if len < 2 * w {
        return Err(Error::WindowTooLarge {
            w,
            len,
            max_w: len / 2,
        });
    }
    if !(ridge.absolute > 0.0 || ridge.relative > 0.0) {
        return Err(Error::InvalidParams("ridge must be positive".into()));
    }
    let mut scores = vec![0.0; len];
    // Stats for window starts (i - w + 1) ..= (i + 1).
    let mut ring: VecDeque<WindowStats> = (0..=w).map(|s| WindowStats::compute(xbar, s, w)).collect();
    for i in (w - 1)..(len - w) {
        if i > w - 1 {
            ring.pop_front();
            ring.push_back(WindowStats::compute(xbar, i + 1, w));
        }
        scores[i] = score_from_stats(&ring[0], &ring[w], w, ridge);
    }
    Ok(scores)
}

/// Discrepancy scores clipped below at 0.
pub fn normal_discrepancy(xbar: &[Vec<f64>], w: usize, ridge: &Ridge) -> Result<Vec<f64>> {
    let mut scores = normal_discrepancy_raw(xbar, w, ridge)?;
    for s in &mut scores {
        *s = s.max(0.0);
    }
    Ok(scores)
}

/// Fourier-domain resampling of a real sequence to `target_len` samples.
///
/// The spectrum is zero-padded or truncated; an even-length band edge
/// (Nyquist) bin is split in half when upsampling and doubled when
/// downsampling. Output amplitude matches the input, so constants and the
/// mean are preserved.
pub fn fourier_resample(v: &[f64], target_len: usize) -> Result<Vec<f64>> {
    let m = v.len();
    if m < 2 {
        return Err(Error::SignalTooShort { len: m, min: 2 });
    }
    if target_len < 2 {
        return Err(Error::SignalTooShort {
            len: target_len,
            min: 2,
        });
    }
    if target_len == m {
        return Ok(v.to_vec());
    }
    let mut planner = FftPlanner::<f64>::new();
    let forward: Arc<dyn Fft<f64>> = planner.plan_fft_forward(m);
    let inverse: Arc<dyn Fft<f64>> = planner.plan_fft_inverse(target_len);

    let mut spectrum: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
    forward.process(&mut spectrum);

    // Half spectrum 0..=shared/2 of the band shared by both lengths.
    let shared = m.min(target_len);
    let half_len = shared / 2 + 1;
    let mut half: Vec<Complex<f64>> = spectrum[..half_len].to_vec();
    if shared.is_multiple_of(2) {
        let nyq = shared / 2;
        if target_len < m {
            half[nyq] *= 2.0;
        } else {
            half[nyq] *= 0.5;
        }
    }

    // Hermitian extension to the target length.
    let mut full = vec![Complex::new(0.0, 0.0); target_len];
    full[0] = Complex::new(half[0].re, 0.0);
    for (k, &c) in half.iter().enumerate().skip(1) {
        if 2 * k == target_len {
            full[k] = Complex::new(c.re, 0.0);
        } else {
            full[k] = c;
            full[target_len - k] = c.conj();
        }
    }
    inverse.process(&mut full);
    let scale = 1.0 / m as f64;
    Ok(full.into_iter().map(|c| c.re * scale).collect())
}

/// Scores every sub-band with the same window size and resamples each score
/// vector to the original length `n`.
pub fn extract_features(bands: &SubbandSet, w: usize, n: usize, ridge: &Ridge) -> Result<FeatureMatrix> {
    let features = bands
        .bands()
        .enumerate()
        .map(|(k, band)| {
            let raw = normal_discrepancy(band, w, ridge).map_err(|e| Error::SubbandTooShort {
                band: k + 1,
                source: Box::new(e),
            })?;
            let mut f = fourier_resample(&raw, n)?;
            for v in &mut f {
                // Resampling ringing can dip below zero.
                *v = v.max(0.0);
            }
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureMatrix {
        features,
        window_size: w,
        ridge: *ridge,
    })
}
