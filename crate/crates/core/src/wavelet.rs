//! Multilevel discrete wavelet decomposition with periodized boundaries.
//!
//! Each level circularly convolves the current approximation with the
//! low-pass and high-pass filters and keeps the even-indexed outputs:
//! `y[i] = sum_k f[k] * x[(2i - k) mod N]`. Odd-length inputs are first
//! extended by repeating their last sample, so a level-`k` sub-band of a
//! length-`n` input has `ceil(n / 2^k)` samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::TimeSeries;

/// Channel-major multichannel signal.
pub type Channels = Vec<Vec<f64>>;

/// An orthogonal low-pass / high-pass filter pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletFilters {
    pub name: String,
    pub low_pass: Vec<f64>,
    pub high_pass: Vec<f64>,
}

impl WaveletFilters {
    /// Daubechies-2 (four taps).
    pub fn db2() -> Self {
        let s3 = 3f64.sqrt();
        let norm = 4.0 * 2f64.sqrt();
        let low_pass = vec![
            (1.0 + s3) / norm,
            (3.0 + s3) / norm,
            (3.0 - s3) / norm,
            (1.0 - s3) / norm,
        ];
        Self::from_low_pass("db2", low_pass)
    }

    /// Builds the pair from a low-pass filter; the high-pass filter is its
    /// quadrature mirror `h[k] = (-1)^k l[L-1-k]`.
    pub fn from_low_pass(name: &str, low_pass: Vec<f64>) -> Self {
        let len = low_pass.len();
        let high_pass = (0..len)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * low_pass[len - 1 - k]
            })
            .collect();
        Self {
            name: name.to_string(),
            low_pass,
            high_pass,
        }
    }

    pub fn len(&self) -> usize {
        self.low_pass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.low_pass.is_empty()
    }
}

impl Default for WaveletFilters {
    fn default() -> Self {
        Self::db2()
    }
}

/// The `K + 1` sub-bands of a `K`-level decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSet {
    /// Detail sub-bands, finest (level 1) first.
    pub details: Vec<Channels>,
    /// Approximation at the deepest level.
    pub approximation: Channels,
}

impl SubbandSet {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    /// All sub-bands in feature order: details 1..K, then the approximation.
    pub fn bands(&self) -> impl Iterator<Item = &Channels> {
        self.details.iter().chain(std::iter::once(&self.approximation))
    }

    /// Per-level sample counts, details first, then the approximation.
    pub fn level_lengths(&self) -> Vec<usize> {
        self.bands().map(|b| b[0].len()).collect()
    }

    /// Sum of squared coefficients over every sub-band and channel.
    pub fn energy(&self) -> f64 {
        self.bands().flatten().flatten().map(|v| v * v).sum()
    }
}

fn filter_decimate(x: &[f64], filter: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n / 2)
        .map(|i| {
            filter
                .iter()
                .enumerate()
                .map(|(k, f)| f * x[(2 * i + n * filter.len() - k) % n])
                .sum()
        })
        .collect()
}

fn dwt_channel(x: &[f64], filters: &WaveletFilters) -> (Vec<f64>, Vec<f64>) {
    let extended;
    let x = if x.len() % 2 == 1 {
        extended = x.iter().copied().chain(x.last().copied()).collect::<Vec<_>>();
        extended.as_slice()
    } else {
        x
    };
    (
        filter_decimate(x, &filters.low_pass),
        filter_decimate(x, &filters.high_pass),
    )
}

/// One analysis step: returns `(approximation, detail)`, each of length
/// `ceil(len / 2)` per channel.
pub fn dwt_step(signal: &[Vec<f64>], filters: &WaveletFilters) -> Result<(Channels, Channels)> {
    let len = signal.first().map_or(0, Vec::len);
    if len < 2 {
        return Err(Error::SignalTooShort { len, min: 2 });
    }
    Ok(signal.iter().map(|ch| dwt_channel(ch, filters)).unzip())
}

/// Largest level count whose coarsest sub-band still holds at least
/// `min_len` samples.
pub fn max_levels(n: usize, min_len: usize) -> usize {
    let mut levels = 0;
    let mut len = n;
    while len.div_ceil(2) >= min_len.max(1) && len >= 2 {
        len = len.div_ceil(2);
        levels += 1;
    }
    levels
}

/// Decomposes every channel of `x` into `levels` detail sub-bands plus one
/// approximation.
pub fn mdwd(x: &TimeSeries, levels: usize, filters: &WaveletFilters) -> Result<SubbandSet> {
    let n = x.len();
    let max_levels = max_levels(n, filters.len());
    if levels == 0 || levels > max_levels {
        return Err(Error::TooManyLevels {
            levels,
            n,
            max_levels,
        });
    }
    let mut approximation: Channels = x.channels().to_vec();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (a, d) = dwt_step(&approximation, filters)?;
        details.push(d);
        approximation = a;
    }
    Ok(SubbandSet {
        details,
        approximation,
    })
}
