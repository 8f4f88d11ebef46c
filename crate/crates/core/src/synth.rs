//! Seeded piecewise-stationary test signals with known change points.
//!
//! Randomness comes from ChaCha8 seeded with `SynthSpec::seed`, with one stream
//! per purpose (boundary jitter, change directions, noise) so that changing
//! one aspect of a `SynthSpec` does not reshuffle the others.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::{LabelSet, TimeSeries};

const STREAM_BOUNDARIES: u64 = 1;
const STREAM_DIRECTIONS: u64 = 2;
const STREAM_NOISE: u64 = 3;

/// Cycles per sample of the first segment's sinusoid.
const BASE_FREQ: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    /// Every channel's mean moves by `magnitude * noise`.
    Mean,
    /// Noise standard deviation is multiplied or divided by `1 + magnitude`.
    Variance,
    /// Sinusoid frequency is multiplied or divided by `1 + magnitude`.
    Frequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub segments: usize,
    /// Change kind per boundary, cycled when shorter than `segments - 1`.
    pub kinds: Vec<ChangeKind>,
    pub magnitude: f64,
    /// Base noise standard deviation.
    pub noise: f64,
    pub seed: u64,
    /// Explicit boundaries; evenly spaced with jitter when `None`.
    #[serde(default)]
    pub boundaries: Option<Vec<usize>>,
}

impl SynthSpec {
    pub fn mean_shift(n: usize, d: usize, segments: usize, magnitude: f64, seed: u64) -> Self {
        Self {
            n,
            d,
            segments,
            kinds: vec![ChangeKind::Mean],
            magnitude,
            noise: 1.0,
            seed,
            boundaries: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidSynthSpec(msg.to_string()));
        if self.d == 0 {
            return fail("d must be at least 1");
        }
        if self.segments == 0 {
            return fail("at least one segment required");
        }
        if self.n < 2 * self.segments.max(2) {
            return fail("n too small for the segment count");
        }
        if self.segments > 1 && self.kinds.is_empty() {
            return fail("change kinds missing");
        }
        if !(self.magnitude.is_finite() && self.magnitude >= 0.0) {
            return fail("magnitude must be finite and non-negative");
        }
        if !(self.noise.is_finite() && self.noise > 0.0) {
            return fail("noise must be positive");
        }
        if let Some(b) = &self.boundaries {
            if b.len() != self.segments - 1 {
                return fail("boundary count must equal segments - 1");
            }
            if b.first().is_some_and(|&x| x == 0) || b.last().is_some_and(|&x| x >= self.n) {
                return fail("boundaries must lie strictly inside (0, n)");
            }
            if b.windows(2).any(|w| w[0] >= w[1]) {
                return fail("boundaries must be strictly increasing");
            }
        }
        Ok(())
    }

    fn resolve_boundaries(&self) -> Vec<usize> {
        if let Some(b) = &self.boundaries {
            return b.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(STREAM_BOUNDARIES);
        let seg = self.n as f64 / self.segments as f64;
        let jitter = (seg / 10.0).floor() as i64;
        (1..self.segments)
            .map(|j| {
                let base = (seg * j as f64).round() as i64;
                let offset = if jitter > 0 { rng.random_range(-jitter..=jitter) } else { 0 };
                (base + offset).clamp(1, self.n as i64 - 1) as usize
            })
            .collect()
    }
}

/// Generates the series and its ground-truth change points (the index of the
/// first sample of each new segment).
pub fn generate(spec: &SynthSpec) -> Result<(TimeSeries, LabelSet)> {
    spec.validate()?;
    let boundaries = spec.resolve_boundaries();
    let periodic = spec.kinds.contains(&ChangeKind::Frequency);

    let mut dir_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    dir_rng.set_stream(STREAM_DIRECTIONS);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(STREAM_NOISE);

    let d = spec.d;
    let mut mean = vec![0.0; d];
    let mut scale = 1.0;
    let mut freq = BASE_FREQ;
    let mut phase = vec![0.0f64; d];
    let factor = 1.0 + spec.magnitude;

    let mut channels = vec![Vec::with_capacity(spec.n); d];
    let mut next = 0;
    for i in 0..spec.n {
        if next < boundaries.len() && i == boundaries[next] {
            match spec.kinds[next % spec.kinds.len()] {
                ChangeKind::Mean => {
                    for m in &mut mean {
                        let mut step = spec.magnitude * spec.noise;
                        if dir_rng.random_bool(0.5) {
                            step = -step;
                        }
                        // Keep means within a couple of steps of zero.
                        if (*m + step).abs() > 1.5 * spec.magnitude * spec.noise + 1e-12 {
                            step = -step;
                        }
                        *m += step;
                    }
                }
                ChangeKind::Variance => {
                    let up = if scale > 1.0 + 1e-12 {
                        false
                    } else if scale < 1.0 - 1e-12 {
                        true
                    } else {
                        dir_rng.random_bool(0.5)
                    };
                    scale = if up { scale * factor } else { scale / factor };
                }
                ChangeKind::Frequency => {
                    let up = if freq > BASE_FREQ + 1e-12 {
                        false
                    } else if freq < BASE_FREQ - 1e-12 {
                        true
                    } else {
                        dir_rng.random_bool(0.5)
                    };
                    freq = if up { freq * factor } else { freq / factor };
                }
            }
            next += 1;
        }
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            let mut v = mean[j] + spec.noise * scale * z;
            if periodic {
                v += phase[j].sin();
                phase[j] += std::f64::consts::TAU * freq;
            }
            channels[j].push(v);
        }
    }
    let series = TimeSeries::from_channels(channels)?;
    let labels = LabelSet::new(boundaries, spec.n)?;
    Ok((series, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_seed() {
        let spec = SynthSpec::mean_shift(500, 2, 4, 3.0, 11);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        let other = generate(&SynthSpec { seed: 12, ..spec }).unwrap();
        assert_ne!(a.0, other.0);
    }

    #[test]
    fn boundary_count() {
        let (x, labels) = generate(&SynthSpec::mean_shift(300, 1, 3, 2.0, 1)).unwrap();
        assert_eq!(labels.len(), 2);
        assert_eq!(x.len(), 300);
        assert!(labels.indices().iter().all(|&b| b > 0 && b < 300));
    }

    #[test]
    fn zero_magnitude_still_reports_boundaries() {
        let (x, labels) = generate(&SynthSpec::mean_shift(400, 1, 4, 0.0, 5)).unwrap();
        assert_eq!(labels.len(), 3);
        let mean = x.channel(0).iter().sum::<f64>() / 400.0;
        assert!(mean.abs() < 3.0 / 20.0);
    }

    #[test]
    fn segment_statistics_match_spec() {
        let spec = SynthSpec {
            boundaries: Some(vec![2000]),
            ..SynthSpec::mean_shift(4000, 1, 2, 2.0, 8)
        };
        let (x, _) = generate(&spec).unwrap();
        let seg = &x.channel(0)[2000..];
        let mean = seg.iter().sum::<f64>() / seg.len() as f64;
        // Mean of 2000 unit-variance samples: sigma = 1/sqrt(2000).
        assert!((mean.abs() - 2.0).abs() < 3.0 / (2000f64).sqrt());
        let var = seg.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / seg.len() as f64;
        // Std of the sample variance is about sqrt(2 / n).
        assert!((var - 1.0).abs() < 3.0 * (2.0 / 2000f64).sqrt());
    }

    #[test]
    fn variance_change() {
        let spec = SynthSpec {
            kinds: vec![ChangeKind::Variance],
            boundaries: Some(vec![3000]),
            ..SynthSpec::mean_shift(6000, 1, 2, 1.0, 3)
        };
        let (x, _) = generate(&spec).unwrap();
        let var = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / s.len() as f64
        };
        let ratio = var(&x.channel(0)[3000..]) / var(&x.channel(0)[..3000]);
        assert!((ratio - 4.0).abs() < 0.5 || (ratio - 0.25).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn invalid_specs() {
        let base = SynthSpec::mean_shift(100, 1, 3, 1.0, 0);
        assert!(generate(&SynthSpec { d: 0, ..base.clone() }).is_err());
        assert!(generate(&SynthSpec { magnitude: -1.0, ..base.clone() }).is_err());
        assert!(generate(&SynthSpec { boundaries: Some(vec![0, 50]), ..base.clone() }).is_err());
        assert!(generate(&SynthSpec { boundaries: Some(vec![60, 50]), ..base.clone() }).is_err());
        assert!(generate(&SynthSpec { boundaries: Some(vec![50]), ..base }).is_err());
    }
}
