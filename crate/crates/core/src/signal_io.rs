//! Time series and label-file ingestion, plus per-channel standardization.
//!
//! Series are stored channel-major: `channels[j][i]` is sample `i` of
//! channel `j`. All indices are 0-based.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `d`-channel, length-`n` real-valued signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    channels: Vec<Vec<f64>>,
}

impl TimeSeries {
    /// Builds a series from channel-major data, checking shape and finiteness.
    pub fn from_channels(channels: Vec<Vec<f64>>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidSeries("at least one channel required".into()));
        }
        let n = channels[0].len();
        if n < 2 {
            return Err(Error::InvalidSeries(format!("need at least 2 samples, got {n}")));
        }
        for (j, ch) in channels.iter().enumerate() {
            if ch.len() != n {
                return Err(Error::InvalidSeries(format!(
                    "channel {j} has {} samples, channel 0 has {n}",
                    ch.len()
                )));
            }
            if let Some(i) = ch.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidSeries(format!(
                    "non-finite value at sample {i}, channel {j}"
                )));
            }
        }
        Ok(Self { channels })
    }

    /// Builds a series from row-major samples (`rows[i][j]`).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut channels = vec![Vec::with_capacity(rows.len()); d];
        for row in rows {
            if row.len() != d {
                return Err(Error::InvalidSeries("rows have different lengths".into()));
            }
            for (ch, &v) in channels.iter_mut().zip(row) {
                ch.push(v);
            }
        }
        Self::from_channels(channels)
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, j: usize) -> &[f64] {
        &self.channels[j]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Sample `i` across all channels.
    pub fn sample(&self, i: usize) -> Vec<f64> {
        self.channels.iter().map(|ch| ch[i]).collect()
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(BufWriter::new(file))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for i in 0..self.len() {
            wtr.write_record(self.channels.iter().map(|ch| ch[i].to_string()))?;
        }
        wtr.flush().map_err(|source| Error::Io {
            path: "<csv output>".into(),
            source,
        })?;
        Ok(())
    }
}

/// Sorted, deduplicated change-point indices within `[0, n)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    change_points: Vec<usize>,
}

impl LabelSet {
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        if let Some(&index) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::LabelOutOfRange { index, n });
        }
        indices.sort_unstable();
        indices.dedup();
        Ok(Self {
            change_points: indices,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.change_points
    }

    pub fn len(&self) -> usize {
        self.change_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.change_points.is_empty()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        for i in &self.change_points {
            writeln!(out, "{i}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(file, has_header)
}

/// Parses comma-separated samples (one row per sample, one column per channel).
pub fn parse_csv<R: Read>(reader: R, has_header: bool) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut expected = None;
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let row = record
            .position()
            .map_or(k + 1 + usize::from(has_header), |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let width = *expected.get_or_insert(record.len());
        if record.len() != width {
            return Err(Error::RaggedRow {
                row,
                expected: width,
                found: record.len(),
            });
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(column, cell)| {
                cell.parse::<f64>().map_err(|_| Error::NonNumeric {
                    row,
                    column: column + 1,
                    value: cell.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }
    TimeSeries::from_rows(&rows)
}

pub fn load_labels(path: impl AsRef<Path>, n: usize) -> Result<LabelSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_labels(&text, n)
}

/// One 0-based index per line; blank lines and `#` comments are skipped.
pub fn parse_labels(text: &str, n: usize) -> Result<LabelSet> {
    let mut indices = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let index = line.parse::<usize>().map_err(|_| Error::BadLabel {
            line: k + 1,
            value: line.to_string(),
        })?;
        indices.push(index);
    }
    LabelSet::new(indices, n)
}

/// Per-channel statistics used by [`standardize`]: population mean and std.
fn channel_stats<'a>(chunks: impl Iterator<Item = &'a [f64]> + Clone) -> (f64, f64) {
    let count: usize = chunks.clone().map(<[f64]>::len).sum();
    let mean = chunks.clone().flatten().sum::<f64>() / count as f64;
    let var = chunks.flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
    (mean, var.sqrt())
}

fn apply_stats(ch: &[f64], mean: f64, std: f64) -> Vec<f64> {
    // Constant channels map to zeros.
    if std <= 1e-12 * mean.abs().max(1.0) {
        vec![0.0; ch.len()]
    } else {
        ch.iter().map(|v| (v - mean) / std).collect()
    }
}

/// Zero mean, unit population variance per channel.
pub fn standardize(x: &TimeSeries) -> TimeSeries {
    let channels = x
        .channels
        .iter()
        .map(|ch| {
            let (mean, std) = channel_stats(std::iter::once(ch.as_slice()));
            apply_stats(ch, mean, std)
        })
        .collect();
    TimeSeries { channels }
}

/// Standardizes several sequences with statistics pooled across all of them.
pub fn standardize_global(series: &[TimeSeries]) -> Result<Vec<TimeSeries>> {
    let Some(first) = series.first() else {
        return Ok(Vec::new());
    };
    let d = first.dim();
    if series.iter().any(|s| s.dim() != d) {
        return Err(Error::InvalidSeries(
            "all sequences must have the same channel count".into(),
        ));
    }
    let stats: Vec<(f64, f64)> = (0..d)
        .map(|j| channel_stats(series.iter().map(|s| s.channel(j))))
        .collect();
    Ok(series
        .iter()
        .map(|s| TimeSeries {
            channels: s
                .channels
                .iter()
                .zip(&stats)
                .map(|(ch, &(mean, std))| apply_stats(ch, mean, std))
                .collect(),
        })
        .collect())
}
