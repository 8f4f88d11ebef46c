use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty input file")]
    EmptyFile,
    #[error("row {row} has {found} columns, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    NonNumeric {
        row: usize,
        column: usize,
        value: String,
    },
    #[error("line {line}: {value:?} is not a non-negative integer index")]
    BadLabel { line: usize, value: String },
    #[error("label index {index} is outside [0, {n})")]
    LabelOutOfRange { index: usize, n: usize },
    #[error("invalid time series: {0}")]
    InvalidSeries(String),
    #[error("signal too short: {len} samples, need at least {min}")]
    SignalTooShort { len: usize, min: usize },
    #[error("{levels} decomposition levels too deep for {n} samples (maximum admissible: {max_levels})")]
    TooManyLevels {
        levels: usize,
        n: usize,
        max_levels: usize,
    },
    #[error("window of size {w} does not fit at index {index} of a length-{len} signal")]
    WindowOutOfBounds { index: usize, w: usize, len: usize },
    #[error("window size {w} too large for length-{len} signal (maximum admissible: {max_w})")]
    WindowTooLarge { w: usize, len: usize, max_w: usize },
    #[error("sub-band {band} too short: {source}")]
    SubbandTooShort {
        band: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("expected {expected} weights, got {found}")]
    WeightCountMismatch { expected: usize, found: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
    #[error("invalid search space: {0}")]
    InvalidSearchSpace(String),
    #[error("degenerate score profile: fewer than 3 distinct values")]
    DegenerateScores,
    #[error("no annotations collected yet")]
    NoAnnotations,
    #[error("unknown or already answered query {0}")]
    UnknownQuery(u64),
    #[error("label {index} lies outside the query window [{start}, {end}]")]
    LabelOutsideWindow {
        index: usize,
        start: usize,
        end: usize,
    },
    #[error("query budget of {0} exhausted")]
    BudgetExhausted(usize),
    #[error("no unlabeled indices left to query")]
    SessionComplete,
    #[error("invalid synthetic spec: {0}")]
    InvalidSynthSpec(String),
    #[error("transcript: {0}")]
    Transcript(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
