//! Python module `mural`.
//!
//! Series and labels cross the boundary as plain lists; results come back as
//! small classes with read-only attributes.

use mural_core::active::{self, read_transcript, write_transcript, QueryKind, SessionConfig};
use mural_core::init::InitThreshold;
use mural_core::optimize::SearchSpace;
use mural_core::synth::{ChangeKind, SynthSpec};
use mural_core::{detect as core_detect, eval, init, signal_io, synth as core_synth};
use mural_core::{Detector, DetectorConfig, Error, FeatureMatrix, LabelSet};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(mural, MuralError, PyException, "Error raised by the detector or a session.");

fn to_py(e: Error) -> PyErr {
    MuralError::new_err(e.to_string())
}

fn parse_init(init: &str) -> PyResult<InitThreshold> {
    match init {
        "elbow" => Ok(InitThreshold::Elbow),
        "max" => Ok(InitThreshold::Max),
        other => Err(PyValueError::new_err(format!("init must be 'elbow' or 'max', got {other:?}"))),
    }
}

fn detector_config(levels: usize, window: usize, init: &str) -> PyResult<DetectorConfig> {
    let mut c = DetectorConfig::new(levels, window);
    c.init = parse_init(init)?;
    Ok(c)
}

/// Multivariate series stored channel by channel.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct TimeSeries {
    inner: mural_core::TimeSeries,
}

#[pymethods]
impl TimeSeries {
    /// `channels[j][i]` is sample `i` of channel `j`.
    #[new]
    fn new(channels: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = mural_core::TimeSeries::from_channels(channels).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Builds a series from samples, one row per time step.
    #[staticmethod]
    fn from_rows(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = mural_core::TimeSeries::from_rows(&rows).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn channels(&self) -> Vec<Vec<f64>> {
        self.inner.channels().to_vec()
    }

    /// Zero mean, unit variance per channel.
    fn standardize(&self) -> Self {
        Self {
            inner: signal_io::standardize(&self.inner),
        }
    }

    fn save_csv(&self, path: &str) -> PyResult<()> {
        self.inner.save_csv(path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("TimeSeries(n={}, dim={})", self.inner.len(), self.inner.dim())
    }
}

#[pyfunction]
#[pyo3(signature = (path, has_header = false))]
fn load_csv(path: &str, has_header: bool) -> PyResult<TimeSeries> {
    let inner = signal_io::load_csv(path, has_header).map_err(to_py)?;
    Ok(TimeSeries { inner })
}

#[pyfunction]
fn load_labels(path: &str, n: usize) -> PyResult<Vec<usize>> {
    Ok(signal_io::load_labels(path, n).map_err(to_py)?.indices().to_vec())
}

/// Result of an unsupervised run.
#[pyclass(frozen, get_all)]
pub struct Detection {
    detections: Vec<usize>,
    threshold: f64,
    weights: Vec<f64>,
    /// Prominence of the aggregated score.
    score: Vec<f64>,
    /// Aggregated score before the prominence transform.
    raw_score: Vec<f64>,
    /// One row per sub-band feature.
    features: Vec<Vec<f64>>,
}

#[pymethods]
impl Detection {
    fn __repr__(&self) -> String {
        format!("Detection({} change points, threshold={})", self.detections.len(), self.threshold)
    }
}

/// Runs the unsupervised detector.
#[pyfunction]
#[pyo3(signature = (series, levels, window, init = "elbow"))]
fn detect(py: Python<'_>, series: &TimeSeries, levels: usize, window: usize, init: &str) -> PyResult<Detection> {
    let config = detector_config(levels, window, init)?;
    let r = py
        .detach(|| Detector::new(config).run(&series.inner))
        .map_err(to_py)?;
    Ok(Detection {
        detections: r.detections.indices,
        threshold: r.params.threshold,
        weights: r.params.weights,
        score: r.score.prominent,
        raw_score: r.score.raw,
        features: r.features.features,
    })
}

/// Detections for explicit weights and threshold on precomputed features.
#[pyfunction]
fn detect_with(features: Vec<Vec<f64>>, weights: Vec<f64>, threshold: f64) -> PyResult<Vec<usize>> {
    let f = FeatureMatrix::from_rows(features).map_err(to_py)?;
    let params = mural_core::Hyperparams::new(weights, threshold).map_err(to_py)?;
    let (_, d) = core_detect::detect(&f, &params).map_err(to_py)?;
    Ok(d.indices)
}

#[pyfunction]
fn prominence(values: Vec<f64>) -> Vec<f64> {
    core_detect::prominence(&values)
}

#[pyfunction]
fn elbow_threshold(scores: Vec<f64>) -> f64 {
    init::init_threshold(&scores).threshold
}

/// One-to-one matching within `eta`; returns a dict of counts and scores.
#[pyfunction]
fn match_points<'py>(
    py: Python<'py>,
    predicted: Vec<usize>,
    truth: Vec<usize>,
    eta: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let r = eval::match_points(&predicted, &truth, eta);
    let d = PyDict::new(py);
    d.set_item("matches", r.matches)?;
    d.set_item("tp", r.tp)?;
    d.set_item("fp", r.fp)?;
    d.set_item("fn", r.fn_)?;
    d.set_item("precision", r.precision)?;
    d.set_item("recall", r.recall)?;
    d.set_item("f1", r.f1)?;
    Ok(d)
}

fn parse_kind(kind: &str) -> PyResult<ChangeKind> {
    match kind {
        "mean" => Ok(ChangeKind::Mean),
        "variance" => Ok(ChangeKind::Variance),
        "frequency" => Ok(ChangeKind::Frequency),
        other => Err(PyValueError::new_err(format!("unknown change kind {other:?}"))),
    }
}

/// Synthetic series with known change points.
#[pyfunction]
#[pyo3(signature = (n, d, segments, kinds = vec!["mean".to_string()], magnitude = 3.0, noise = 1.0, seed = 0))]
fn synth(
    n: usize,
    d: usize,
    segments: usize,
    kinds: Vec<String>,
    magnitude: f64,
    noise: f64,
    seed: u64,
) -> PyResult<(TimeSeries, Vec<usize>)> {
    let spec = SynthSpec {
        n,
        d,
        segments,
        kinds: kinds.iter().map(|k| parse_kind(k)).collect::<PyResult<_>>()?,
        magnitude,
        noise,
        seed,
        boundaries: None,
    };
    let (x, labels) = core_synth::generate(&spec).map_err(to_py)?;
    Ok((TimeSeries { inner: x }, labels.indices().to_vec()))
}

#[pyclass(frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
pub struct Query {
    id: u64,
    /// "above" or "below" the threshold.
    kind: String,
    center: usize,
    start: usize,
    end: usize,
}

impl From<&active::Query> for Query {
    fn from(q: &active::Query) -> Self {
        Self {
            id: q.id,
            kind: match q.kind {
                QueryKind::Above => "above",
                QueryKind::Below => "below",
            }
            .into(),
            center: q.center,
            start: q.start,
            end: q.end,
        }
    }
}

#[pymethods]
impl Query {
    fn __repr__(&self) -> String {
        format!(
            "Query(id={}, kind={}, center={}, window=[{}, {}])",
            self.id, self.kind, self.center, self.start, self.end
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn session_config(
    eta: usize,
    budget: usize,
    warmup: usize,
    cadence: usize,
    queries_per_round: usize,
    seed: u64,
    grid_size: usize,
    evaluations: usize,
) -> SessionConfig {
    SessionConfig {
        eta,
        budget,
        warmup,
        cadence,
        queries_per_round,
        search: SearchSpace {
            grid_size,
            evaluations,
            ..SearchSpace::default()
        },
        seed,
    }
}

/// Active-learning session over one series.
#[pyclass]
pub struct Session {
    inner: active::Session,
}

#[pymethods]
impl Session {
    #[new]
    #[pyo3(signature = (
        series, levels, window, eta, budget,
        warmup = 10, cadence = 2, queries_per_round = 2, seed = 0,
        init = "elbow", grid_size = 5000, evaluations = 50,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        py: Python<'_>,
        series: &TimeSeries,
        levels: usize,
        window: usize,
        eta: usize,
        budget: usize,
        warmup: usize,
        cadence: usize,
        queries_per_round: usize,
        seed: u64,
        init: &str,
        grid_size: usize,
        evaluations: usize,
    ) -> PyResult<Self> {
        let detector = detector_config(levels, window, init)?;
        let config = session_config(eta, budget, warmup, cadence, queries_per_round, seed, grid_size, evaluations);
        let inner = py
            .detach(|| active::Session::from_series(&series.inner, &detector, config))
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Rebuilds a session from its JSON-lines transcript.
    #[staticmethod]
    fn replay(series: &TimeSeries, levels: usize, window: usize, transcript: &str) -> PyResult<Self> {
        let features = Detector::new(DetectorConfig::new(levels, window))
            .features(&series.inner)
            .map_err(to_py)?;
        let events = read_transcript(transcript.as_bytes()).map_err(to_py)?;
        let inner = active::Session::replay(features, &events).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Pending queries; an empty list once the budget or the series is used up.
    fn next_queries(&mut self) -> PyResult<Vec<Query>> {
        match self.inner.next_queries() {
            Ok(q) => Ok(q.iter().map(Query::from).collect()),
            Err(Error::BudgetExhausted(_) | Error::SessionComplete) => Ok(Vec::new()),
            Err(e) => Err(to_py(e)),
        }
    }

    /// Answers a query; returns whether the parameters were re-optimized.
    fn submit_labels(&mut self, py: Python<'_>, query_id: u64, confirmed: Vec<usize>) -> PyResult<bool> {
        let inner = &mut self.inner;
        let r = py.detach(|| inner.submit_labels(query_id, &confirmed)).map_err(to_py)?;
        Ok(r.optimized)
    }

    #[getter]
    fn detections(&self) -> Vec<usize> {
        self.inner.detections().indices.clone()
    }

    #[getter]
    fn score(&self) -> Vec<f64> {
        self.inner.score().prominent.clone()
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.params().threshold
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.params().weights.clone()
    }

    #[getter]
    fn queries_used(&self) -> usize {
        self.inner.queries_used()
    }

    #[getter]
    fn budget_left(&self) -> usize {
        self.inner.budget_left()
    }

    #[getter]
    fn positives(&self) -> Vec<usize> {
        self.inner.annotations().positives().to_vec()
    }

    /// Metrics of the current detections against a full ground truth.
    fn evaluate(&self, truth: Vec<usize>) -> (f64, f64, f64) {
        let v = self.inner.evaluate(&truth);
        (v.precision, v.recall, v.f1)
    }

    fn transcript(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        write_transcript(self.inner.transcript(), &mut buf).map_err(to_py)?;
        String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

/// Simulated session with a ground-truth oracle; returns the F1 after each
/// query (index 0 is the unsupervised result).
#[pyfunction]
#[pyo3(signature = (
    series, truth, levels, window, eta, budget,
    warmup = 10, cadence = 2, queries_per_round = 2, seed = 0,
    init = "elbow", grid_size = 5000, evaluations = 50,
))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    series: &TimeSeries,
    truth: Vec<usize>,
    levels: usize,
    window: usize,
    eta: usize,
    budget: usize,
    warmup: usize,
    cadence: usize,
    queries_per_round: usize,
    seed: u64,
    init: &str,
    grid_size: usize,
    evaluations: usize,
) -> PyResult<Vec<f64>> {
    let detector = detector_config(levels, window, init)?;
    let config = session_config(eta, budget, warmup, cadence, queries_per_round, seed, grid_size, evaluations);
    let truth = LabelSet::new(truth, series.inner.len()).map_err(to_py)?;
    let sim = py
        .detach(|| active::run_simulated(&series.inner, &truth, &detector, config))
        .map_err(to_py)?;
    Ok(sim.curve.iter().map(|v| v.f1).collect())
}

#[pymodule]
pub fn mural(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MuralError", m.py().get_type::<MuralError>())?;
    m.add_class::<TimeSeries>()?;
    m.add_class::<Detection>()?;
    m.add_class::<Query>()?;
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(load_csv, m)?)?;
    m.add_function(wrap_pyfunction!(load_labels, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(detect_with, m)?)?;
    m.add_function(wrap_pyfunction!(prominence, m)?)?;
    m.add_function(wrap_pyfunction!(elbow_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(match_points, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn option_strings() {
        assert_eq!(parse_init("max").unwrap(), InitThreshold::Max);
        assert!(parse_kind("frequency").is_ok());
        let c = detector_config(3, 12, "elbow").unwrap();
        assert_eq!((c.levels, c.window, c.init), (3, 12, InitThreshold::Elbow));
    }

    #[test]
    fn query_kinds_are_named() {
        let q = active::Query {
            id: 4,
            kind: QueryKind::Below,
            center: 9,
            start: 5,
            end: 13,
        };
        let p = Query::from(&q);
        assert_eq!((p.id, p.kind.as_str(), p.start, p.end), (4, "below", 5, 13));
    }
}
