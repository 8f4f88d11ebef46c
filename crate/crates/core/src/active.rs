//! The active-learning session: threshold-proximity queries, annotation
//! bookkeeping, warm-up and re-optimization cadence, transcripts and a
//! simulated annotator driven by ground truth.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::detect::{detect, Detections, Hyperparams, ScoreVector};
use crate::discrepancy::FeatureMatrix;
use crate::error::{Error, Result};
use crate::eval::{match_points, prf};
use crate::optimize::{optimize, ObjectiveValue, SearchSpace};
use crate::pipeline::{Detector, DetectorConfig};
use crate::signal_io::{LabelSet, TimeSeries};

/// One answered query window, inclusive bounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedWindow {
    pub start: usize,
    pub end: usize,
    pub positives: Vec<usize>,
}

/// Labeled windows, the confirmed change points and the covered indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationSet {
    n: usize,
    windows: Vec<AnnotatedWindow>,
    positives: Vec<usize>,
    covered: Vec<bool>,
    covered_count: usize,
}

impl AnnotationSet {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            windows: Vec::new(),
            positives: Vec::new(),
            covered: vec![false; n],
            covered_count: 0,
        }
    }

    /// Records a window `[start, end]` with its confirmed change points.
    pub fn add(&mut self, start: usize, end: usize, confirmed: &[usize]) -> Result<()> {
        if start > end || end >= self.n {
            return Err(Error::InvalidParams(format!(
                "window [{start}, {end}] outside [0, {})",
                self.n
            )));
        }
        if let Some(&index) = confirmed.iter().find(|&&i| i < start || i > end) {
            return Err(Error::LabelOutsideWindow { index, start, end });
        }
        if let Some(i) = (start..=end).find(|&i| self.covered[i]) {
            return Err(Error::InvalidParams(format!("index {i} is already annotated")));
        }
        for c in &mut self.covered[start..=end] {
            *c = true;
        }
        self.covered_count += end - start + 1;
        let mut positives = confirmed.to_vec();
        positives.sort_unstable();
        positives.dedup();
        self.positives.extend_from_slice(&positives);
        self.positives.sort_unstable();
        self.windows.push(AnnotatedWindow { start, end, positives });
        Ok(())
    }

    pub fn series_len(&self) -> usize {
        self.n
    }

    pub fn windows(&self) -> &[AnnotatedWindow] {
        &self.windows
    }

    /// Confirmed change points, sorted.
    pub fn positives(&self) -> &[usize] {
        &self.positives
    }

    pub fn is_covered(&self, i: usize) -> bool {
        self.covered.get(i).copied().unwrap_or(false)
    }

    pub fn covered_count(&self) -> usize {
        self.covered_count
    }

    /// Number of indices still available for querying.
    pub fn unlabeled_count(&self) -> usize {
        self.n - self.covered_count
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    /// Lowest score at or above the threshold.
    Above,
    /// Highest score below the threshold.
    Below,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: u64,
    pub kind: QueryKind,
    pub center: usize,
    pub start: usize,
    pub end: usize,
}

impl Query {
    pub fn contains(&self, i: usize) -> bool {
        (self.start..=self.end).contains(&i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Matching tolerance, also the query half-width.
    pub eta: usize,
    /// Total number of queries that may be answered.
    pub budget: usize,
    pub warmup: usize,
    pub cadence: usize,
    pub queries_per_round: usize,
    #[serde(default)]
    pub search: SearchSpace,
    pub seed: u64,
}

impl SessionConfig {
    pub fn new(eta: usize, budget: usize, seed: u64) -> Self {
        Self {
            eta,
            budget,
            warmup: 10,
            cadence: 2,
            queries_per_round: 2,
            search: SearchSpace::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cadence == 0 {
            return Err(Error::InvalidParams("cadence must be at least 1".into()));
        }
        if !(1..=2).contains(&self.queries_per_round) {
            return Err(Error::InvalidParams("queries_per_round must be 1 or 2".into()));
        }
        self.search.validate()
    }

    fn optimizes_after(&self, queries_used: usize) -> bool {
        queries_used >= self.warmup && (queries_used - self.warmup).is_multiple_of(self.cadence)
    }
}

/// Transcript line. The first line of a transcript is `Start`; each answered
/// query appends a `Label`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum TranscriptEvent {
    Start {
        n: usize,
        config: SessionConfig,
        params: Hyperparams,
    },
    Label {
        query_id: u64,
        kind: QueryKind,
        center: usize,
        window: (usize, usize),
        confirmed: Vec<usize>,
        optimized: bool,
        params: Hyperparams,
    },
}

pub fn write_transcript<W: Write>(events: &[TranscriptEvent], mut writer: W) -> Result<()> {
    for event in events {
        serde_json::to_writer(&mut writer, event)?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::Transcript(e.to_string()))?;
    }
    Ok(())
}

pub fn read_transcript<R: BufRead>(reader: R) -> Result<Vec<TranscriptEvent>> {
    let mut events = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Transcript(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line)
            .map_err(|e| Error::Transcript(format!("line {}: {e}", k + 1)))?;
        events.push(event);
    }
    Ok(events)
}

/// Result of answering a query.
#[derive(Debug, Clone, PartialEq)]
pub struct Submission {
    pub optimized: bool,
    pub objective: Option<ObjectiveValue>,
}

#[derive(Debug, Clone)]
pub struct Session {
    features: FeatureMatrix,
    params: Hyperparams,
    score: ScoreVector,
    detections: Detections,
    annotations: AnnotationSet,
    config: SessionConfig,
    queries_used: usize,
    pending: Vec<Query>,
    next_id: u64,
    optimizations: u64,
    last_objective: Option<ObjectiveValue>,
    transcript: Vec<TranscriptEvent>,
}

impl Session {
    pub fn new(features: FeatureMatrix, params: Hyperparams, config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let (score, detections) = detect(&features, &params)?;
        let n = features.len();
        let transcript = vec![TranscriptEvent::Start {
            n,
            config: config.clone(),
            params: params.clone(),
        }];
        Ok(Self {
            features,
            params,
            score,
            detections,
            annotations: AnnotationSet::new(n),
            config,
            queries_used: 0,
            pending: Vec::new(),
            next_id: 0,
            optimizations: 0,
            last_objective: None,
            transcript,
        })
    }

    /// Features and initial hyperparameters from the unsupervised detector.
    pub fn from_series(x: &TimeSeries, detector: &DetectorConfig, config: SessionConfig) -> Result<Self> {
        let detector = Detector::new(detector.clone());
        let features = detector.features(x)?;
        let (params, _) = detector.initial_params(&features)?;
        Self::new(features, params, config)
    }

    /// Rebuilds a session from its features and transcript, checking that
    /// every issued query and every parameter update is reproduced exactly.
    pub fn replay(features: FeatureMatrix, events: &[TranscriptEvent]) -> Result<Self> {
        let Some(TranscriptEvent::Start { n, config, params }) = events.first() else {
            return Err(Error::Transcript("missing start event".into()));
        };
        if *n != features.len() {
            return Err(Error::Transcript(format!(
                "transcript is for {n} samples, series has {}",
                features.len()
            )));
        }
        let mut session = Self::new(features, params.clone(), config.clone())?;
        for (k, event) in events.iter().enumerate().skip(1) {
            let TranscriptEvent::Label {
                query_id,
                kind,
                center,
                window,
                confirmed,
                params,
                ..
            } = event
            else {
                return Err(Error::Transcript(format!("event {k}: unexpected start event")));
            };
            let pending = session.next_queries()?;
            let query = pending
                .iter()
                .find(|q| q.id == *query_id)
                .ok_or_else(|| Error::Transcript(format!("event {k}: query {query_id} was not issued")))?;
            if query.kind != *kind || query.center != *center || (query.start, query.end) != *window {
                return Err(Error::Transcript(format!("event {k}: query {query_id} differs on replay")));
            }
            session.submit_labels(*query_id, confirmed)?;
            if session.params != *params {
                return Err(Error::Transcript(format!("event {k}: parameters differ on replay")));
            }
        }
        Ok(session)
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn params(&self) -> &Hyperparams {
        &self.params
    }

    pub fn score(&self) -> &ScoreVector {
        &self.score
    }

    pub fn detections(&self) -> &Detections {
        &self.detections
    }

    pub fn annotations(&self) -> &AnnotationSet {
        &self.annotations
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn queries_used(&self) -> usize {
        self.queries_used
    }

    pub fn budget_left(&self) -> usize {
        self.config.budget - self.queries_used
    }

    pub fn pending(&self) -> &[Query] {
        &self.pending
    }

    pub fn last_objective(&self) -> Option<ObjectiveValue> {
        self.last_objective
    }

    pub fn transcript(&self) -> &[TranscriptEvent] {
        &self.transcript
    }

    pub fn series_len(&self) -> usize {
        self.features.len()
    }

    /// Pending queries, issuing a new round if none are outstanding.
    pub fn next_queries(&mut self) -> Result<Vec<Query>> {
        if !self.pending.is_empty() {
            return Ok(self.pending.clone());
        }
        if self.queries_used >= self.config.budget {
            return Err(Error::BudgetExhausted(self.config.budget));
        }
        let (above, below) = threshold_neighbors(&self.score.prominent, self.params.threshold, |i| {
            !self.annotations.is_covered(i)
        });
        let zeta = self.params.threshold;
        let s = &self.score.prominent;
        let centers: Vec<(QueryKind, usize)> = match (above, below) {
            (None, None) => return Err(Error::SessionComplete),
            (Some(a), None) => vec![(QueryKind::Above, a)],
            (None, Some(b)) => vec![(QueryKind::Below, b)],
            (Some(a), Some(b)) if self.config.queries_per_round == 1 => {
                if zeta - s[b] < s[a] - zeta {
                    vec![(QueryKind::Below, b)]
                } else {
                    vec![(QueryKind::Above, a)]
                }
            }
            (Some(a), Some(b)) => vec![(QueryKind::Above, a), (QueryKind::Below, b)],
        };
        let allowed = self.budget_left();
        for (kind, center) in centers {
            if self.pending.len() == allowed {
                break;
            }
            if let Some((start, end)) = self.free_window(center) {
                self.pending.push(Query {
                    id: self.next_id,
                    kind,
                    center,
                    start,
                    end,
                });
                self.next_id += 1;
            }
        }
        Ok(self.pending.clone())
    }

    fn blocked(&self, i: usize) -> bool {
        self.annotations.is_covered(i) || self.pending.iter().any(|q| q.contains(i))
    }

    /// Largest interval within `center ± eta` around the center that avoids
    /// annotated and pending indices.
    fn free_window(&self, center: usize) -> Option<(usize, usize)> {
        if self.blocked(center) {
            return None;
        }
        let p = self.config.eta;
        let lo = center.saturating_sub(p);
        let hi = (center + p).min(self.series_len() - 1);
        let mut start = center;
        while start > lo && !self.blocked(start - 1) {
            start -= 1;
        }
        let mut end = center;
        while end < hi && !self.blocked(end + 1) {
            end += 1;
        }
        Some((start, end))
    }

    /// Answers a pending query with the change points confirmed inside its
    /// window, re-optimizing when the schedule says so.
    pub fn submit_labels(&mut self, query_id: u64, confirmed: &[usize]) -> Result<Submission> {
        let pos = self
            .pending
            .iter()
            .position(|q| q.id == query_id)
            .ok_or(Error::UnknownQuery(query_id))?;
        if self.queries_used >= self.config.budget {
            return Err(Error::BudgetExhausted(self.config.budget));
        }
        let query = self.pending[pos].clone();
        let mut confirmed = confirmed.to_vec();
        confirmed.sort_unstable();
        confirmed.dedup();
        self.annotations.add(query.start, query.end, &confirmed)?;
        self.pending.remove(pos);
        self.queries_used += 1;

        let optimized = self.config.optimizes_after(self.queries_used);
        if optimized {
            let seed = self
                .config
                .seed
                .wrapping_add(self.optimizations.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let result = optimize(
                &self.features,
                &self.annotations,
                &self.config.search,
                &self.params,
                self.config.eta,
                seed,
            )?;
            self.optimizations += 1;
            self.last_objective = Some(result.objective);
            if result.params != self.params {
                let (score, detections) = detect(&self.features, &result.params)?;
                self.params = result.params;
                self.score = score;
                self.detections = detections;
            }
        }
        self.transcript.push(TranscriptEvent::Label {
            query_id,
            kind: query.kind,
            center: query.center,
            window: (query.start, query.end),
            confirmed,
            optimized,
            params: self.params.clone(),
        });
        Ok(Submission {
            optimized,
            objective: self.last_objective,
        })
    }

    /// Current detections scored against a full ground truth.
    pub fn evaluate(&self, truth: &[usize]) -> ObjectiveValue {
        score_detections(&self.detections.indices, truth, self.config.eta)
    }
}

/// Closest available indices at or above and strictly below the threshold,
/// ties going to the smaller index.
pub fn threshold_neighbors(
    scores: &[f64],
    threshold: f64,
    available: impl Fn(usize) -> bool,
) -> (Option<usize>, Option<usize>) {
    let mut above: Option<(f64, usize)> = None;
    let mut below: Option<(f64, usize)> = None;
    for (i, &v) in scores.iter().enumerate() {
        if !available(i) {
            continue;
        }
        let (slot, gap) = if v >= threshold {
            (&mut above, v - threshold)
        } else {
            (&mut below, threshold - v)
        };
        if slot.is_none_or(|(g, _)| gap < g) {
            *slot = Some((gap, i));
        }
    }
    (above.map(|(_, i)| i), below.map(|(_, i)| i))
}

pub fn score_detections(detections: &[usize], truth: &[usize], eta: usize) -> ObjectiveValue {
    let report = match_points(detections, truth, eta);
    let (precision, recall, f1) = prf(report.tp, detections.len(), truth.len());
    ObjectiveValue {
        loss: 1.0 - f1,
        f1,
        precision,
        recall,
    }
}

/// Source of labels for a query.
pub trait Annotator {
    fn annotate(&mut self, query: &Query) -> Vec<usize>;
}

/// Answers every query with the ground-truth change points in its window.
#[derive(Debug, Clone)]
pub struct OracleAnnotator {
    truth: Vec<usize>,
}

impl OracleAnnotator {
    pub fn new(truth: &LabelSet) -> Self {
        Self {
            truth: truth.indices().to_vec(),
        }
    }
}

impl Annotator for OracleAnnotator {
    fn annotate(&mut self, query: &Query) -> Vec<usize> {
        self.truth.iter().copied().filter(|&i| query.contains(i)).collect()
    }
}

/// Learning curve and transcript of a simulated session.
#[derive(Debug, Clone)]
pub struct Simulation {
    /// Metrics on the full ground truth after 0, 1, ..., budget queries.
    /// When the series runs out of unlabeled indices early the last value
    /// is repeated.
    pub curve: Vec<ObjectiveValue>,
    pub transcript: Vec<TranscriptEvent>,
    pub session: Session,
}

/// Drives a session to its budget, answering queries in issue order.
pub fn drive<A: Annotator>(mut session: Session, annotator: &mut A, truth: &[usize]) -> Result<Simulation> {
    let mut curve = vec![session.evaluate(truth)];
    'outer: while session.queries_used() < session.config().budget {
        let queries = match session.next_queries() {
            Ok(q) => q,
            Err(Error::SessionComplete) => break,
            Err(e) => return Err(e),
        };
        for q in queries {
            let confirmed = annotator.annotate(&q);
            session.submit_labels(q.id, &confirmed)?;
            curve.push(session.evaluate(truth));
            if session.queries_used() >= session.config().budget {
                break 'outer;
            }
        }
    }
    let last = *curve.last().expect("curve starts non-empty");
    curve.resize(session.config().budget + 1, last);
    Ok(Simulation {
        curve,
        transcript: session.transcript().to_vec(),
        session,
    })
}

/// Full simulated loop with the oracle annotator.
pub fn run_simulated(
    x: &TimeSeries,
    truth: &LabelSet,
    detector: &DetectorConfig,
    config: SessionConfig,
) -> Result<Simulation> {
    if truth.indices().iter().any(|&i| i >= x.len()) {
        return Err(Error::LabelOutOfRange {
            index: *truth.indices().last().unwrap_or(&0),
            n: x.len(),
        });
    }
    let session = Session::from_series(x, detector, config)?;
    drive(session, &mut OracleAnnotator::new(truth), truth.indices())
}
