//! HTTP annotation-session service under `/v1`.
//!
//! Each session is guarded by its own mutex, so mutations are serialized per
//! session and reads never observe a half-applied update. With a data
//! directory, every session is stored as `<id>.csv` (the prepared series),
//! `<id>.config.json` and an append-only `<id>.jsonl` transcript, and is
//! replayed when the service starts.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path as UrlPath, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mural_core::active::{read_transcript, write_transcript, AnnotatedWindow, Query, Session};
use mural_core::optimize::ObjectiveValue;
use mural_core::signal_io::{load_csv, parse_csv};
use mural_core::{Detector, Error as CoreError, Hyperparams, TimeSeries};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::Config;

#[derive(Debug, Clone)]
pub struct ServiceSettings {
    pub defaults: Config,
    pub data_dir: Option<PathBuf>,
    pub max_upload_bytes: usize,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self {
            defaults: Config::default(),
            data_dir: None,
            max_upload_bytes: 64 << 20,
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id}"))
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let (status, code) = match &e {
            CoreError::UnknownQuery(_) => (StatusCode::CONFLICT, "unknown_query"),
            CoreError::BudgetExhausted(_) => (StatusCode::CONFLICT, "budget_exhausted"),
            CoreError::SessionComplete => (StatusCode::CONFLICT, "session_complete"),
            CoreError::LabelOutsideWindow { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "label_outside_window"),
            CoreError::Io { .. } => (StatusCode::BAD_REQUEST, "unreadable_input"),
            CoreError::Transcript(_) => (StatusCode::INTERNAL_SERVER_ERROR, "transcript"),
            _ => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_input"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Slot {
    session: Session,
    /// Transcript events already written to disk.
    persisted: usize,
}

struct Entry {
    id: String,
    series: TimeSeries,
    config: Config,
    slot: Mutex<Slot>,
}

impl Entry {
    fn lock(&self) -> MutexGuard<'_, Slot> {
        self.slot.lock().unwrap_or_else(|e| e.into_inner())
    }
}

struct Inner {
    settings: ServiceSettings,
    sessions: RwLock<HashMap<String, Arc<Entry>>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Creates the service state, replaying any sessions stored in the data
    /// directory. Sessions that fail to replay are reported and skipped.
    pub fn new(settings: ServiceSettings) -> anyhow::Result<Self> {
        let mut sessions = HashMap::new();
        if let Some(dir) = &settings.data_dir {
            fs::create_dir_all(dir)?;
            for item in fs::read_dir(dir)? {
                let path = item?.path();
                if path.extension().is_some_and(|e| e == "jsonl") {
                    match restore(&path) {
                        Ok(entry) => {
                            sessions.insert(entry.id.clone(), Arc::new(entry));
                        }
                        Err(e) => eprintln!("skipping {}: {e:#}", path.display()),
                    }
                }
            }
        }
        Ok(Self(Arc::new(Inner {
            settings,
            sessions: RwLock::new(sessions),
        })))
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.read_sessions().keys().cloned().collect();
        ids.sort();
        ids
    }

    fn read_sessions(&self) -> std::sync::RwLockReadGuard<'_, HashMap<String, Arc<Entry>>> {
        self.0.sessions.read().unwrap_or_else(|e| e.into_inner())
    }

    fn entry(&self, id: &str) -> ApiResult<Arc<Entry>> {
        self.read_sessions().get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }

    fn files(&self, id: &str) -> Option<SessionFiles> {
        self.0.settings.data_dir.as_deref().map(|d| SessionFiles::new(d, id))
    }

    fn persist(&self, entry: &Entry, slot: &mut Slot) -> ApiResult<()> {
        let Some(files) = self.files(&entry.id) else {
            return Ok(());
        };
        let events = &slot.session.transcript()[slot.persisted..];
        if events.is_empty() {
            return Ok(());
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&files.transcript)
            .map_err(|e| ApiError::internal(format!("cannot write transcript: {e}")))?;
        write_transcript(events, file)?;
        slot.persisted = slot.session.transcript().len();
        Ok(())
    }
}

struct SessionFiles {
    series: PathBuf,
    config: PathBuf,
    transcript: PathBuf,
}

impl SessionFiles {
    fn new(dir: &Path, id: &str) -> Self {
        Self {
            series: dir.join(format!("{id}.csv")),
            config: dir.join(format!("{id}.config.json")),
            transcript: dir.join(format!("{id}.jsonl")),
        }
    }
}

fn restore(transcript: &Path) -> anyhow::Result<Entry> {
    let id = transcript
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| anyhow::anyhow!("bad file name"))?
        .to_string();
    let dir = transcript.parent().unwrap_or(Path::new("."));
    let files = SessionFiles::new(dir, &id);
    let config: Config = serde_json::from_reader(BufReader::new(File::open(&files.config)?))?;
    let series = load_csv(&files.series, false)?;
    let events = read_transcript(BufReader::new(File::open(&files.transcript)?))?;
    let features = Detector::new(config.detector_config()).features(&series)?;
    let session = Session::replay(features, &events)?;
    let persisted = session.transcript().len();
    Ok(Entry {
        id,
        series,
        config,
        slot: Mutex::new(Slot { session, persisted }),
    })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    /// Server-side CSV path.
    path: Option<String>,
    /// Inline CSV text.
    csv: Option<String>,
    #[serde(default)]
    has_header: bool,
    config: Option<serde_json::Value>,
}

#[derive(Debug, Serialize)]
struct Snapshot {
    id: String,
    n: usize,
    channels: usize,
    config: Config,
    params: Hyperparams,
    queries_used: usize,
    budget: usize,
    budget_left: usize,
    pending: Vec<Query>,
    detections: Vec<usize>,
    annotations: Vec<AnnotatedWindow>,
    positives: Vec<usize>,
    last_objective: Option<ObjectiveValue>,
}

fn snapshot(entry: &Entry, slot: &Slot) -> Snapshot {
    let s = &slot.session;
    Snapshot {
        id: entry.id.clone(),
        n: entry.series.len(),
        channels: entry.series.dim(),
        config: entry.config.clone(),
        params: s.params().clone(),
        queries_used: s.queries_used(),
        budget: s.config().budget,
        budget_left: s.budget_left(),
        pending: s.pending().to_vec(),
        detections: s.detections().indices.clone(),
        annotations: s.annotations().windows().to_vec(),
        positives: s.annotations().positives().to_vec(),
        last_objective: s.last_objective(),
    }
}

#[derive(Debug, Serialize)]
struct QueryView {
    #[serde(flatten)]
    query: Query,
    /// Window samples, one array per channel.
    values: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRequest {
    confirmed: Vec<usize>,
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed JSON body: {e}")))
}

async fn read_create_request(state: &AppState, req: Request) -> ApiResult<CreateRequest> {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    if !is_multipart {
        let body = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "body_rejected", e.to_string()))?;
        return parse_json(&body);
    }
    let mut multipart = Multipart::from_request(req, state)
        .await
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let mut out = CreateRequest::default();
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(e.to_string()))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let text = field.text().await.map_err(|e| ApiError::bad_request(e.to_string()))?;
        match name.as_str() {
            "file" | "csv" => out.csv = Some(text),
            "path" => out.path = Some(text),
            "has_header" => out.has_header = matches!(text.trim(), "true" | "1" | "yes"),
            "config" => out.config = Some(parse_json(text.as_bytes())?),
            other => return Err(ApiError::bad_request(format!("unexpected form field {other:?}"))),
        }
    }
    Ok(out)
}

async fn create_session(State(state): State<AppState>, req: Request) -> ApiResult<(StatusCode, Json<Snapshot>)> {
    let request = read_create_request(&state, req).await?;
    let config = match &request.config {
        Some(v) => state
            .0
            .settings
            .defaults
            .overlay_json(v)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_config", format!("{e:#}")))?,
        None => state.0.settings.defaults.clone(),
    };
    let worker = state.clone();
    let entry = tokio::task::spawn_blocking(move || -> ApiResult<Entry> {
        let raw = match (&request.csv, &request.path) {
            (Some(text), None) => parse_csv(text.as_bytes(), request.has_header)?,
            (None, Some(path)) => load_csv(path, request.has_header)?,
            _ => return Err(ApiError::bad_request("give exactly one of `csv` or `path`")),
        };
        let series = config.prepare(&raw);
        let session = Session::from_series(&series, &config.detector_config(), config.session_config())?;
        let id = new_id(&worker);
        if let Some(files) = worker.files(&id) {
            let write = || -> std::io::Result<()> {
                series.save_csv(&files.series).map_err(std::io::Error::other)?;
                fs::write(&files.config, serde_json::to_vec_pretty(&config)?)?;
                Ok(())
            };
            write().map_err(|e| ApiError::internal(format!("cannot store session: {e}")))?;
        }
        Ok(Entry {
            id,
            series,
            config,
            slot: Mutex::new(Slot { session, persisted: 0 }),
        })
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    {
        let mut slot = entry.lock();
        state.persist(&entry, &mut slot)?;
    }
    let entry = Arc::new(entry);
    let snap = snapshot(&entry, &entry.lock());
    state
        .0
        .sessions
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .insert(entry.id.clone(), entry);
    Ok((StatusCode::CREATED, Json(snap)))
}

fn new_id(state: &AppState) -> String {
    loop {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let taken = state.read_sessions().contains_key(&id)
            || state.files(&id).is_some_and(|f| f.transcript.exists());
        if !taken {
            return id;
        }
    }
}

async fn list_sessions(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "sessions": state.session_ids() }))
}

async fn get_session(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Snapshot>> {
    let entry = state.entry(&id)?;
    let slot = entry.lock();
    Ok(Json(snapshot(&entry, &slot)))
}

async fn get_queries(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<serde_json::Value>> {
    let entry = state.entry(&id)?;
    let mut slot = entry.lock();
    let (queries, status) = match slot.session.next_queries() {
        Ok(q) => (q, "pending"),
        Err(CoreError::BudgetExhausted(_)) => (Vec::new(), "budget_exhausted"),
        Err(CoreError::SessionComplete) => (Vec::new(), "complete"),
        Err(e) => return Err(e.into()),
    };
    let views: Vec<QueryView> = queries
        .into_iter()
        .map(|q| QueryView {
            values: entry
                .series
                .channels()
                .iter()
                .map(|c| c[q.start..=q.end].to_vec())
                .collect(),
            query: q,
        })
        .collect();
    Ok(Json(json!({
        "status": status,
        "queries_used": slot.session.queries_used(),
        "budget_left": slot.session.budget_left(),
        "queries": views,
    })))
}

async fn submit_labels(
    State(state): State<AppState>,
    UrlPath((id, qid)): UrlPath<(String, u64)>,
    body: Bytes,
) -> ApiResult<Json<Snapshot>> {
    let request: LabelRequest = parse_json(&body)?;
    let entry = state.entry(&id)?;
    let worker = state.clone();
    tokio::task::spawn_blocking(move || {
        let mut slot = entry.lock();
        slot.session.submit_labels(qid, &request.confirmed)?;
        worker.persist(&entry, &mut slot)?;
        Ok(Json(snapshot(&entry, &slot)))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn get_detections(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<serde_json::Value>> {
    let entry = state.entry(&id)?;
    let slot = entry.lock();
    let s = &slot.session;
    Ok(Json(json!({
        "detections": s.detections().indices,
        "threshold": s.params().threshold,
        "weights": s.params().weights,
        "score": s.score().prominent,
    })))
}

async fn get_transcript(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let entry = state.entry(&id)?;
    let mut buf = Vec::new();
    write_transcript(entry.lock().session.transcript(), &mut buf)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], buf).into_response())
}

async fn delete_session(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<StatusCode> {
    let removed = state
        .0
        .sessions
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .remove(&id);
    if removed.is_none() {
        return Err(ApiError::not_found(&id));
    }
    if let Some(files) = state.files(&id) {
        for path in [files.series, files.config, files.transcript] {
            let _ = fs::remove_file(path);
        }
    }
    Ok(StatusCode::NO_CONTENT)
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(state: AppState) -> Router {
    let limit = state.0.settings.max_upload_bytes;
    let v1 = Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/queries", get(get_queries))
        .route("/sessions/{id}/queries/{qid}/labels", post(submit_labels))
        .route("/sessions/{id}/detections", get(get_detections))
        .route("/sessions/{id}/transcript", get(get_transcript));
    Router::new()
        .nest("/v1", v1)
        .fallback(fallback)
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Serves the API on an already bound listener until the process is stopped.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
