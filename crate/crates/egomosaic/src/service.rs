//! HTTP API over sessions, analytics and panorama jobs.
//!
//! Panorama builds run as background jobs, one at a time per session, and
//! are polled through `GET /jobs/{id}`. Finished panoramas are cached by
//! panorama id (session content hash plus canonical parameters) and never
//! mutated; overlays are rendered per request from the cached panorama.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use egomosaic_core::analytics::{
    classify_session, poi_events, summary_matrix, Metric, DEFAULT_IOU_THRESHOLD, DEFAULT_MISSING_THRESHOLD,
};
use egomosaic_core::compositor::{select_frames, CompositorError, OverlaySpec, OverlayStyle, Panorama, PanoramaParams};
use egomosaic_core::Session;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::export::{panorama_id, PanoramaAnalytics, PanoramaDoc};
use crate::imaging::{encode_png_rgb, encode_png_rgba, load_rgb};
use crate::pipeline::{build_from_disk, overlay, session_palette};
use crate::session_io::{load_session, session_content_hash, SessionError};

/// Response header carrying overlay warnings, `; `-separated.
pub const WARNINGS_HEADER: &str = "x-egomosaic-warnings";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Session roots must lie under one of these directories.
    pub allow: Vec<PathBuf>,
    /// Finished panoramas kept in memory; the oldest is evicted first.
    pub cache_size: usize,
    /// Seed used when a submitted parameter set has none.
    pub default_seed: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            allow: Vec::new(),
            cache_size: 16,
            default_seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError::bad_request(e.code(), e.to_string())
    }
}

pub fn compositor_code(e: &CompositorError) -> &'static str {
    match e {
        CompositorError::InvalidParams(_) => "InvalidParams",
        CompositorError::InvalidRange(_) => "InvalidRange",
        CompositorError::BaseFrameUnstitchable { .. } => "BaseFrameUnstitchable",
        CompositorError::AllFramesExcluded => "AllFramesExcluded",
        CompositorError::CanvasTooLarge { .. } => "CanvasTooLarge",
        CompositorError::DetectionOnExcludedFrame(_) => "DetectionOnExcludedFrame",
        CompositorError::Feature(_) => "FeatureError",
        CompositorError::Filter(_) => "FilterError",
        CompositorError::Geometry(_) => "GeometryError",
    }
}

impl From<CompositorError> for ApiError {
    fn from(e: CompositorError) -> Self {
        ApiError::bad_request(compositor_code(&e), e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", content = "reason", rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub session_id: String,
    pub params: PanoramaParams,
    #[serde(flatten)]
    pub state: JobState,
    /// Panorama id, present once the job is done.
    pub result: Option<String>,
    /// Seconds since the Unix epoch.
    pub created_at: f64,
    pub finished_at: Option<f64>,
}

struct SessionHandle {
    id: String,
    root: PathBuf,
    session: Session,
    build_lock: tokio::sync::Mutex<()>,
}

struct StoredPanorama {
    session_id: String,
    params: PanoramaParams,
    panorama: Panorama,
    png: Bytes,
}

#[derive(Default)]
struct Registry {
    sessions: HashMap<String, Arc<SessionHandle>>,
    jobs: HashMap<String, Job>,
    /// Latest job per panorama id.
    job_by_panorama: HashMap<String, String>,
    panoramas: HashMap<String, Arc<StoredPanorama>>,
    insertion: VecDeque<String>,
    next_job: u64,
}

impl Registry {
    fn new_job(&mut self, session_id: &str, params: PanoramaParams, pid: &str, state: JobState) -> Job {
        self.next_job += 1;
        let now = now();
        let done = state == JobState::Done;
        let job = Job {
            job_id: format!("job-{:06}", self.next_job),
            session_id: session_id.into(),
            params,
            state,
            result: done.then(|| pid.to_string()),
            created_at: now,
            finished_at: done.then_some(now),
        };
        self.jobs.insert(job.job_id.clone(), job.clone());
        self.job_by_panorama.insert(pid.into(), job.job_id.clone());
        job
    }

    fn store(&mut self, pid: String, p: StoredPanorama, cache_size: usize) {
        if self.panoramas.insert(pid.clone(), Arc::new(p)).is_none() {
            self.insertion.push_back(pid);
        }
        while self.insertion.len() > cache_size.max(1) {
            if let Some(old) = self.insertion.pop_front() {
                self.panoramas.remove(&old);
            }
        }
    }
}

pub struct AppState {
    config: ServiceConfig,
    allow: Vec<PathBuf>,
    registry: Mutex<Registry>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        let allow = config
            .allow
            .iter()
            .map(|p| p.canonicalize().unwrap_or_else(|_| p.clone()))
            .collect();
        Arc::new(AppState {
            config,
            allow,
            registry: Mutex::new(Registry::default()),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Registry> {
        self.registry.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn allowed(&self, path: &Path) -> bool {
        self.allow.iter().any(|a| path.starts_with(a))
    }

    fn session(&self, id: &str) -> ApiResult<Arc<SessionHandle>> {
        self.lock()
            .sessions
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("SessionNotFound", format!("no session {id}")))
    }

    fn panorama(&self, pid: &str) -> ApiResult<Arc<StoredPanorama>> {
        self.lock()
            .panoramas
            .get(pid)
            .cloned()
            .ok_or_else(|| ApiError::not_found("PanoramaNotFound", format!("no panorama {pid}")))
    }
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(open_session))
        .route("/sessions/{id}/meta", get(session_meta))
        .route("/sessions/{id}/frames/{fid}", get(frame_image))
        .route("/sessions/{id}/timeline/summary", get(timeline_summary))
        .route("/sessions/{id}/timeline/classification", get(timeline_classification))
        .route("/sessions/{id}/timeline/distance", get(timeline_distance))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/panoramas", post(submit_panorama))
        .route("/jobs/{id}", get(job_status))
        .route("/panoramas/{pid}/image", get(panorama_image))
        .route("/panoramas/{pid}/overlay", get(panorama_overlay))
        .route("/panoramas/{pid}/report", get(panorama_report))
        .route("/panoramas/{pid}/distance", get(panorama_distance))
        .with_state(state)
}

/// Binds and serves until ctrl-c.
pub async fn serve(config: ServiceConfig, bind: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(AppState::new(config)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

type Params = Query<HashMap<String, String>>;

fn parse_json(body: &Bytes) -> ApiResult<Value> {
    if body.is_empty() {
        return Ok(Value::Object(Default::default()));
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("MalformedRequest", e.to_string()))
}

fn query_num<T: std::str::FromStr>(q: &HashMap<String, String>, key: &str, default: T) -> ApiResult<T> {
    match q.get(key).map(|s| s.trim()).filter(|s| !s.is_empty()) {
        None => Ok(default),
        Some(s) => s
            .parse()
            .map_err(|_| ApiError::bad_request("InvalidParams", format!("cannot parse {key}={s:?}"))),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))
}

fn png(bytes: Bytes) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

#[derive(Deserialize)]
struct OpenRequest {
    root: PathBuf,
}

async fn open_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: OpenRequest = serde_json::from_value(parse_json(&body)?)
        .map_err(|e| ApiError::bad_request("MalformedRequest", e.to_string()))?;
    let root = match req.root.canonicalize() {
        Ok(p) => p,
        Err(_) if !state.allowed(&req.root) => {
            return Err(ApiError::new(StatusCode::FORBIDDEN, "Forbidden", "session root is not allowed"))
        }
        Err(_) => return Err(SessionError::MissingFile(req.root).into()),
    };
    if !state.allowed(&root) {
        return Err(ApiError::new(
            StatusCode::FORBIDDEN,
            "Forbidden",
            format!("{} is outside the allowed roots", root.display()),
        ));
    }
    let dir = root.clone();
    let (session, hash) = blocking(move || {
        let s = load_session(&dir)?;
        let h = session_content_hash(&s, &dir)?;
        Ok::<_, SessionError>((s, h))
    })
    .await??;
    let id = hash;
    let handle = {
        let mut reg = state.lock();
        reg.sessions
            .entry(id.clone())
            .or_insert_with(|| {
                Arc::new(SessionHandle {
                    id,
                    root,
                    session,
                    build_lock: tokio::sync::Mutex::new(()),
                })
            })
            .clone()
    };
    Ok(Json(meta_json(&handle)))
}

fn meta_json(h: &SessionHandle) -> Value {
    let s = &h.session;
    let (w, ht) = s.frame_dims();
    let (palette, _) = session_palette(s);
    let frames: Vec<Value> = s
        .frames
        .iter()
        .map(|f| json!({ "id": f.frame_id, "t": f.timestamp, "file": f.image_path }))
        .collect();
    json!({
        "session_id": h.id,
        "root": h.root,
        "frame_count": s.frames.len(),
        "frame_width": w,
        "frame_height": ht,
        "time_range": [s.frames.first().map(|f| f.timestamp), s.frames.last().map(|f| f.timestamp)],
        "frames": frames,
        "vocabulary": s.vocabulary,
        "label_colors": palette.entries,
        "prediction_count": s.predictions.len(),
        "ground_truth_count": s.ground_truth.len(),
        "intrinsics": s.intrinsics,
    })
}

async fn session_meta(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let h = state.session(&id)?;
    Ok(Json(meta_json(&h)))
}

async fn frame_image(
    State(state): State<Arc<AppState>>,
    UrlPath((id, fid)): UrlPath<(String, String)>,
) -> ApiResult<Response> {
    let h = state.session(&id)?;
    let frame = fid
        .parse::<u32>()
        .ok()
        .and_then(|f| h.session.frame(f))
        .ok_or_else(|| ApiError::not_found("FrameNotFound", format!("no frame {fid}")))?;
    let path = h.root.join(&frame.image_path);
    let bytes = blocking(move || load_rgb(&path).map(|img| encode_png_rgb(&img)))
        .await?
        .map_err(|e| ApiError::bad_request("UnreadableImage", e))?;
    Ok(png(bytes.into()))
}

async fn timeline_summary(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Params,
) -> ApiResult<Json<Value>> {
    let h = state.session(&id)?;
    let metric = match q.get("metric").map(String::as_str) {
        None | Some("confidence") => Metric::Confidence,
        Some("iou") => Metric::IoU,
        Some(other) => {
            return Err(ApiError::bad_request(
                "InvalidParams",
                format!("metric must be confidence or iou, got {other:?}"),
            ))
        }
    };
    Ok(Json(json!(summary_matrix(&h.session, metric))))
}

async fn timeline_classification(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Params,
) -> ApiResult<Json<Value>> {
    let h = state.session(&id)?;
    let thr: f64 = query_num(&q, "iou", DEFAULT_IOU_THRESHOLD)?;
    if !(0.0..=1.0).contains(&thr) {
        return Err(ApiError::bad_request("InvalidParams", "iou must lie in [0, 1]"));
    }
    Ok(Json(json!({
        "iou_threshold": thr,
        "frames": classify_session(&h.session, thr),
    })))
}

async fn timeline_distance(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Params,
) -> ApiResult<Json<PanoramaAnalytics>> {
    let h = state.session(&id)?;
    let pid = q
        .get("panorama_id")
        .filter(|s| !s.is_empty())
        .ok_or_else(|| ApiError::bad_request("MissingPanorama", "distance needs a panorama_id"))?;
    let p = state.panorama(pid)?;
    if p.session_id != h.id {
        return Err(ApiError::bad_request(
            "MissingPanorama",
            format!("panorama {pid} belongs to another session"),
        ));
    }
    Ok(Json(PanoramaAnalytics::new(&h.session, &p.panorama)))
}

async fn events(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Params,
) -> ApiResult<Json<Value>> {
    let h = state.session(&id)?;
    let missing: usize = query_num(&q, "missing", DEFAULT_MISSING_THRESHOLD)?;
    Ok(Json(json!({
        "missing_threshold": missing,
        "events": poi_events(&h.session, missing),
    })))
}

/// Fills in the configured default seed when the request has none.
fn params_from_request(body: &Bytes, default_seed: u64) -> ApiResult<PanoramaParams> {
    let mut v = parse_json(body)?;
    let mut params = match v.get_mut("params") {
        Some(p) => p.take(),
        None => Value::Object(Default::default()),
    };
    let obj = params
        .as_object_mut()
        .ok_or_else(|| ApiError::bad_request("MalformedRequest", "params must be an object"))?;
    obj.entry("seed").or_insert(json!(default_seed));
    serde_json::from_value(params).map_err(|e| ApiError::bad_request("InvalidParams", e.to_string()))
}

async fn submit_panorama(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Job>)> {
    let h = state.session(&id)?;
    let params = params_from_request(&body, state.config.default_seed)?;
    params.validate()?;
    select_frames(&h.session, &params)?;
    let pid = panorama_id(&h.id, &params);

    let job = {
        let mut reg = state.lock();
        let existing = reg.job_by_panorama.get(&pid).and_then(|j| reg.jobs.get(j)).cloned();
        let cached = reg.panoramas.contains_key(&pid);
        match existing {
            Some(j) if cached && j.state == JobState::Done => return Ok((StatusCode::OK, Json(j))),
            Some(j) if matches!(j.state, JobState::Queued | JobState::Running) => {
                return Ok((StatusCode::ACCEPTED, Json(j)))
            }
            _ if cached => return Ok((StatusCode::OK, Json(reg.new_job(&h.id, params, &pid, JobState::Done)))),
            _ => reg.new_job(&h.id, params, &pid, JobState::Queued),
        }
    };
    tokio::spawn(run_job(state.clone(), h, job.job_id.clone(), pid, params));
    Ok((StatusCode::ACCEPTED, Json(job)))
}

fn set_state(state: &AppState, job_id: &str, s: JobState, result: Option<String>) {
    let mut reg = state.lock();
    if let Some(j) = reg.jobs.get_mut(job_id) {
        if matches!(s, JobState::Done | JobState::Failed(_)) {
            j.finished_at = Some(now());
        }
        j.state = s;
        j.result = result;
    }
}

async fn run_job(state: Arc<AppState>, h: Arc<SessionHandle>, job_id: String, pid: String, params: PanoramaParams) {
    let _serial = h.build_lock.lock().await;
    set_state(&state, &job_id, JobState::Running, None);
    let handle = h.clone();
    let built = tokio::task::spawn_blocking(move || {
        let p = build_from_disk(&handle.session, &handle.root, &params)?;
        let png = encode_png_rgba(&p.image);
        Ok::<_, CompositorError>((p, png))
    })
    .await;
    match built {
        Ok(Ok((panorama, png))) => {
            let stored = StoredPanorama {
                session_id: h.id.clone(),
                params,
                panorama,
                png: png.into(),
            };
            state.lock().store(pid.clone(), stored, state.config.cache_size);
            set_state(&state, &job_id, JobState::Done, Some(pid));
        }
        Ok(Err(e)) => {
            tracing::warn!(job = %job_id, error = %e, "panorama build failed");
            set_state(&state, &job_id, JobState::Failed(format!("{}: {e}", compositor_code(&e))), None);
        }
        Err(e) => set_state(&state, &job_id, JobState::Failed(format!("Internal: {e}")), None),
    }
}

async fn job_status(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Job>> {
    state
        .lock()
        .jobs
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found("JobNotFound", format!("no job {id}")))
}

async fn panorama_image(State(state): State<Arc<AppState>>, UrlPath(pid): UrlPath<String>) -> ApiResult<Response> {
    Ok(png(state.panorama(&pid)?.png.clone()))
}

/// Parses the overlay query: `style`, `min_conf`, `labels` (comma
/// separated) and `highlight` (frame id).
pub fn overlay_spec_from_query(q: &HashMap<String, String>) -> Result<OverlaySpec, ApiError> {
    let style = match q.get("style").map(String::as_str) {
        None | Some("") | Some("boxes") | Some("bounding_boxes") => OverlayStyle::BoundingBoxes,
        Some("centroids") => OverlayStyle::Centroids,
        Some("arrows") => OverlayStyle::Arrows,
        Some(other) => return Err(ApiError::bad_request("InvalidParams", format!("unknown style {other:?}"))),
    };
    let labels = q.get("labels").filter(|s| !s.is_empty()).map(|s| {
        s.split(',')
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect::<BTreeSet<_>>()
    });
    let spec = OverlaySpec {
        style,
        min_confidence: query_num(q, "min_conf", 0.0)?,
        label_filter: labels,
        highlighted_frame: q
            .get("highlight")
            .filter(|s| !s.is_empty())
            .map(|s| s.parse())
            .transpose()
            .map_err(|_| ApiError::bad_request("InvalidParams", "highlight must be a frame id"))?,
    };
    spec.validate()?;
    Ok(spec)
}

fn header_text(warnings: &[String]) -> HeaderValue {
    let joined: String = warnings
        .join("; ")
        .chars()
        .map(|c| if c == ' ' || c.is_ascii_graphic() { c } else { '?' })
        .collect();
    HeaderValue::from_str(&joined).expect("visible ASCII is a valid header value")
}

async fn panorama_overlay(
    State(state): State<Arc<AppState>>,
    UrlPath(pid): UrlPath<String>,
    Query(q): Params,
) -> ApiResult<Response> {
    let spec = overlay_spec_from_query(&q)?;
    let p = state.panorama(&pid)?;
    let h = state.session(&p.session_id)?;
    let out = blocking(move || overlay(&h.session, &p.panorama, &spec).map(|o| (encode_png_rgba(&o.image), o.warnings)))
        .await??;
    let mut headers = HeaderMap::new();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("image/png"));
    if !out.1.is_empty() {
        headers.insert(WARNINGS_HEADER, header_text(&out.1));
    }
    Ok((headers, out.0).into_response())
}

async fn panorama_report(
    State(state): State<Arc<AppState>>,
    UrlPath(pid): UrlPath<String>,
) -> ApiResult<Json<PanoramaDoc>> {
    let p = state.panorama(&pid)?;
    Ok(Json(PanoramaDoc::new(&p.session_id, &p.params, &p.panorama)))
}

async fn panorama_distance(
    State(state): State<Arc<AppState>>,
    UrlPath(pid): UrlPath<String>,
) -> ApiResult<Json<PanoramaAnalytics>> {
    let p = state.panorama(&pid)?;
    let h = state.session(&p.session_id)?;
    Ok(Json(PanoramaAnalytics::new(&h.session, &p.panorama)))
}
