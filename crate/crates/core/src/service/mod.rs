//! Local HTTP companion for the region-selection UI.
//!
//! Images are kept in memory for the life of the process. Unmixing jobs are
//! queued FIFO and executed one at a time on a dedicated worker thread.

use std::collections::HashMap;
use std::sync::mpsc;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;
use uuid::Uuid;

use crate::dictionary::{from_regions, normalize_constraints, validate_problem, CountKind, PixelCoord, RegionSpec};
use crate::error::Error;
use crate::io::{HsiCube, HsiHeader};
use crate::linalg::Metric;
use crate::m2pals::{m2pals, M2palsOptions};
use crate::report::SelectionReport;

const MAX_UPLOAD_BYTES: usize = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmixRequest {
    pub image_id: String,
    pub regions: Vec<RegionSpec>,
    /// Defaults to the sum of exact and lower-bound counts.
    #[serde(default)]
    pub r: Option<usize>,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default)]
    pub nonneg: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobResult {
    /// Image position of each endmember, in column order of `A`.
    pub selected_pixels: Vec<Option<PixelCoord>>,
    pub selection: SelectionReport,
    pub relative_error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<f64>,
    /// One URL per endmember, serving the abundance map as a byte grid.
    pub abundance_maps: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Job {
    pub id: String,
    pub state: JobState,
    pub request: UnmixRequest,
    pub result: Option<JobResult>,
    pub error: Option<String>,
    #[serde(skip)]
    abundances: Vec<Vec<f64>>,
    #[serde(skip)]
    shape: (usize, usize),
}

struct AppState {
    images: RwLock<HashMap<Uuid, Arc<HsiCube>>>,
    jobs: RwLock<HashMap<Uuid, Job>>,
    queue: mpsc::Sender<(Uuid, Arc<HsiCube>)>,
}

type Shared = Arc<AppState>;

/// Builds the router and starts its job worker. The worker exits once the
/// router and all its clones are dropped.
pub fn router() -> Router {
    let (tx, rx) = mpsc::channel::<(Uuid, Arc<HsiCube>)>();
    let state = Arc::new(AppState {
        images: RwLock::new(HashMap::new()),
        jobs: RwLock::new(HashMap::new()),
        queue: tx,
    });
    let weak = Arc::downgrade(&state);
    std::thread::Builder::new()
        .name("specmix-jobs".into())
        .spawn(move || {
            while let Ok((id, cube)) = rx.recv() {
                let Some(state) = weak.upgrade() else { break };
                run_job(&state, id, &cube);
            }
        })
        .expect("spawn job worker");

    Router::new()
        .route("/images", post(upload_image))
        .route("/images/{id}", get(image_info))
        .route("/images/{id}/composite", get(composite))
        .route("/unmix", post(submit_unmix))
        .route("/jobs/{id}", get(job_status))
        .route("/jobs/{id}/abundance/{k}", get(abundance))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub fn serve_blocking(addr: &str) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router()).await
    })
}

struct ApiError(StatusCode, serde_json::Value);

impl ApiError {
    fn new(status: StatusCode, msg: impl std::fmt::Display) -> Self {
        ApiError(status, json!({ "error": msg.to_string() }))
    }

    fn not_found(what: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, format!("unknown {what}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Infeasible(report) => ApiError(
                StatusCode::CONFLICT,
                json!({ "error": "infeasible constraints", "issues": report.issues, "message": report.to_string() }),
            ),
            other => ApiError::new(StatusCode::BAD_REQUEST, other),
        }
    }
}

fn parse_id(s: &str, what: &str) -> Result<Uuid, ApiError> {
    Uuid::parse_str(s).map_err(|_| ApiError::not_found(what))
}

fn get_image(state: &AppState, id: &str) -> Result<Arc<HsiCube>, ApiError> {
    let id = parse_id(id, "image")?;
    state
        .images
        .read()
        .expect("image store lock")
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("image"))
}

fn image_json(id: &Uuid, cube: &HsiCube) -> serde_json::Value {
    json!({ "image_id": id.to_string(), "height": cube.height, "width": cube.width, "bands": cube.bands })
}

async fn upload_image(State(state): State<Shared>, mut multipart: Multipart) -> Result<Json<serde_json::Value>, ApiError> {
    let mut header: Option<HsiHeader> = None;
    let mut raw: Option<Bytes> = None;
    let mut csv: Option<Bytes> = None;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("multipart: {e}")))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("multipart part `{name}`: {e}")))?;
        match name.as_str() {
            "header" => {
                header = Some(
                    serde_json::from_slice(&bytes)
                        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("header: {e}")))?,
                )
            }
            "raw" => raw = Some(bytes),
            "csv" => csv = Some(bytes),
            other => return Err(ApiError::new(StatusCode::BAD_REQUEST, format!("unexpected part `{other}`"))),
        }
    }
    let header = header.ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing `header` part"))?;
    let cube = match (raw, csv) {
        (Some(bytes), None) => HsiCube::from_raw_bytes(&header, &bytes)?,
        (None, Some(bytes)) => {
            let text = std::str::from_utf8(&bytes).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("csv: {e}")))?;
            HsiCube::from_csv_str(&header, text)?
        }
        _ => return Err(ApiError::new(StatusCode::BAD_REQUEST, "expected exactly one of `raw` or `csv`")),
    };
    let id = Uuid::new_v4();
    let body = image_json(&id, &cube);
    state.images.write().expect("image store lock").insert(id, Arc::new(cube));
    Ok(Json(body))
}

async fn image_info(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let cube = get_image(&state, &id)?;
    Ok(Json(image_json(&parse_id(&id, "image")?, &cube)))
}

/// Min-max scaling of each plane to bytes; constant planes map to 128.
/// Output is row-major with planes interleaved per pixel.
pub fn byte_grid(planes: &[Vec<f64>]) -> (Vec<u8>, Vec<(f64, f64)>) {
    let pixels = planes.first().map_or(0, Vec::len);
    let bounds: Vec<(f64, f64)> = planes
        .iter()
        .map(|p| p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))))
        .collect();
    let mut out = Vec::with_capacity(pixels * planes.len());
    for i in 0..pixels {
        for (p, &(lo, hi)) in planes.iter().zip(&bounds) {
            out.push(if hi > lo {
                (((p[i] - lo) / (hi - lo)) * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                128
            });
        }
    }
    (out, bounds)
}

fn grid_response(height: usize, width: usize, planes: &[Vec<f64>]) -> Response {
    let (bytes, bounds) = byte_grid(planes);
    let join = |f: fn(&(f64, f64)) -> f64| bounds.iter().map(|b| f(b).to_string()).collect::<Vec<_>>().join(",");
    let mut headers = HeaderMap::new();
    let mut put = |k: &'static str, v: String| {
        headers.insert(k, HeaderValue::from_str(&v).expect("ascii header value"));
    };
    put("content-type", "application/octet-stream".into());
    put("x-height", height.to_string());
    put("x-width", width.to_string());
    put("x-channels", planes.len().to_string());
    put("x-scale-min", join(|b| b.0));
    put("x-scale-max", join(|b| b.1));
    headers.insert(
        header::ACCESS_CONTROL_EXPOSE_HEADERS,
        HeaderValue::from_static("x-height, x-width, x-channels, x-scale-min, x-scale-max"),
    );
    (StatusCode::OK, headers, bytes).into_response()
}

#[derive(Debug, Deserialize)]
struct CompositeQuery {
    bands: Option<String>,
}

async fn composite(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<CompositeQuery>,
) -> Result<Response, ApiError> {
    let cube = get_image(&state, &id)?;
    let spec = q.bands.unwrap_or_else(|| "0".into());
    let bands: Vec<usize> = spec
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, format!("bad bands `{spec}`")))?;
    if bands.len() != 1 && bands.len() != 3 {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "bands must list 1 or 3 indices"));
    }
    if let Some(&b) = bands.iter().find(|&&b| b >= cube.bands) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("band {b} out of range for {} bands", cube.bands),
        ));
    }
    let planes: Vec<Vec<f64>> = bands.iter().map(|&b| cube.band(b).iter().map(|&v| v as f64).collect()).collect();
    Ok(grid_response(cube.height, cube.width, &planes))
}

async fn submit_unmix(
    State(state): State<Shared>,
    Json(req): Json<UnmixRequest>,
) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    let cube = get_image(&state, &req.image_id)?;
    let (dicts, constraints) = from_regions(&cube, &req.regions)?;
    let r = match req.r {
        Some(r) => r,
        None if constraints.iter().any(|c| c.kind == CountKind::AtMost) => {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "`r` is required with at-most rules"))
        }
        None => constraints.iter().map(|c| c.count).sum(),
    };
    validate_problem(&dicts, &constraints, r).map_err(Error::Infeasible)?;
    normalize_constraints(&dicts, &constraints, r)?;

    let id = Uuid::new_v4();
    let job = Job {
        id: id.to_string(),
        state: JobState::Queued,
        request: UnmixRequest { r: Some(r), ..req },
        result: None,
        error: None,
        abundances: Vec::new(),
        shape: (cube.height, cube.width),
    };
    state.jobs.write().expect("job table lock").insert(id, job);
    state
        .queue
        .send((id, cube))
        .map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "job worker stopped"))?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": id.to_string() }))))
}

fn run_job(state: &AppState, id: Uuid, cube: &HsiCube) {
    let req = {
        let mut jobs = state.jobs.write().expect("job table lock");
        let Some(job) = jobs.get_mut(&id) else { return };
        job.state = JobState::Running;
        job.request.clone()
    };
    let outcome = (|| -> crate::error::Result<(JobResult, Vec<Vec<f64>>)> {
        let (dicts, constraints) = from_regions(cube, &req.regions)?;
        let r = req.r.expect("rank fixed at submission");
        let opts = M2palsOptions {
            metric: req.metric,
            nonnegative_b: req.nonneg,
            rng_seed: req.seed,
            max_iterations: req.max_iterations.unwrap_or(50),
            ..Default::default()
        };
        let res = m2pals(&cube.to_matrix(), &dicts, &constraints, r, &opts)?;
        let selection = SelectionReport::new(&res, &dicts, &constraints);
        let maps = (0..r).map(|k| res.b.column(k).to_vec()).collect();
        Ok((
            JobResult {
                selected_pixels: selection.pixels(),
                selection,
                relative_error: res.relative_error,
                iterations: res.iterations,
                converged: res.converged,
                residual_history: res.residual_history.clone(),
                abundance_maps: (0..r).map(|k| format!("/jobs/{id}/abundance/{k}")).collect(),
            },
            maps,
        ))
    })();
    let mut jobs = state.jobs.write().expect("job table lock");
    if let Some(job) = jobs.get_mut(&id) {
        match outcome {
            Ok((result, maps)) => {
                job.result = Some(result);
                job.abundances = maps;
                job.state = JobState::Done;
            }
            Err(e) => {
                job.error = Some(e.to_string());
                job.state = JobState::Failed;
            }
        }
    }
}

async fn job_status(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<Job>, ApiError> {
    let id = parse_id(&id, "job")?;
    let jobs = state.jobs.read().expect("job table lock");
    jobs.get(&id).cloned().map(Json).ok_or_else(|| ApiError::not_found("job"))
}

async fn abundance(State(state): State<Shared>, Path((id, k)): Path<(String, usize)>) -> Result<Response, ApiError> {
    let id = parse_id(&id, "job")?;
    let jobs = state.jobs.read().expect("job table lock");
    let job = jobs.get(&id).ok_or_else(|| ApiError::not_found("job"))?;
    if job.state != JobState::Done {
        return Err(ApiError::new(StatusCode::CONFLICT, format!("job is {:?}", job.state).to_lowercase()));
    }
    let plane = job.abundances.get(k).ok_or_else(|| ApiError::not_found("abundance map"))?;
    Ok(grid_response(job.shape.0, job.shape.1, std::slice::from_ref(plane)))
}
