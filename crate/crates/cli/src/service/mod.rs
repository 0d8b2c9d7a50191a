//! HTTP service under `/v1`.
//!
//! Sessions live in memory and, when a data directory is configured, are
//! mirrored to disk and reloaded at startup. Fits run as background jobs in
//! submission order; queries keep serving the last completed field until a
//! job swaps in its result.

mod jobs;
mod session;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use trifield_core::analysis::{fit_logreg, predict, similarity_map_cross, Annotation, DEFAULT_LAMBDA};
use trifield_core::geometry::{normalize_mesh, parse_obj};
use trifield_core::{cut_tree, Error as CoreError, Segmentation};

use jobs::JobQueue;
pub use jobs::{FitRequest, JobInfo, JobStatus};
use session::Store;
pub use session::{Derived, Session, SessionState};

use crate::inputs::FeatureSource;

/// Uploads (meshes, fields) may be large.
const BODY_LIMIT: usize = 1 << 30;

#[derive(Clone, Debug, Default)]
pub struct ServiceConfig {
    /// Session persistence root; `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    /// Allowed CORS origin; `None` allows any.
    pub cors_origin: Option<String>,
}

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<RwLock<BTreeMap<String, Arc<Session>>>>,
    next_id: Arc<std::sync::Mutex<u64>>,
    store: Store,
    jobs: JobQueue,
}

impl AppState {
    pub fn new(config: &ServiceConfig) -> anyhow::Result<AppState> {
        let store = Store::new(config.data_dir.clone());
        let loaded = store.load_all()?;
        let next = loaded
            .iter()
            .filter_map(|s| s.id.strip_prefix("shape-")?.parse::<u64>().ok())
            .max()
            .unwrap_or(0);
        let sessions = loaded.into_iter().map(|s| (s.id.clone(), Arc::new(s))).collect();
        Ok(AppState {
            sessions: Arc::new(RwLock::new(sessions)),
            next_id: Arc::new(std::sync::Mutex::new(next)),
            jobs: JobQueue::start(store.clone()),
            store,
        })
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no shape {id:?}")))
    }
}

pub fn router(state: AppState, config: &ServiceConfig) -> Router {
    let origin = match &config.cors_origin {
        Some(o) => AllowOrigin::exact(HeaderValue::from_str(o).unwrap_or(HeaderValue::from_static("null"))),
        None => AllowOrigin::from(Any),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST, Method::DELETE])
        .allow_headers([header::CONTENT_TYPE]);
    let api = Router::new()
        .route("/shapes", post(create_shape).get(list_shapes))
        .route("/shapes/{id}/features", post(upload_features))
        .route("/shapes/{id}/fit", post(submit_fit))
        .route("/jobs/{job_id}", get(job_status))
        .route("/shapes/{id}/mesh", get(mesh_binary))
        .route("/shapes/{id}/similarity", get(similarity))
        .route("/shapes/{id}/segment", get(segment))
        .route("/shapes/{id}/hierarchy", get(hierarchy))
        .route(
            "/shapes/{id}/annotations",
            post(add_annotation).get(list_annotations).delete(clear_annotations),
        )
        .route("/shapes/{id}/annotations/{face}", delete(remove_annotation))
        .route("/shapes/{id}/coseg", get(coseg));
    Router::new()
        .nest("/v1", api)
        .fallback(|| async { ApiError::not_found("no such endpoint".into()) })
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .layer(cors)
        .with_state(state)
}

/// Error body: `{"code": str, "message": str}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn not_found(message: String) -> ApiError {
        ApiError {
            status: StatusCode::NOT_FOUND,
            code: "not_found",
            message,
        }
    }

    fn conflict(code: &'static str, message: String) -> ApiError {
        ApiError {
            status: StatusCode::CONFLICT,
            code,
            message,
        }
    }

    fn invalid(message: String) -> ApiError {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code: "invalid_request",
            message,
        }
    }

    fn internal(message: String) -> ApiError {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> ApiError {
        ApiError::invalid(e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> ApiError {
        ApiError::invalid(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> ApiError {
        ApiError::invalid(e.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn derived_of(s: &Session) -> ApiResult<Arc<Derived>> {
    s.derived()
        .ok_or_else(|| ApiError::conflict("missing_field", format!("shape {} has no field or features yet", s.id)))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

#[derive(Serialize)]
struct ShapeSummary {
    shape_id: String,
    faces: usize,
    vertices: usize,
    has_features: bool,
}

fn summary(s: &Session) -> ShapeSummary {
    ShapeSummary {
        shape_id: s.id.clone(),
        faces: s.mesh.face_count(),
        vertices: s.mesh.vertex_count(),
        has_features: s.derived().is_some(),
    }
}

async fn create_shape(
    State(app): State<AppState>,
    mut multipart: Multipart,
) -> ApiResult<(StatusCode, Json<ShapeSummary>)> {
    // The first part is the OBJ; any others are ignored.
    let field = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::invalid(e.body_text()))?
        .ok_or_else(|| ApiError::invalid("multipart body has no OBJ part".into()))?;
    let obj = field.bytes().await.map_err(|e| ApiError::invalid(e.body_text()))?;
    let app2 = app.clone();
    let session = blocking(move || {
        let text = std::str::from_utf8(&obj).map_err(|_| ApiError::invalid("OBJ upload is not UTF-8".into()))?;
        let mesh = parse_obj(text, std::path::Path::new("upload.obj"))?;
        let (mesh, _) = normalize_mesh(&mesh)?;
        let id = {
            let mut n = app2.next_id.lock().unwrap();
            *n += 1;
            format!("shape-{:04}", *n)
        };
        app2.store
            .save_mesh(&id, &mesh)
            .map_err(|e| ApiError::internal(format!("{e:#}")))?;
        Ok(Arc::new(Session {
            id,
            mesh,
            state: RwLock::new(SessionState::default()),
        }))
    })
    .await?;
    app.sessions
        .write()
        .unwrap()
        .insert(session.id.clone(), session.clone());
    Ok((StatusCode::CREATED, Json(summary(&session))))
}

async fn list_shapes(State(app): State<AppState>) -> Json<Vec<ShapeSummary>> {
    let sessions: Vec<Arc<Session>> = app.sessions.read().unwrap().values().cloned().collect();
    Json(sessions.iter().map(|s| summary(s)).collect())
}

async fn upload_features(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<StatusCode> {
    let session = app.session(&id)?;
    let store = app.store.clone();
    blocking(move || {
        let source = FeatureSource::from_bytes(&body).map_err(|e| ApiError::invalid(format!("{e:#}")))?;
        let derived = Derived::build(&session.mesh, &source).map_err(|e| ApiError::invalid(format!("{e:#}")))?;
        store
            .save_field(&session.id, &body)
            .map_err(|e| ApiError::internal(format!("{e:#}")))?;
        session.swap_field(body.to_vec(), derived);
        Ok(StatusCode::NO_CONTENT)
    })
    .await
}

#[derive(Serialize)]
struct JobCreated {
    job_id: String,
}

async fn submit_fit(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<FitRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<JobCreated>)> {
    let session = app.session(&id)?;
    let Json(request) = body?;
    request.config.validate()?;
    if request.points == 0 {
        return Err(ApiError::invalid("points must be positive".into()));
    }
    let job_id = app.jobs.submit(session, request);
    Ok((StatusCode::ACCEPTED, Json(JobCreated { job_id })))
}

async fn job_status(State(app): State<AppState>, Path(job_id): Path<String>) -> ApiResult<Json<JobInfo>> {
    app.jobs
        .get(&job_id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("no job {job_id:?}")))
}

/// Little-endian: vertex count u32, face count u32, xyz f32 per vertex,
/// three u32 indices per face.
async fn mesh_binary(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = app.session(&id)?;
    let m = &s.mesh;
    let mut out = Vec::with_capacity(8 + 12 * (m.vertex_count() + m.face_count()));
    out.extend_from_slice(&(m.vertex_count() as u32).to_le_bytes());
    out.extend_from_slice(&(m.face_count() as u32).to_le_bytes());
    for v in m.vertices() {
        for c in v.to_array() {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
    }
    for f in m.faces() {
        for i in f {
            out.extend_from_slice(&i.to_le_bytes());
        }
    }
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], out).into_response())
}

#[derive(Deserialize)]
struct SimilarityQuery {
    face: usize,
    /// Shape whose faces are scored; defaults to the anchor's shape.
    target: Option<String>,
}

#[derive(Serialize)]
struct Values {
    values: Vec<f32>,
}

async fn similarity(
    State(app): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<SimilarityQuery>, QueryRejection>,
) -> ApiResult<Json<Values>> {
    let Query(q) = query?;
    let source = derived_of(&*app.session(&id)?)?;
    let target = match &q.target {
        Some(t) => derived_of(&*app.session(t)?)?,
        None => source.clone(),
    };
    if q.face >= source.features.len() {
        return Err(ApiError::invalid(format!(
            "face {} out of range ({} faces)",
            q.face,
            source.features.len()
        )));
    }
    let values = similarity_map_cross(&source.features, q.face, &target.features)?;
    Ok(Json(Values {
        values: values.into_iter().map(|v| v as f32).collect(),
    }))
}

#[derive(Deserialize)]
struct SegmentQuery {
    k: usize,
}

async fn segment(
    State(app): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<SegmentQuery>, QueryRejection>,
) -> ApiResult<Json<Segmentation>> {
    let Query(q) = query?;
    let d = derived_of(&*app.session(&id)?)?;
    Ok(Json(cut_tree(&d.tree, q.k)?))
}

async fn hierarchy(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let d = derived_of(&*app.session(&id)?)?;
    Ok(Json(&d.tree).into_response())
}

#[derive(Deserialize)]
struct AnnotationBody {
    face: u32,
    class: u32,
}

async fn add_annotation(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<AnnotationBody>, JsonRejection>,
) -> ApiResult<StatusCode> {
    let s = app.session(&id)?;
    let Json(a) = body?;
    if a.face as usize >= s.mesh.face_count() {
        return Err(ApiError::invalid(format!(
            "face {} out of range ({} faces)",
            a.face,
            s.mesh.face_count()
        )));
    }
    let snapshot = {
        let mut st = s.state.write().unwrap();
        st.annotations.insert(a.face, a.class);
        st.annotations.clone()
    };
    persist_annotations(&app, &s.id, &snapshot)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Serialize)]
struct AnnotationEntry {
    face: u32,
    class: u32,
}

async fn list_annotations(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<AnnotationEntry>>> {
    let s = app.session(&id)?;
    Ok(Json(
        s.annotations()
            .into_iter()
            .map(|(face, class)| AnnotationEntry { face, class })
            .collect(),
    ))
}

async fn clear_annotations(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    let s = app.session(&id)?;
    s.state.write().unwrap().annotations.clear();
    persist_annotations(&app, &s.id, &BTreeMap::new())?;
    Ok(StatusCode::NO_CONTENT)
}

async fn remove_annotation(
    State(app): State<AppState>,
    Path((id, face)): Path<(String, u32)>,
) -> ApiResult<StatusCode> {
    let s = app.session(&id)?;
    let snapshot = {
        let mut st = s.state.write().unwrap();
        if st.annotations.remove(&face).is_none() {
            return Err(ApiError::not_found(format!("face {face} is not annotated")));
        }
        st.annotations.clone()
    };
    persist_annotations(&app, &s.id, &snapshot)?;
    Ok(StatusCode::NO_CONTENT)
}

fn persist_annotations(app: &AppState, id: &str, ann: &BTreeMap<u32, u32>) -> ApiResult<()> {
    app.store
        .save_annotations(id, ann)
        .map_err(|e| ApiError::internal(format!("{e:#}")))
}

#[derive(Deserialize)]
struct CosegQuery {
    /// Shape to label with the model fitted on this shape's annotations.
    target: Option<String>,
}

/// Segmentation plus the annotation class behind each label.
#[derive(Serialize)]
struct CosegResponse {
    k: usize,
    labels: Vec<u32>,
    classes: Vec<u32>,
}

async fn coseg(
    State(app): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<CosegQuery>, QueryRejection>,
) -> ApiResult<Json<CosegResponse>> {
    let Query(q) = query?;
    let s = app.session(&id)?;
    let source = derived_of(&s)?;
    let target = match &q.target {
        Some(t) => derived_of(&*app.session(t)?)?,
        None => source.clone(),
    };
    let annotations: Vec<Annotation> = s
        .annotations()
        .into_iter()
        .map(|(element, class)| Annotation { element, class })
        .collect();
    let classes: HashMap<u32, ()> = annotations.iter().map(|a| (a.class, ())).collect();
    if classes.len() < 2 {
        return Err(ApiError::conflict(
            "insufficient_annotations",
            format!("{} annotated classes; at least two are required", classes.len()),
        ));
    }
    blocking(move || {
        let model = fit_logreg(&source.features, &annotations, DEFAULT_LAMBDA)?;
        let seg = predict(&model, &target.features)?;
        Ok(Json(CosegResponse {
            k: seg.k,
            labels: seg.labels,
            classes: model.classes,
        }))
    })
    .await
}

/// Blocks serving the API until the process is stopped.
pub fn serve(host: &str, port: u16, config: ServiceConfig) -> anyhow::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let state = AppState::new(&config)?;
        let app = router(state, &config);
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, app).await?;
        Ok(())
    })
}
