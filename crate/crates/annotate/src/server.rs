//! Routes of the review API.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use specvi_core::metrics::Verdict;

use crate::archive::{document, Archive};
use crate::store::{AnnotationStore, StoreError};
use crate::ServiceError;

pub const DEFAULT_PER_PAGE: usize = 50;
pub const MAX_PER_PAGE: usize = 500;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub archive_dir: PathBuf,
    pub store_path: PathBuf,
    pub bind_addr: String,
    pub show_gold: bool,
}

#[derive(Clone)]
pub struct AppState {
    pub archive: Arc<Archive>,
    pub store: Arc<AnnotationStore>,
    pub show_gold: bool,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({"error": self.1}))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::ScoreOutOfRange(_) | StoreError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(e.status(), e.body_text())
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/trajectories", get(list_trajectories))
        .route("/trajectories/{id}", get(get_trajectory))
        .route("/assets/{*path}", get(get_asset))
        .route("/annotations", get(list_annotations).post(post_annotation))
        .route("/preferences", get(list_preferences).post(post_preference))
        .route("/export/scores.csv", get(export_scores))
        .with_state(state)
}

#[derive(Deserialize)]
struct PageQuery {
    page: Option<usize>,
    per_page: Option<usize>,
}

async fn list_trajectories(State(s): State<AppState>, Query(q): Query<PageQuery>) -> Result<Json<Value>, ApiError> {
    let page = q.page.unwrap_or(1);
    let per_page = q.per_page.unwrap_or(DEFAULT_PER_PAGE);
    if page == 0 || per_page == 0 || per_page > MAX_PER_PAGE {
        return Err(ApiError(
            StatusCode::BAD_REQUEST,
            format!("page must be ≥ 1 and per_page in 1..={MAX_PER_PAGE}"),
        ));
    }
    Ok(Json(json!({
        "page": page,
        "per_page": per_page,
        "total": s.archive.len(),
        "items": s.archive.page(page, per_page),
    })))
}

async fn get_trajectory(State(s): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let t = s
        .archive
        .get(&id)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("no trajectory {id}")))?;
    Ok(Json(document(t, s.show_gold)))
}

fn content_type(path: &std::path::Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => "image/png",
        Some("json") => "application/json",
        _ => "application/octet-stream",
    }
}

async fn get_asset(State(s): State<AppState>, Path(rel): Path<String>) -> Result<Response, ApiError> {
    let not_found = || ApiError(StatusCode::NOT_FOUND, format!("no asset {rel}"));
    let path = s.archive.asset_path(&rel).ok_or_else(not_found)?;
    let bytes = tokio::fs::read(&path).await.map_err(|_| not_found())?;
    let mut resp = bytes.into_response();
    let h = resp.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static(content_type(&path)));
    h.insert(header::CACHE_CONTROL, HeaderValue::from_static("public, max-age=31536000, immutable"));
    Ok(resp)
}

#[derive(Deserialize)]
struct AnnotationBody {
    trajectory_id: String,
    annotator_id: String,
    score: i64,
    #[serde(default)]
    comment: Option<String>,
}

async fn post_annotation(
    State(s): State<AppState>,
    body: Result<Json<AnnotationBody>, JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let Json(b) = body?;
    if !(0..=crate::store::MAX_SCORE).contains(&b.score) {
        return Err(StoreError::ScoreOutOfRange(b.score).into());
    }
    if s.archive.get(&b.trajectory_id).is_none() {
        return Err(ApiError(StatusCode::NOT_FOUND, format!("no trajectory {}", b.trajectory_id)));
    }
    let store = Arc::clone(&s.store);
    let stored = tokio::task::spawn_blocking(move || {
        store.put_annotation(&b.trajectory_id, &b.annotator_id, b.score, b.comment)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok((StatusCode::CREATED, Json(json!(stored))))
}

#[derive(Deserialize)]
struct AnnotationQuery {
    trajectory_id: Option<String>,
}

async fn list_annotations(State(s): State<AppState>, Query(q): Query<AnnotationQuery>) -> Json<Value> {
    let items = match q.trajectory_id {
        Some(id) => s.store.annotations_for(&id),
        None => s.store.annotations(),
    };
    Json(json!({ "annotations": items }))
}

#[derive(Deserialize)]
struct PreferenceBody {
    case_id: String,
    annotator_id: String,
    verdict: Verdict,
    left_system: String,
    right_system: String,
}

async fn post_preference(
    State(s): State<AppState>,
    body: Result<Json<PreferenceBody>, JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let Json(b) = body?;
    let store = Arc::clone(&s.store);
    let stored = tokio::task::spawn_blocking(move || {
        store.put_preference(&b.case_id, &b.annotator_id, b.verdict, &b.left_system, &b.right_system)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok((StatusCode::CREATED, Json(json!(stored))))
}

async fn list_preferences(State(s): State<AppState>) -> Json<Value> {
    Json(json!({ "preferences": s.store.preferences() }))
}

async fn export_scores(State(s): State<AppState>) -> Response {
    let mut resp = s.store.scores_csv().into_response();
    resp.headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static("text/csv; charset=utf-8"));
    resp
}

/// Binds, announces the bound address on stdout, and serves until Ctrl-C.
pub async fn serve(opts: ServeOptions) -> Result<(), ServiceError> {
    let archive = Archive::load(&opts.archive_dir)?;
    let store = AnnotationStore::open(&opts.store_path)?;
    let state = AppState { archive: Arc::new(archive), store: Arc::new(store), show_gold: opts.show_gold };
    let bind_err = |message: String| ServiceError::BindFailure { addr: opts.bind_addr.clone(), message };
    let listener = tokio::net::TcpListener::bind(&opts.bind_addr).await.map_err(|e| bind_err(e.to_string()))?;
    let addr: SocketAddr = listener.local_addr().map_err(|e| bind_err(e.to_string()))?;
    tracing::info!(%addr, trajectories = state.archive.len(), "annotation service ready");
    println!("listening on http://{addr}");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::Server(e.to_string()))
}
