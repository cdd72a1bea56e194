//! HTTP service for the tagging loop: analysts browse a clustering run, tag
//! documents, and check the clusters against their tags.
//!
//! All bodies are JSON. Errors carry `{code, message, current_revision?}`;
//! a stale `expected_revision` answers 409 with the current revision so the
//! client can reload and retry.

pub mod error;
pub mod store;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use riskclust::pipeline::MethodOutcome;
use riskclust::validate::validate_tagged;
use riskclust::{Label, Method, ValidationReport};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

pub use error::{ErrorBody, ServiceError};
pub use store::{Session, SessionStore, Snapshot, TagEdit};

/// Local-only by default; there is no authentication.
pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub artifact_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodInfo {
    pub id: String,
    pub method: Method,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub artifact_path: PathBuf,
    pub revision: u64,
    pub n_docs: usize,
    pub n_tagged: usize,
    pub methods: Vec<MethodInfo>,
    pub tag_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocTag {
    pub doc_id: String,
    pub tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagsView {
    pub revision: u64,
    pub tag_names: Vec<String>,
    pub tags: Vec<DocTag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionPoint {
    pub doc_id: String,
    pub v1: f64,
    pub v2: f64,
    pub tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionView {
    pub revision: u64,
    pub tag_names: Vec<String>,
    pub points: Vec<ProjectionPoint>,
}

/// Labels are in projection order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersView {
    pub id: String,
    pub method: Method,
    pub k: usize,
    pub objective: f64,
    pub assignment: Vec<Label>,
    pub cluster_sizes: Vec<usize>,
    pub n_trimmed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagRequest {
    pub expected_revision: u64,
    pub edits: Vec<TagEdit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagResponse {
    pub revision: u64,
    pub n_tagged: usize,
    pub tag_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateRequest {
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateResponse {
    pub method: String,
    /// Revision of the tags that were scored.
    pub revision: u64,
    pub report: ValidationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentView {
    pub doc_id: String,
    pub description: String,
    pub tokens: Vec<String>,
    pub tag: Option<String>,
    /// Label per method id.
    pub clusters: BTreeMap<String, Label>,
}

type Shared = Arc<SessionStore>;
type ApiResult<T> = Result<T, ServiceError>;

/// Routes, plus static files from `static_dir` for every other path.
pub fn router(store: Arc<SessionStore>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(session_info))
        .route("/sessions/{id}/tags", get(get_tags).post(post_tags))
        .route("/sessions/{id}/projection", get(projection))
        .route("/sessions/{id}/clusters/{method}", get(clusters))
        .route("/sessions/{id}/validate", post(validate))
        .route("/sessions/{id}/documents/{doc_id}", get(document))
        .with_state(store);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload.map(|Json(v)| v).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ServiceError::BadRequest(format!("request aborted: {e}"))))
}

fn info(session: &Session) -> SessionInfo {
    let snap = session.snapshot();
    SessionInfo {
        session_id: session.id.clone(),
        artifact_path: session.artifact_path.clone(),
        revision: snap.revision,
        n_docs: session.n_docs(),
        n_tagged: snap.tags.n_tagged(),
        methods: session
            .artifact
            .results
            .iter()
            .map(|o| MethodInfo {
                id: o.id.clone(),
                method: o.result.method,
                k: o.result.k,
            })
            .collect(),
        tag_names: snap.tags.tag_names().to_vec(),
    }
}

fn outcome<'a>(session: &'a Session, method: &str) -> ApiResult<&'a MethodOutcome> {
    session.artifact.outcome(method).ok_or_else(|| ServiceError::NotFound {
        what: "method",
        id: method.to_string(),
    })
}

async fn create_session(State(store): State<Shared>, payload: Result<Json<CreateSession>, JsonRejection>) -> ApiResult<(StatusCode, Json<SessionInfo>)> {
    let req = body(payload)?;
    let session = blocking(move || store.create(&req.artifact_path)).await?;
    Ok((StatusCode::CREATED, Json(info(&session))))
}

async fn list_sessions(State(store): State<Shared>) -> Json<Vec<SessionInfo>> {
    Json(store.list().iter().map(|s| info(s)).collect())
}

async fn session_info(State(store): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SessionInfo>> {
    let session = store.get(&id)?;
    Ok(Json(info(&session)))
}

async fn get_tags(State(store): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<TagsView>> {
    let session = store.get(&id)?;
    let snap = session.snapshot();
    Ok(Json(TagsView {
        revision: snap.revision,
        tag_names: snap.tags.tag_names().to_vec(),
        tags: session
            .artifact
            .documents
            .iter()
            .zip(snap.tags.labels())
            .map(|(d, t)| DocTag {
                doc_id: d.doc_id.clone(),
                tag: t.clone(),
            })
            .collect(),
    }))
}

async fn post_tags(
    State(store): State<Shared>,
    UrlPath(id): UrlPath<String>,
    payload: Result<Json<TagRequest>, JsonRejection>,
) -> ApiResult<Json<TagResponse>> {
    let session = store.get(&id)?;
    let req = body(payload)?;
    let snap = blocking(move || session.apply_tags(req.expected_revision, &req.edits)).await?;
    Ok(Json(TagResponse {
        revision: snap.revision,
        n_tagged: snap.tags.n_tagged(),
        tag_names: snap.tags.tag_names().to_vec(),
    }))
}

async fn projection(State(store): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<ProjectionView>> {
    let session = store.get(&id)?;
    let snap = session.snapshot();
    let points = session
        .artifact
        .projection
        .points()
        .into_iter()
        .zip(snap.tags.labels())
        .map(|(p, tag)| ProjectionPoint {
            doc_id: p.doc_id,
            v1: p.v1,
            v2: p.v2,
            tag: tag.clone(),
        })
        .collect();
    Ok(Json(ProjectionView {
        revision: snap.revision,
        tag_names: snap.tags.tag_names().to_vec(),
        points,
    }))
}

async fn clusters(State(store): State<Shared>, UrlPath((id, method)): UrlPath<(String, String)>) -> ApiResult<Json<ClustersView>> {
    let session = store.get(&id)?;
    let o = outcome(&session, &method)?;
    Ok(Json(ClustersView {
        id: o.id.clone(),
        method: o.result.method,
        k: o.result.k,
        objective: o.result.objective,
        assignment: o.result.assignment.clone(),
        cluster_sizes: o.result.cluster_sizes(),
        n_trimmed: o.result.n_trimmed(),
    }))
}

async fn validate(
    State(store): State<Shared>,
    UrlPath(id): UrlPath<String>,
    payload: Result<Json<ValidateRequest>, JsonRejection>,
) -> ApiResult<Json<ValidateResponse>> {
    let session = store.get(&id)?;
    let req = body(payload)?;
    outcome(&session, &req.method)?;
    let response = blocking(move || {
        let snap = session.snapshot();
        let result = &outcome(&session, &req.method)?.result;
        let report = validate_tagged(session.artifact.lsa_matrix().view(), result, &snap.tags)?;
        Ok(ValidateResponse {
            method: req.method,
            revision: snap.revision,
            report,
        })
    })
    .await?;
    Ok(Json(response))
}

async fn document(State(store): State<Shared>, UrlPath((id, doc_id)): UrlPath<(String, String)>) -> ApiResult<Json<DocumentView>> {
    let session = store.get(&id)?;
    let i = session.doc_position(&doc_id).ok_or_else(|| ServiceError::NotFound {
        what: "document",
        id: doc_id.clone(),
    })?;
    let doc = &session.artifact.documents[i];
    Ok(Json(DocumentView {
        doc_id,
        description: doc.description.clone(),
        tokens: doc.tokens.clone(),
        tag: session.snapshot().tags.labels()[i].clone(),
        clusters: session
            .artifact
            .results
            .iter()
            .map(|o| (o.id.clone(), o.result.assignment[i]))
            .collect(),
    }))
}
