//! JSON API over a [`ReviewStore`]. Every route except `/api/health` needs a
//! reviewer token (`Authorization: Bearer <token>`); the token decides the
//! reviewer id recorded on events.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};

use super::model::{
    Decision, ExportFilter, GradeEvent, GradeTable, ItemKind, ItemStatus, ItemSummary, ItemView, LogEvent, NewItem,
    VerificationEvent,
};
use super::{ReviewError, ReviewStore};

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReviewerEntry {
    pub reviewer_id: String,
    pub token: String,
}

/// Static token to reviewer id map, loaded from a JSON array of
/// `{"reviewer_id", "token"}` objects.
#[derive(Debug, Clone, Default)]
pub struct ReviewerRegistry {
    by_token: HashMap<String, String>,
}

impl ReviewerRegistry {
    pub fn new(entries: Vec<ReviewerEntry>) -> Result<Self, ReviewError> {
        let mut by_token = HashMap::new();
        for e in entries {
            if e.token.is_empty() || e.reviewer_id.is_empty() {
                return Err(ReviewError::Validation("reviewer entries need a token and a reviewer_id".into()));
            }
            if by_token.insert(e.token, e.reviewer_id.clone()).is_some() {
                return Err(ReviewError::Validation(format!("duplicate token (reviewer {})", e.reviewer_id)));
            }
        }
        Ok(Self { by_token })
    }

    pub fn load(path: &Path) -> Result<Self, ReviewError> {
        let entries: Vec<ReviewerEntry> = crate::jsonl::read_json(path)
            .map_err(|e| ReviewError::Validation(format!("reviewers file: {e}")))?;
        Self::new(entries)
    }

    pub fn reviewer(&self, token: &str) -> Option<&str> {
        self.by_token.get(token).map(String::as_str)
    }
}

pub struct ServiceState {
    pub store: ReviewStore,
    pub reviewers: ReviewerRegistry,
    /// Omit model identity from grading payloads.
    pub blind: bool,
}

type Shared = Arc<ServiceState>;

impl IntoResponse for ReviewError {
    fn into_response(self) -> Response {
        let status = match &self {
            ReviewError::NotFound(_) => StatusCode::NOT_FOUND,
            ReviewError::Conflict(_) => StatusCode::CONFLICT,
            ReviewError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ReviewError::Forbidden { .. } => StatusCode::FORBIDDEN,
            ReviewError::Unauthorized => StatusCode::UNAUTHORIZED,
            ReviewError::CorruptLog { .. } | ReviewError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

fn reviewer(state: &ServiceState, headers: &HeaderMap) -> Result<String, ReviewError> {
    let token = headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .ok_or(ReviewError::Unauthorized)?;
    state.reviewers.reviewer(token).map(str::to_string).ok_or(ReviewError::Unauthorized)
}

/// A body may name its reviewer, but it must be the token's owner.
fn same_reviewer(token_owner: &str, claimed: Option<&str>) -> Result<(), ReviewError> {
    match claimed {
        Some(c) if c != token_owner => Err(ReviewError::Forbidden { reviewer: c.into(), item: "-".into() }),
        _ => Ok(()),
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/items", get(list_items).post(enqueue))
        .route("/api/items/{id}", get(get_item))
        .route("/api/items/{id}/verification", post(verify))
        .route("/api/items/{id}/grade", post(grade))
        .route("/api/export/grades", get(export))
        .with_state(state)
}

/// Binds `addr` and serves until the process ends. `on_ready` receives the
/// bound address (useful with port 0).
pub fn serve_blocking(
    addr: std::net::SocketAddr,
    state: Shared,
    on_ready: impl FnOnce(std::net::SocketAddr),
) -> std::io::Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        on_ready(listener.local_addr()?);
        axum::serve(listener, router(state)).await
    })
}

async fn health(State(s): State<Shared>) -> Json<serde_json::Value> {
    let state = s.store.state();
    Json(serde_json::json!({ "status": "ok", "items": state.len(), "digest": state.digest(), "blind": s.blind }))
}

#[derive(Debug, Deserialize)]
struct ListQuery {
    kind: Option<ItemKind>,
    status: Option<ItemStatus>,
    #[serde(default)]
    page: usize,
    per_page: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ItemPage {
    pub items: Vec<ItemSummary>,
    pub total: usize,
    pub page: usize,
    pub per_page: usize,
}

async fn list_items(
    State(s): State<Shared>,
    headers: HeaderMap,
    Query(q): Query<ListQuery>,
) -> Result<Json<ItemPage>, ReviewError> {
    reviewer(&s, &headers)?;
    let per_page = q.per_page.unwrap_or(DEFAULT_PAGE_SIZE).clamp(1, MAX_PAGE_SIZE);
    let state = s.store.state();
    let matching: Vec<_> = state
        .items()
        .filter(|i| q.kind.is_none_or(|k| k == i.kind) && q.status.is_none_or(|st| st == i.status))
        .collect();
    let items = matching.iter().skip(q.page * per_page).take(per_page).map(|i| i.summary()).collect();
    Ok(Json(ItemPage { items, total: matching.len(), page: q.page, per_page }))
}

async fn get_item(
    State(s): State<Shared>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<ItemView>, ReviewError> {
    reviewer(&s, &headers)?;
    Ok(Json(s.store.view(&id, s.blind)?))
}

async fn enqueue(
    State(s): State<Shared>,
    headers: HeaderMap,
    Json(items): Json<Vec<NewItem>>,
) -> Result<(StatusCode, Json<serde_json::Value>), ReviewError> {
    reviewer(&s, &headers)?;
    let n = s.store.enqueue(items)?;
    Ok((StatusCode::CREATED, Json(serde_json::json!({ "enqueued": n }))))
}

#[derive(Debug, Deserialize)]
struct VerificationBody {
    decision: Decision,
    #[serde(default)]
    reason: Option<String>,
    #[serde(default)]
    reviewer_id: Option<String>,
}

async fn verify(
    State(s): State<Shared>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<VerificationBody>,
) -> Result<Json<ItemView>, ReviewError> {
    let who = reviewer(&s, &headers)?;
    same_reviewer(&who, body.reviewer_id.as_deref())?;
    let item = s.store.submit(LogEvent::Verification(VerificationEvent {
        item_id: id,
        reviewer_id: who,
        decision: body.decision,
        reason: body.reason,
        timestamp: Utc::now(),
    }))?;
    Ok(Json(item.view(s.blind)))
}

#[derive(Debug, Deserialize)]
struct GradeBody {
    correctness: i64,
    completeness: i64,
    #[serde(default)]
    comment: Option<String>,
    #[serde(default)]
    reviewer_id: Option<String>,
}

fn score(axis: &str, v: i64) -> Result<u8, ReviewError> {
    u8::try_from(v)
        .ok()
        .filter(|s| (1..=5).contains(s))
        .ok_or_else(|| ReviewError::Validation(format!("{axis} must be between 1 and 5, got {v}")))
}

async fn grade(
    State(s): State<Shared>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<GradeBody>,
) -> Result<Json<ItemView>, ReviewError> {
    let who = reviewer(&s, &headers)?;
    same_reviewer(&who, body.reviewer_id.as_deref())?;
    let item = s.store.submit(LogEvent::Grade(GradeEvent {
        item_id: id,
        reviewer_id: who,
        correctness: score("correctness", body.correctness)?,
        completeness: score("completeness", body.completeness)?,
        timestamp: Utc::now(),
        comment: body.comment,
    }))?;
    Ok(Json(item.view(s.blind)))
}

async fn export(
    State(s): State<Shared>,
    headers: HeaderMap,
    Query(filter): Query<ExportFilter>,
) -> Result<Json<GradeTable>, ReviewError> {
    reviewer(&s, &headers)?;
    Ok(Json(s.store.export_grades(&filter)))
}
