//! HTTP+JSON interface over a journaled annotation engine.
//!
//! | method | path | success body |
//! |---|---|---|
//! | GET | `/api/task?annotator=&relation=` | [`TaskPayload`] |
//! | POST | `/api/response` | [`StatusBody`] |
//! | POST | `/api/sentence/{id}/delete` | [`StatusBody`] |
//! | POST | `/api/sentence/{id}/ignore?relation=` | [`StatusBody`] |
//! | GET | `/api/stats` | `StatisticsReport` |
//! | GET | `/api/agreement` | `AgreementReport` |
//! | GET | `/api/speed` | [`SpeedBody`] |
//!
//! Errors are `{code, message}` with the status of
//! [`ErrorCode`](crate::error::ErrorCode).

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use freda_core::agreement::{agreement_report, AgreementReport};
use freda_core::corpus::{EntityCluster, EntityType};
use freda_core::engine::{
    speed_report, AnnotationResponse, JournaledEngine, LogError, SpeedRow, Status, Task,
};
use freda_core::facts::{corpus_statistics, facts_for_verdicts, StatisticsReport};
use freda_core::filtering::RelationSchema;
use serde::Serialize;

use crate::error::ApiError;

/// Entity highlight colors; a cluster's color depends only on its ref.
pub const PALETTE: [&str; 8] = [
    "#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231", "#911eb4", "#42d4f4", "#f032e6",
];

/// 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn entity_color(entity_ref: &str) -> &'static str {
    PALETTE[(fnv1a(entity_ref.as_bytes()) % PALETTE.len() as u64) as usize]
}

#[derive(Debug, Clone, Serialize)]
pub struct RelationSummary {
    pub name: String,
    pub subject_type: EntityType,
    pub object_type: EntityType,
    pub symmetric: bool,
}

impl From<&RelationSchema> for RelationSummary {
    fn from(s: &RelationSchema) -> Self {
        RelationSummary {
            name: s.name.clone(),
            subject_type: s.subject_type,
            object_type: s.object_type,
            symmetric: s.symmetric,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ColoredEntity {
    #[serde(flatten)]
    pub cluster: EntityCluster,
    pub color: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskPayload {
    pub sentence_id: String,
    pub source_article: String,
    pub round: u8,
    pub relation: RelationSummary,
    pub tokens: Vec<String>,
    pub entities: Vec<ColoredEntity>,
}

impl TaskPayload {
    pub fn new(task: Task, schema: &RelationSchema) -> Self {
        let s = task.sentence;
        TaskPayload {
            tokens: s.token_texts().into_iter().map(str::to_string).collect(),
            entities: s
                .entities
                .into_iter()
                .map(|cluster| ColoredEntity {
                    color: entity_color(&cluster.entity_ref),
                    cluster,
                })
                .collect(),
            sentence_id: s.sentence_id,
            source_article: s.source_article,
            round: task.round,
            relation: schema.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StatusBody {
    pub sentence_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relation_name: Option<String>,
    pub status: Status,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeedBody {
    pub rows: Vec<SpeedRow>,
}

pub struct AppState {
    engine: Mutex<JournaledEngine>,
}

impl AppState {
    pub fn new(engine: JournaledEngine) -> Arc<Self> {
        Arc::new(AppState {
            engine: Mutex::new(engine),
        })
    }

    fn lock(&self) -> MutexGuard<'_, JournaledEngine> {
        // mutations check before they touch state, so a poisoned lock still
        // guards a consistent engine
        self.engine.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Errors a handler can return: API errors, or an internal failure such as
/// a log write that did not go through.
enum HandlerError {
    Api(ApiError),
    Internal(String),
}

impl From<ApiError> for HandlerError {
    fn from(e: ApiError) -> Self {
        HandlerError::Api(e)
    }
}

impl From<LogError> for HandlerError {
    fn from(e: LogError) -> Self {
        match e {
            LogError::Engine(e) => HandlerError::Api(e.into()),
            other => HandlerError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for HandlerError {
    fn into_response(self) -> Response {
        match self {
            HandlerError::Api(e) => e.into_response(),
            HandlerError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m).into_response(),
        }
    }
}

type Params = Result<Query<HashMap<String, String>>, QueryRejection>;

fn param(params: &Params, name: &str) -> Result<String, ApiError> {
    let Ok(Query(map)) = params else {
        return Err(ApiError::malformed("query string is not valid"));
    };
    match map.get(name) {
        Some(v) if !v.is_empty() => Ok(v.clone()),
        _ => Err(ApiError::malformed(format!("missing query parameter `{name}`"))),
    }
}

async fn task(State(state): State<Arc<AppState>>, params: Params) -> Result<Json<TaskPayload>, HandlerError> {
    let annotator = param(&params, "annotator")?;
    let relation = param(&params, "relation")?;
    let mut engine = state.lock();
    let task = engine
        .next_task_at(&annotator, &relation, Instant::now())
        .map_err(ApiError::from)?;
    let schema = engine.engine().schema(&relation).expect("served relation exists");
    Ok(Json(TaskPayload::new(task, schema)))
}

async fn response(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<StatusBody>, HandlerError> {
    let r: AnnotationResponse = serde_json::from_slice(&body)
        .map_err(|e| ApiError::malformed(format!("body is not an annotation response: {e}")))?;
    let mut engine = state.lock();
    let s = engine.submit_response(r)?;
    Ok(Json(StatusBody {
        sentence_id: s.sentence_id.clone(),
        relation_name: Some(s.relation_name.clone()),
        status: s.status,
    }))
}

async fn delete(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<StatusBody>, HandlerError> {
    state.lock().delete_sentence(&id)?;
    Ok(Json(StatusBody {
        sentence_id: id,
        relation_name: None,
        status: Status::Deleted,
    }))
}

async fn ignore(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    params: Params,
) -> Result<Json<StatusBody>, HandlerError> {
    let relation = param(&params, "relation")?;
    let mut engine = state.lock();
    engine.ignore_for_relation(&id, &relation)?;
    let status = engine
        .engine()
        .state(&id, &relation)
        .map(|s| s.status)
        .expect("ignored state exists");
    Ok(Json(StatusBody {
        sentence_id: id,
        relation_name: Some(relation),
        status,
    }))
}

fn schema_map(engine: &JournaledEngine) -> BTreeMap<String, RelationSchema> {
    engine
        .engine()
        .schemas()
        .map(|s| (s.name.clone(), s.clone()))
        .collect()
}

fn relation_names(engine: &JournaledEngine) -> Vec<String> {
    engine.engine().schemas().map(|s| s.name.clone()).collect()
}

/// Dataset statistics over the current verdicts, with pooled kappa.
pub fn statistics(engine: &JournaledEngine) -> Result<StatisticsReport, ApiError> {
    let verdicts = engine.engine().verdicts();
    let facts = facts_for_verdicts(&verdicts, &schema_map(engine))
        .map_err(|e| ApiError::malformed(e.to_string()))?;
    let kappa = agreement(engine).overall.kappa;
    Ok(corpus_statistics(&verdicts, &facts).with_kappa(kappa))
}

pub fn agreement(engine: &JournaledEngine) -> AgreementReport {
    agreement_report(engine.engine().states(), &relation_names(engine))
}

async fn stats(State(state): State<Arc<AppState>>) -> Result<Json<StatisticsReport>, HandlerError> {
    Ok(Json(statistics(&state.lock())?))
}

async fn agreement_handler(State(state): State<Arc<AppState>>) -> Json<AgreementReport> {
    Json(agreement(&state.lock()))
}

async fn speed(State(state): State<Arc<AppState>>) -> Json<SpeedBody> {
    let records = state.lock().engine().timing_records();
    Json(SpeedBody {
        rows: speed_report(&records),
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/task", get(task))
        .route("/api/response", post(response))
        .route("/api/sentence/{id}/delete", post(delete))
        .route("/api/sentence/{id}/ignore", post(ignore))
        .route("/api/stats", get(stats))
        .route("/api/agreement", get(agreement_handler))
        .route("/api/speed", get(speed))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
