//! HTTP service: sessions, live event streams, scenarios and briefings.

pub mod client;
mod config;
mod session;
mod sse;
pub mod store;

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use aries_core::builtin::{self, ReferenceOutput};
use aries_core::gateway::{ConfigError, ModelConfig, ScenarioSet};
use aries_core::orchestrator::OrchestratorError;

pub use config::{ProviderConfig, ServiceConfig, ToolsConfig};
pub use session::{Session, Sessions};
pub use sse::{event_stream, resume_point};
pub use store::{BriefingDoc, SessionMeta, SessionState, Store};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("storage: {0}")]
    Io(#[from] std::io::Error),
    #[error("startup: {0}")]
    Startup(String),
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Orchestrator(OrchestratorError::EmptyQuery) => {
                ApiError::new(StatusCode::BAD_REQUEST, "EmptyQuery", "query is empty")
            }
            ServiceError::Orchestrator(OrchestratorError::UnknownScenario(id)) => ApiError::new(
                StatusCode::NOT_FOUND,
                "UnknownScenario",
                format!("unknown scenario {id}"),
            ),
            other => ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "Internal",
                other.to_string(),
            ),
        }
    }
}

/// JSON error body: `{"error": code, "message": text}`.
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

    fn unknown_session(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "UnknownSession",
            format!("unknown session {id}"),
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({"error": self.code, "message": self.message})),
        )
            .into_response()
    }
}

#[derive(Clone)]
pub struct AppState {
    pub sessions: Arc<Sessions>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session).get(list_sessions))
        .route("/api/sessions/{id}/events", get(stream_events))
        .route("/api/sessions/{id}/briefing", get(get_briefing))
        .route("/api/scenarios", get(list_scenarios))
        .with_state(state)
}

/// Orchestrator and stored sessions as configured.
pub fn open_sessions(config: &ServiceConfig) -> Result<Arc<Sessions>, ServiceError> {
    let orchestrator = config.build_orchestrator()?;
    let store = Store::open(&config.data_dir)?;
    Ok(Arc::new(Sessions::open(orchestrator, store)?))
}

/// Builds the registry from `config` and serves until the listener fails.
pub async fn serve(config: &ServiceConfig) -> Result<(), ServiceError> {
    let sessions = open_sessions(config)?;
    let listener = tokio::net::TcpListener::bind(&config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, mock = config.mock, "serving");
    serve_on(listener, sessions).await
}

/// Serves `sessions` on an already bound listener.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    sessions: Arc<Sessions>,
) -> Result<(), ServiceError> {
    axum::serve(listener, router(AppState { sessions })).await?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct CreateRequest {
    query: String,
    scenario_id: String,
}

async fn create_session(
    State(state): State<AppState>,
    Json(body): Json<CreateRequest>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let session = state.sessions.create(&body.query, &body.scenario_id)?;
    Ok(Json(json!({"session_id": session.id})))
}

#[derive(Debug, Serialize)]
struct SessionSummary {
    #[serde(flatten)]
    meta: SessionMeta,
    events: usize,
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<SessionSummary>> {
    let list = state
        .sessions
        .list()
        .iter()
        .map(|s| SessionSummary {
            meta: s.meta(),
            events: s.event_count(),
        })
        .collect();
    Json(list)
}

#[derive(Debug, Deserialize)]
struct StreamQuery {
    from_seq: Option<u64>,
}

async fn stream_events(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<StreamQuery>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let session = state
        .sessions
        .get(&id)
        .ok_or_else(|| ApiError::unknown_session(&id))?;
    let last_id = headers
        .get("last-event-id")
        .map(|v| v.to_str().unwrap_or_default().to_owned());
    let from = resume_point(last_id.as_deref(), q.from_seq)
        .map_err(|m| ApiError::new(StatusCode::BAD_REQUEST, "BadLastEventId", m))?;
    Ok(sse::response(event_stream(session, from)))
}

#[derive(Debug, Deserialize)]
struct BriefingQuery {
    format: Option<String>,
}

async fn get_briefing(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<BriefingQuery>,
) -> Result<Response, ApiError> {
    let session = state
        .sessions
        .get(&id)
        .ok_or_else(|| ApiError::unknown_session(&id))?;
    match session.state() {
        SessionState::Running => Err(ApiError::new(
            StatusCode::CONFLICT,
            "NotReady",
            "investigation is still running",
        )),
        SessionState::Failed => Err(ApiError::new(
            StatusCode::GONE,
            "Failed",
            session
                .failure()
                .unwrap_or_else(|| "investigation failed".into()),
        )),
        SessionState::Complete => {
            let doc = session
                .briefing()
                .expect("complete sessions carry a briefing");
            Ok(match q.format.as_deref() {
                Some("markdown") => (
                    [("content-type", "text/markdown; charset=utf-8")],
                    doc.markdown,
                )
                    .into_response(),
                _ => Json(doc).into_response(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub id: String,
    pub name: String,
    pub manager: ModelConfig,
    pub agents: std::collections::BTreeMap<String, ModelConfig>,
    /// Published word and source counts, for display only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceOutput>,
}

/// Scenario listing shared by the HTTP endpoint and the CLI.
pub fn scenario_summaries(scenarios: &ScenarioSet) -> Vec<ScenarioSummary> {
    let reference = builtin::reference_outputs();
    scenarios
        .iter()
        .map(|s| ScenarioSummary {
            id: s.id.clone(),
            name: s.name.clone(),
            manager: s.manager.clone(),
            agents: s.agents.clone(),
            reference: reference.get(&s.id).copied(),
        })
        .collect()
}

async fn list_scenarios(State(state): State<AppState>) -> Json<Vec<ScenarioSummary>> {
    Json(scenario_summaries(
        state.sessions.orchestrator().scenarios(),
    ))
}
