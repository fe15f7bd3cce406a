use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::{ServiceError, Session, SessionService, SessionView};
use crate::editops::EditOp;
use crate::flowgraph::{export_graph, to_flowgraph, ExportFormat};
use crate::workflow::StepLabel;

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::WrongState { .. } => StatusCode::CONFLICT,
            ServiceError::EmptyTask
            | ServiceError::EmptyMessage
            | ServiceError::Edit(_)
            | ServiceError::InvalidWorkflow(_)
            | ServiceError::UnknownTarget(_)
            | ServiceError::AlreadyExtended(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::PlanningFailed { .. } | ServiceError::Llm(_) => StatusCode::BAD_GATEWAY,
            ServiceError::CorruptLog { .. } | ServiceError::Replay { .. } | ServiceError::Storage(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        (self.status(), Json(&self)).into_response()
    }
}

fn view(session: &Session) -> Json<serde_json::Value> {
    Json(serde_json::to_value(SessionView::from(session)).expect("session serializes"))
}

type ApiResult = Result<Response, ServiceError>;

async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Storage(format!("worker failed: {e}")))?
}

#[derive(Deserialize)]
struct CreateBody {
    task: String,
    #[serde(default)]
    defer_plan: Option<bool>,
}

async fn create(State(svc): State<Arc<SessionService>>, Json(body): Json<CreateBody>) -> ApiResult {
    let outcome = blocking(move || match body.defer_plan {
        Some(defer) => svc.create_session_with(&body.task, defer),
        None => svc.create_session(&body.task),
    })
    .await?;
    let mut value = serde_json::to_value(SessionView::from(&outcome.session)).expect("session serializes");
    if let Some(err) = &outcome.plan_error {
        value["plan_error"] = serde_json::to_value(err).expect("error serializes");
    }
    Ok((StatusCode::CREATED, Json(value)).into_response())
}

async fn fetch(State(svc): State<Arc<SessionService>>, Path(id): Path<String>) -> ApiResult {
    let session = blocking(move || svc.get_session(&id)).await?;
    Ok(view(&session).into_response())
}

#[derive(Deserialize)]
struct FormatQuery {
    format: Option<String>,
}

async fn flowgraph(
    State(svc): State<Arc<SessionService>>,
    Path(id): Path<String>,
    Query(q): Query<FormatQuery>,
) -> ApiResult {
    let format: ExportFormat = match q.format.as_deref().unwrap_or("json").parse() {
        Ok(f) => f,
        Err(_) => {
            return Ok((
                StatusCode::BAD_REQUEST,
                Json(json!({"error": "BadFormat", "message": "format must be dot or json"})),
            )
                .into_response())
        }
    };
    let session = blocking(move || svc.get_session(&id)).await?;
    let workflow = session.workflow.as_ref().ok_or(ServiceError::WrongState {
        op: "flowgraph",
        state: session.state,
    })?;
    let rendered = to_flowgraph(workflow)
        .and_then(|g| export_graph(&g, format))
        .map_err(|_| ServiceError::InvalidWorkflow(crate::workflow::validate_workflow(workflow)))?;
    let content_type = match format {
        ExportFormat::Dot => "text/vnd.graphviz; charset=utf-8",
        ExportFormat::Json => "application/json",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], rendered).into_response())
}

async fn plan(State(svc): State<Arc<SessionService>>, Path(id): Path<String>) -> ApiResult {
    let session = blocking(move || svc.generate_plan(&id)).await?;
    Ok(view(&session).into_response())
}

async fn edit(
    State(svc): State<Arc<SessionService>>,
    Path(id): Path<String>,
    Json(op): Json<EditOp>,
) -> ApiResult {
    let session = blocking(move || svc.apply_edit(&id, op)).await?;
    Ok(view(&session).into_response())
}

#[derive(Deserialize)]
struct ExtendBody {
    target: StepLabel,
}

async fn extend(
    State(svc): State<Arc<SessionService>>,
    Path(id): Path<String>,
    Json(body): Json<ExtendBody>,
) -> ApiResult {
    let session = blocking(move || svc.request_extension(&id, &body.target)).await?;
    Ok(view(&session).into_response())
}

async fn confirm(State(svc): State<Arc<SessionService>>, Path(id): Path<String>) -> ApiResult {
    let session = blocking(move || svc.confirm(&id)).await?;
    Ok(view(&session).into_response())
}

#[derive(Deserialize)]
struct ChatBody {
    message: String,
}

async fn chat(
    State(svc): State<Arc<SessionService>>,
    Path(id): Path<String>,
    Json(body): Json<ChatBody>,
) -> ApiResult {
    let session = blocking(move || svc.chat_turn(&id, &body.message)).await?;
    Ok(view(&session).into_response())
}

async fn reopen(State(svc): State<Arc<SessionService>>, Path(id): Path<String>) -> ApiResult {
    let session = blocking(move || svc.reopen(&id)).await?;
    Ok(view(&session).into_response())
}

#[derive(Deserialize)]
struct SinceQuery {
    #[serde(default)]
    since: u64,
}

async fn events(
    State(svc): State<Arc<SessionService>>,
    Path(id): Path<String>,
    Query(q): Query<SinceQuery>,
) -> ApiResult {
    let events = blocking(move || svc.events(&id, q.since)).await?;
    Ok(Json(events).into_response())
}

/// The session HTTP API.
pub fn router(service: Arc<SessionService>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(fetch))
        .route("/sessions/{id}/flowgraph", get(flowgraph))
        .route("/sessions/{id}/plan", post(plan))
        .route("/sessions/{id}/edits", post(edit))
        .route("/sessions/{id}/extend", post(extend))
        .route("/sessions/{id}/confirm", post(confirm))
        .route("/sessions/{id}/chat", post(chat))
        .route("/sessions/{id}/reopen", post(reopen))
        .route("/sessions/{id}/events", get(events))
        .with_state(service)
}

