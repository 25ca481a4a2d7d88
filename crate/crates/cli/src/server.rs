//! Local annotation service over an edit registry.
//!
//! | method | path                       | body / query                          |
//! |--------|----------------------------|---------------------------------------|
//! | GET    | `/edits/next`              | `role=editor`, or `role=validator&annotator=ID` |
//! | POST   | `/edits`                   | [`NewEdit`]                           |
//! | POST   | `/edits/{id}/validations`  | [`NewValidation`]                     |
//! | GET    | `/agreement`               | optional `task=nli\|dnli`             |
//! | GET    | `/analytics/{name}`        | serves `analytics/{name}.json`        |
//!
//! Validator payloads and validation responses never carry the original or
//! target label, so validators stay blind to what the editor intended.

use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ctxprobe_core::probe::{EditRegistry, ValidationOutcome};
use ctxprobe_core::{Error, Label, Task, TextField};
use serde::Deserialize;
use serde_json::json;

pub struct AppState {
    registry: Mutex<EditRegistry>,
    analytics_dir: PathBuf,
}

impl AppState {
    pub fn new(registry: EditRegistry, analytics_dir: PathBuf) -> Arc<Self> {
        Arc::new(AppState {
            registry: Mutex::new(registry),
            analytics_dir,
        })
    }

    fn registry(&self) -> MutexGuard<'_, EditRegistry> {
        // A panic mid-request cannot leave the registry half-written: every
        // mutation persists a complete snapshot, so the data is still usable.
        self.registry.lock().unwrap_or_else(|p| p.into_inner())
    }
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownEdit(_) => StatusCode::NOT_FOUND,
            Error::ConflictingValidation { .. } => StatusCode::CONFLICT,
            Error::Io(_) | Error::Json(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError(status, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Deserialize)]
struct NextQuery {
    role: String,
    annotator: Option<String>,
}

async fn next_item(State(state): State<Arc<AppState>>, Query(q): Query<NextQuery>) -> ApiResult<Response> {
    let registry = state.registry();
    let item = match q.role.as_str() {
        "editor" => registry.next_editor_item().map(serde_json::to_value),
        "validator" => {
            let annotator = q
                .annotator
                .filter(|a| !a.is_empty())
                .ok_or_else(|| ApiError(StatusCode::BAD_REQUEST, "validators must pass annotator=ID".into()))?;
            registry.next_validator_item(&annotator).map(serde_json::to_value)
        }
        other => {
            return Err(ApiError(
                StatusCode::BAD_REQUEST,
                format!("role must be editor or validator, got {other:?}"),
            ))
        }
    };
    match item {
        None => Ok(StatusCode::NO_CONTENT.into_response()),
        Some(v) => Ok(Json(v.map_err(Error::from)?).into_response()),
    }
}

#[derive(Debug, Deserialize)]
pub struct NewEdit {
    pub instance_id: String,
    pub target_label: Label,
    pub edited_text: String,
    pub editor_id: String,
    #[serde(default)]
    pub field: Option<TextField>,
}

async fn post_edit(State(state): State<Arc<AppState>>, Json(body): Json<NewEdit>) -> ApiResult<Response> {
    let edit = state.registry().register(
        &body.instance_id,
        body.target_label,
        &body.edited_text,
        &body.editor_id,
        body.field,
    )?;
    Ok((StatusCode::CREATED, Json(edit)).into_response())
}

#[derive(Debug, Deserialize)]
pub struct NewValidation {
    pub annotator_id: String,
    pub label: String,
    /// Defaults to the server clock.
    #[serde(default)]
    pub timestamp_ms: Option<u64>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

async fn post_validation(
    State(state): State<Arc<AppState>>,
    Path(edit_id): Path<String>,
    Json(body): Json<NewValidation>,
) -> ApiResult<Response> {
    let mut registry = state.registry();
    let task = registry
        .get(&edit_id)
        .map(|e| e.task())
        .ok_or_else(|| Error::UnknownEdit(edit_id.clone()))?;
    let label = Label::parse_for(&body.label, task)?;
    let (edit, outcome) = registry.record_validation(
        &edit_id,
        &body.annotator_id,
        label,
        body.timestamp_ms.unwrap_or_else(now_ms),
    )?;
    let counts = edit
        .validations
        .iter()
        .find(|v| v.annotator_id == body.annotator_id)
        .is_some_and(|v| v.counts);
    let outcome = match outcome {
        ValidationOutcome::Recorded => "recorded",
        ValidationOutcome::Duplicate => "duplicate",
    };
    Ok(Json(json!({ "edit_id": edit_id, "outcome": outcome, "counts": counts })).into_response())
}

#[derive(Deserialize)]
struct AgreementQuery {
    task: Option<String>,
}

async fn agreement(State(state): State<Arc<AppState>>, Query(q): Query<AgreementQuery>) -> ApiResult<Response> {
    let registry = state.registry();
    let task: Task = match q.task {
        Some(t) => t.parse()?,
        None => registry
            .edits()
            .next()
            .map(|e| e.task())
            .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, "no edits registered".into()))?,
    };
    Ok(Json(registry.agreement(task)?).into_response())
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && !name.contains("..")
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

async fn analytics(State(state): State<Arc<AppState>>, Path(name): Path<String>) -> ApiResult<Response> {
    let name = name.strip_suffix(".json").unwrap_or(&name);
    if !valid_name(name) {
        return Err(ApiError(StatusCode::BAD_REQUEST, format!("invalid analytics name {name:?}")));
    }
    let path = state.analytics_dir.join(format!("{name}.json"));
    match std::fs::read(&path) {
        Ok(bytes) => Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(ApiError(StatusCode::NOT_FOUND, format!("no analytics named {name:?}")))
        }
        Err(e) => Err(ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/edits/next", get(next_item))
        .route("/edits", post(post_edit))
        .route("/edits/{id}/validations", post(post_validation))
        .route("/agreement", get(agreement))
        .route("/analytics/{name}", get(analytics))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(state: Arc<AppState>, address: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(address).await?;
    log::info!("listening on {}", listener.local_addr()?);
    eprintln!("serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[cfg(test)]
mod tests {
    use super::valid_name;

    #[test]
    fn analytics_names_cannot_escape() {
        assert!(valid_name("snli.shift"));
        assert!(!valid_name("../secret"));
        assert!(!valid_name(".hidden"));
        assert!(!valid_name("a/b"));
        assert!(!valid_name(""));
    }
}
