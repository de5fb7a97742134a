use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio_stream::wrappers::BroadcastStream;

use crate::error::ApiError;
use crate::sessions::{Registry, StreamEvent};

pub type AppState = Arc<Registry>;

pub fn router(registry: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/level1", get(get_level1))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/changes/{index}/level2", post(post_level2))
        .route("/sessions/{id}/artifacts/{artifact_id}", get(get_artifact))
        .with_state(registry)
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

fn json_bytes(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

#[derive(Deserialize)]
struct CreateBody {
    /// The session log, as a JSON document or as its raw text.
    log: Value,
    #[serde(default)]
    repo_path: Option<PathBuf>,
}

async fn read_create_request(
    state: &AppState,
    req: Request,
) -> Result<(Vec<u8>, Option<PathBuf>), ApiError> {
    let content_type = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_string();
    if content_type.starts_with("multipart/form-data") {
        let mut multipart = Multipart::from_request(req, state)
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        let mut log = None;
        let mut repo = None;
        while let Some(field) = multipart
            .next_field()
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?
        {
            let name = field.name().unwrap_or_default().to_string();
            let data = field
                .bytes()
                .await
                .map_err(|e| ApiError::bad_request(e.body_text()))?;
            match name.as_str() {
                "log" => log = Some(data.to_vec()),
                "repo_path" => repo = Some(PathBuf::from(String::from_utf8_lossy(&data).trim())),
                "archive" => {
                    return Err(ApiError::new(
                        StatusCode::UNSUPPORTED_MEDIA_TYPE,
                        "unsupported",
                        "repository archives are not supported; send repo_path",
                    ))
                }
                other => {
                    return Err(ApiError::bad_request(format!(
                        "unexpected form field {:?}",
                        other
                    )))
                }
            }
        }
        let log = log.ok_or_else(|| ApiError::bad_request("missing form field \"log\""))?;
        Ok((log, repo))
    } else if content_type.starts_with("application/json") {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        let body: CreateBody = serde_json::from_slice(&bytes).map_err(|e| {
            ApiError::new(
                StatusCode::BAD_REQUEST,
                "parse_error",
                format!("request body: {}", e),
            )
        })?;
        let log = match body.log {
            Value::String(s) => s.into_bytes(),
            other => serde_json::to_vec(&other).expect("json value serializes"),
        };
        Ok((log, body.repo_path))
    } else {
        Err(ApiError::new(
            StatusCode::UNSUPPORTED_MEDIA_TYPE,
            "unsupported",
            "expected multipart/form-data or application/json",
        ))
    }
}

async fn create_session(State(state): State<AppState>, req: Request) -> Result<Response, ApiError> {
    let (log, repo) = read_create_request(&state, req).await?;
    let registry = Arc::clone(&state);
    let (session, pending) = tokio::task::spawn_blocking(move || registry.create(&log, repo))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    let status = match pending {
        Some(pending) => {
            tokio::task::spawn_blocking(move || pending.run());
            StatusCode::ACCEPTED
        }
        None => StatusCode::OK,
    };
    let id = &session.session_id;
    let body = json!({
        "session_id": id,
        "status": session.status(),
        "events": format!("/sessions/{}/events", id),
        "level1": format!("/sessions/{}/level1", id),
    });
    Ok((status, Json(body)).into_response())
}

async fn list_sessions(State(state): State<AppState>) -> Json<Value> {
    Json(json!({"sessions": state.ids()}))
}

async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    Ok(Json(state.get(&id)?.summary()))
}

async fn get_level1(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let doc = state.get(&id)?.level1()?;
    Ok(json_bytes(
        StatusCode::OK,
        serde_json::to_string(&doc).expect("level 1 serializes"),
    ))
}

fn sse_event(event: &StreamEvent) -> Event {
    let e = Event::default().event(event.name()).data(event.data());
    match event {
        StreamEvent::Card(card) => e.id(card.order_index.to_string()),
        _ => e,
    }
}

async fn events(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let session = state.get(&id)?;
    let (replay, rx) = session.subscribe();
    let live = match rx {
        Some(rx) => BroadcastStream::new(rx)
            .map(|r| {
                r.unwrap_or_else(|lag| StreamEvent::Error {
                    code: "stream_lagged".into(),
                    message: lag.to_string(),
                })
            })
            .boxed(),
        None => stream::empty().boxed(),
    };
    // end the stream right after the first terminal event
    let upstream = stream::iter(replay).chain(live).boxed();
    let events = stream::unfold(Some(upstream), |state| async move {
        let mut upstream = state?;
        let event = upstream.next().await?;
        let next = (!event.is_terminal()).then_some(upstream);
        Some((Ok(sse_event(&event)), next))
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}

async fn post_level2(
    State(state): State<AppState>,
    Path((id, index)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let session = state.get(&id)?;
    let index: usize = index.parse().map_err(|_| {
        ApiError::from(lens_core::Error::Range(format!(
            "change index {:?} is not a number",
            index
        )))
    })?;
    let bytes = session.level2(index).await?;
    Ok(json_bytes(StatusCode::OK, bytes.to_string()))
}

#[derive(Deserialize)]
struct SliceQuery {
    start: Option<u32>,
    end: Option<u32>,
}

async fn get_artifact(
    State(state): State<AppState>,
    Path((id, artifact_id)): Path<(String, String)>,
    Query(q): Query<SliceQuery>,
) -> Result<Json<Value>, ApiError> {
    Ok(Json(state.get(&id)?.artifact_slice(
        &artifact_id,
        q.start,
        q.end,
    )?))
}
