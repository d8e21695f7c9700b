//! HTTP and WebSocket front end for a [`Gateway`].

use std::sync::mpsc::RecvTimeoutError;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use babelbot_core::gateway::{Gateway, GatewayError};
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

#[derive(Clone)]
struct AppState {
    gw: Gateway,
    token: Option<String>,
}

pub struct ApiError(GatewayError);

#[derive(Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
    retryable: bool,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        use GatewayError::*;
        let (status, kind) = match &self.0 {
            SessionUnknown(_) => (StatusCode::NOT_FOUND, "session_unknown"),
            SessionExists(_) => (StatusCode::CONFLICT, "session_exists"),
            InvalidSessionId(_) => (StatusCode::BAD_REQUEST, "invalid_session_id"),
            SessionBusy => (StatusCode::CONFLICT, "session_busy"),
            NoPendingPlan => (StatusCode::CONFLICT, "no_pending_plan"),
            EmptyCommand => (StatusCode::BAD_REQUEST, "empty_command"),
            InvalidLanguage(_) => (StatusCode::BAD_REQUEST, "invalid_language"),
            Llm { retryable: true, .. } => (StatusCode::SERVICE_UNAVAILABLE, "llm_unavailable"),
            Llm { .. } => (StatusCode::BAD_GATEWAY, "llm_error"),
            Engine(_) => (StatusCode::UNPROCESSABLE_ENTITY, "engine_error"),
            Exec(_) => (StatusCode::INTERNAL_SERVER_ERROR, "execution_error"),
            Config(_) | Io(_) | CorruptLog { .. } | Bench(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        let retryable = matches!(self.0, Llm { retryable: true, .. } | SessionBusy);
        let body = ErrorBody {
            error: kind,
            message: self.0.to_string(),
            retryable,
        };
        let mut resp = (status, Json(body)).into_response();
        if status == StatusCode::SERVICE_UNAVAILABLE {
            resp.headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from_static("2"));
        }
        resp
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Gateway calls block (model requests, inline execution), so they run on
/// the blocking pool.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> Result<T, GatewayError> + Send + 'static,
    T: Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map(Json).map_err(ApiError),
        Err(e) => Err(ApiError(GatewayError::Exec(format!("worker failed: {e}")))),
    }
}

#[derive(Deserialize, Default)]
struct CreateBody {
    id: Option<String>,
}

#[derive(Deserialize)]
struct TextBody {
    text: String,
}

#[derive(Deserialize)]
struct LanguageBody {
    code: Option<String>,
}

#[derive(Serialize)]
struct AbortReply {
    aborted: bool,
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    after: u64,
    token: Option<String>,
}

pub fn router(gw: Gateway) -> Router {
    let token = gw.config().token.clone();
    let state = AppState { gw, token };
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/:id/command", post(command))
        .route("/sessions/:id/confirm", post(confirm))
        .route("/sessions/:id/abort", post(abort))
        .route("/sessions/:id/language", post(language))
        .route("/sessions/:id/state", get(session_state))
        .route("/sessions/:id/events", get(events))
        .route("/maps", get(maps))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

/// Static bearer token check. The event socket may pass the token as a
/// `token` query parameter instead, since browsers cannot set headers on
/// WebSocket requests.
async fn require_token(State(st): State<AppState>, req: Request, next: Next) -> Response {
    let Some(expected) = st.token.as_deref() else {
        return next.run(req).await;
    };
    let header_ok = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| t == expected);
    let query_ok = req.uri().query().is_some_and(|q| {
        q.split('&')
            .filter_map(|kv| kv.split_once('='))
            .any(|(k, v)| k == "token" && v == expected)
    });
    if header_ok || query_ok {
        next.run(req).await
    } else {
        let body = ErrorBody {
            error: "unauthorized",
            message: "missing or wrong bearer token".into(),
            retryable: false,
        };
        (StatusCode::UNAUTHORIZED, Json(body)).into_response()
    }
}

async fn create_session(
    State(st): State<AppState>,
    body: Option<Json<CreateBody>>,
) -> Result<(StatusCode, Json<babelbot_core::gateway::SessionView>), ApiError> {
    let id = body.and_then(|Json(b)| b.id);
    let gw = st.gw.clone();
    let view = blocking(move || gw.create_session(id.as_deref())).await?;
    Ok((StatusCode::CREATED, view))
}

async fn command(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<TextBody>,
) -> ApiResult<babelbot_core::gateway::CommandReply> {
    let gw = st.gw.clone();
    blocking(move || gw.submit_command(&id, &body.text)).await
}

async fn confirm(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<TextBody>,
) -> ApiResult<babelbot_core::gateway::ConfirmReply> {
    let gw = st.gw.clone();
    blocking(move || gw.confirm(&id, &body.text)).await
}

async fn abort(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<AbortReply> {
    let gw = st.gw.clone();
    blocking(move || gw.abort(&id).map(|aborted| AbortReply { aborted })).await
}

async fn language(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<LanguageBody>,
) -> ApiResult<babelbot_core::gateway::SessionView> {
    let gw = st.gw.clone();
    blocking(move || gw.set_language(&id, body.code.as_deref())).await
}

async fn session_state(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<babelbot_core::gateway::SessionView> {
    let gw = st.gw.clone();
    blocking(move || gw.state(&id)).await
}

async fn maps(State(st): State<AppState>) -> ApiResult<Vec<babelbot_core::gateway::NamedMap>> {
    let gw = st.gw.clone();
    blocking(move || Ok(gw.maps())).await
}

/// Sends retained events after `after`, then live ones. Reconnecting
/// clients pass the last sequence number they saw.
async fn events(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let _ = q.token;
    let (backlog, rx) = st.gw.subscribe(&id, q.after).map_err(ApiError)?;
    let (tx, live) = mpsc::unbounded_channel();
    // Bridge the session's std channel into the async world. The thread
    // exits once the socket side has gone away.
    tokio::task::spawn_blocking(move || loop {
        match rx.recv_timeout(Duration::from_millis(500)) {
            Ok(ev) => {
                if tx.send(ev).is_err() {
                    break;
                }
            }
            Err(RecvTimeoutError::Timeout) if tx.is_closed() => break,
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
    });
    Ok(ws.on_upgrade(move |socket| pump(socket, backlog, live)))
}

async fn pump(
    mut socket: WebSocket,
    backlog: Vec<babelbot_core::TelemetryEvent>,
    mut live: mpsc::UnboundedReceiver<babelbot_core::TelemetryEvent>,
) {
    for ev in backlog {
        if send(&mut socket, &ev).await.is_err() {
            return;
        }
    }
    loop {
        tokio::select! {
            ev = live.recv() => match ev {
                Some(ev) => {
                    if send(&mut socket, &ev).await.is_err() {
                        return;
                    }
                }
                None => return,
            },
            msg = socket.recv() => match msg {
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

async fn send(socket: &mut WebSocket, ev: &babelbot_core::TelemetryEvent) -> Result<(), axum::Error> {
    let text = serde_json::to_string(ev).expect("event serializes");
    socket.send(Message::Text(text)).await
}

/// Serve until ctrl-c, with a heartbeat tick for idle sessions.
pub async fn serve(gw: Gateway, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    let period = Duration::from_millis(gw.config().heartbeat_ms.max(10));
    let hb = gw.clone();
    let ticker = tokio::spawn(async move {
        let mut interval = tokio::time::interval(period);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        loop {
            interval.tick().await;
            let g = hb.clone();
            let _ = tokio::task::spawn_blocking(move || g.heartbeat_all()).await;
        }
    });
    let result = axum::serve(listener, router(gw))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await;
    ticker.abort();
    result
}
