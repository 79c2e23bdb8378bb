//! A local, scriptable chat-completion endpoint for tests and offline runs.
//!
//! Responses follow the script in arrival order and repeat the last entry
//! once the script is exhausted. Every received request is recorded (body
//! plus authorization header) so tests can assert on the wire traffic.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One scripted response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptStep {
    /// A 200 response whose assistant message carries this content.
    Reply { content: String },
    /// An HTTP error status with a JSON error body.
    Status { code: u16 },
}

impl ScriptStep {
    pub fn reply(content: impl Into<String>) -> Self {
        ScriptStep::Reply {
            content: content.into(),
        }
    }

    pub fn status(code: u16) -> Self {
        ScriptStep::Status { code }
    }
}

/// A request as the server saw it.
#[derive(Debug, Clone, Serialize)]
pub struct RecordedRequest {
    pub authorization: Option<String>,
    pub body: serde_json::Value,
}

struct MockState {
    script: Vec<ScriptStep>,
    cursor: AtomicUsize,
    requests: Mutex<Vec<RecordedRequest>>,
}

/// Handle to a running mock endpoint; shuts down on drop.
pub struct MockServer {
    addr: SocketAddr,
    state: Arc<MockState>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

async fn completions(
    State(state): State<Arc<MockState>>,
    headers: HeaderMap,
    Json(body): Json<serde_json::Value>,
) -> Response {
    let authorization = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .map(|v| v.to_string());
    state
        .requests
        .lock()
        .expect("request log lock")
        .push(RecordedRequest {
            authorization,
            body: body.clone(),
        });

    let index = state.cursor.fetch_add(1, Ordering::SeqCst);
    let step = state
        .script
        .get(index)
        .unwrap_or_else(|| state.script.last().expect("script is non-empty"));
    match step {
        ScriptStep::Reply { content } => {
            let model = body.get("model").and_then(|m| m.as_str()).unwrap_or("mock");
            let payload = serde_json::json!({
                "id": format!("mock-{index}"),
                "object": "chat.completion",
                "model": model,
                "choices": [{
                    "index": 0,
                    "message": {"role": "assistant", "content": content},
                    "finish_reason": "stop",
                }],
            });
            (StatusCode::OK, Json(payload)).into_response()
        }
        ScriptStep::Status { code } => {
            let status = StatusCode::from_u16(*code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            let payload = serde_json::json!({
                "error": {"message": format!("scripted error {code}")},
            });
            (status, Json(payload)).into_response()
        }
    }
}

impl MockServer {
    /// Starts on an ephemeral localhost port.
    pub fn start(script: Vec<ScriptStep>) -> Result<Self> {
        Self::start_on(script, 0)
    }

    /// Starts on a specific port (0 = ephemeral). Fails if the port is taken.
    pub fn start_on(script: Vec<ScriptStep>, port: u16) -> Result<Self> {
        if script.is_empty() {
            return Err(Error::validation("script", "must contain at least one step"));
        }
        let listener = std::net::TcpListener::bind(("127.0.0.1", port))
            .map_err(|e| Error::io(format!("127.0.0.1:{port}"), e))?;
        listener
            .set_nonblocking(true)
            .map_err(|e| Error::io(format!("127.0.0.1:{port}"), e))?;
        let addr = listener
            .local_addr()
            .map_err(|e| Error::io(format!("127.0.0.1:{port}"), e))?;

        let state = Arc::new(MockState {
            script,
            cursor: AtomicUsize::new(0),
            requests: Mutex::new(Vec::new()),
        });
        let router_state = state.clone();
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();

        let thread = std::thread::spawn(move || {
            let runtime = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .expect("mock server runtime");
            runtime.block_on(async move {
                let app = Router::new()
                    .route("/v1/chat/completions", post(completions))
                    .with_state(router_state);
                let listener =
                    tokio::net::TcpListener::from_std(listener).expect("mock server listener");
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
                    .expect("mock server");
            });
        });

        Ok(MockServer {
            addr,
            state,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    /// Base URL suitable for [`crate::llm::LlmConfig::base_url`].
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn request_count(&self) -> usize {
        self.state.requests.lock().expect("request log lock").len()
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.state.requests.lock().expect("request log lock").clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}
