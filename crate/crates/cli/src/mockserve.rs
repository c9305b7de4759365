//! A scripted OpenAI-compatible endpoint served over local HTTP.
//!
//! Serves the same script format as the in-process `mock://` backend, so
//! integration tests can exercise the real wire path. Requests are matched
//! back to script keys without any side channel:
//!
//! - the preset comes from the exact (temperature, top_p) pair;
//! - a trailing assistant message is the cumulative-prefix prefill, looked up
//!   against prefixes recomputed from the scripted `{id}/0/greedy` response;
//! - requests without a prefill resolve to index 0, with the problem id taken
//!   from a single-problem script directly or matched via dataset statements.
//!
//! Requests with sampling parameters that match neither preset get a 400, so
//! a run against this endpoint doubles as a wire-format check.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{Value, json};

use subthoughts::engine::mock::{MockScript, ScriptOutcome};
use subthoughts::engine::prompt::THOUGHT_OPEN;
use subthoughts::extract::extract_trace;
use subthoughts::model::{ProblemInstance, SamplingParams};
use subthoughts::segment::{MarkerPattern, compile_markers, cumulative_prefix, segment};

pub struct MockEndpointConfig {
    pub script: MockScript,
    /// Problems used to resolve ids from user-message statements; optional
    /// for single-problem scripts.
    pub dataset: Vec<ProblemInstance>,
    /// Marker set the clients segment with; must match for prefix lookups.
    pub markers: Vec<String>,
}

impl MockEndpointConfig {
    pub fn new(script: MockScript) -> Self {
        MockEndpointConfig {
            script,
            dataset: Vec::new(),
            markers: subthoughts::segment::default_marker_set(),
        }
    }
}

struct EndpointState {
    script: MockScript,
    counters: Mutex<HashMap<String, u32>>,
    /// cumulative prefix text -> (problem id, subthought index)
    prefix_index: HashMap<String, (String, u32)>,
    statements: Vec<(String, String)>,
    single_problem_id: Option<String>,
    received: Arc<Mutex<Vec<Value>>>,
}

/// A running endpoint. Dropping the handle stops it.
pub struct MockEndpointHandle {
    pub addr: SocketAddr,
    /// Every request body the endpoint accepted, in arrival order.
    pub received: Arc<Mutex<Vec<Value>>>,
    task: tokio::task::JoinHandle<()>,
}

impl MockEndpointHandle {
    /// Base URL for a `BackendConfig` pointing at this endpoint.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn request_count(&self) -> usize {
        self.received.lock().expect("request log lock").len()
    }
}

impl Drop for MockEndpointHandle {
    fn drop(&mut self) {
        self.task.abort();
    }
}

fn build_state(config: MockEndpointConfig) -> Result<EndpointState, String> {
    let pattern: MarkerPattern =
        compile_markers(&config.markers).map_err(|e| format!("invalid marker set: {e}"))?;
    let mut prefix_index = HashMap::new();
    for id in config.script.problem_ids() {
        let Some(full) = config.script.text_for(&format!("{id}/0/greedy")) else {
            continue;
        };
        let trace = extract_trace(full, (
            subthoughts::engine::prompt::THOUGHT_OPEN,
            subthoughts::engine::prompt::THOUGHT_CLOSE,
        ));
        let Ok(seg) = segment(&trace, &pattern) else {
            continue;
        };
        for i in 1..=seg.n() {
            let prefix = cumulative_prefix(&seg, i).expect("index in range");
            prefix_index
                .entry(prefix.text)
                .or_insert_with(|| (id.clone(), i as u32));
        }
    }
    let ids = config.script.problem_ids();
    Ok(EndpointState {
        single_problem_id: (ids.len() == 1).then(|| ids.into_iter().next().expect("one id")),
        script: config.script,
        counters: Mutex::new(HashMap::new()),
        prefix_index,
        statements: config
            .dataset
            .into_iter()
            .map(|p| (p.statement, p.id))
            .collect(),
        received: Arc::new(Mutex::new(Vec::new())),
    })
}

fn router(state: Arc<EndpointState>) -> Router {
    Router::new()
        .route("/chat/completions", post(chat_completions))
        .route("/v1/chat/completions", post(chat_completions))
        .with_state(state)
}

/// Bind `addr` (port 0 picks a free port) and serve in a background task.
pub async fn spawn(
    config: MockEndpointConfig,
    addr: &str,
) -> Result<MockEndpointHandle, String> {
    let state = Arc::new(build_state(config)?);
    let received = state.received.clone();
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| format!("cannot bind {addr}: {e}"))?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    let app = router(state);
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, app).await;
    });
    Ok(MockEndpointHandle { addr, received, task })
}

async fn chat_completions(
    State(state): State<Arc<EndpointState>>,
    Json(body): Json<Value>,
) -> Response {
    state.received.lock().expect("request log lock").push(body.clone());
    match respond(&state, &body) {
        Ok(reply) => (StatusCode::OK, Json(reply)).into_response(),
        Err((status, message)) => (
            status,
            Json(json!({"error": {"message": message}})),
        )
            .into_response(),
    }
}

fn respond(state: &EndpointState, body: &Value) -> Result<Value, (StatusCode, String)> {
    let bad = |message: String| (StatusCode::BAD_REQUEST, message);
    let model = body
        .get("model")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing field: model".into()))?;
    let messages = body
        .get("messages")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing field: messages".into()))?;
    let temperature = body
        .get("temperature")
        .and_then(Value::as_f64)
        .ok_or_else(|| bad("missing field: temperature".into()))?;
    let top_p = body
        .get("top_p")
        .and_then(Value::as_f64)
        .ok_or_else(|| bad("missing field: top_p".into()))?;
    body.get("max_tokens")
        .and_then(Value::as_u64)
        .ok_or_else(|| bad("missing field: max_tokens".into()))?;

    let greedy = SamplingParams::GREEDY;
    let diverse = SamplingParams::DIVERSE;
    let preset = if temperature == greedy.temperature && top_p == greedy.top_p {
        "greedy"
    } else if temperature == diverse.temperature && top_p == diverse.top_p {
        "diverse"
    } else {
        return Err(bad(format!(
            "sampling params (temperature={temperature}, top_p={top_p}) match no known preset"
        )));
    };

    let prefill = messages
        .last()
        .filter(|m| m.get("role").and_then(Value::as_str) == Some("assistant"))
        .and_then(|m| m.get("content").and_then(Value::as_str));

    let (problem_id, index) = match prefill {
        Some(prefill) => {
            let partial = prefill.strip_prefix(THOUGHT_OPEN).unwrap_or(prefill);
            state.prefix_index.get(partial).cloned().ok_or((
                StatusCode::NOT_FOUND,
                "assistant prefill matches no scripted cumulative prefix".to_string(),
            ))?
        }
        None => {
            let id = state
                .single_problem_id
                .clone()
                .or_else(|| {
                    let user_text = messages
                        .iter()
                        .rev()
                        .find(|m| m.get("role").and_then(Value::as_str) == Some("user"))
                        .and_then(|m| m.get("content").and_then(Value::as_str))?;
                    state
                        .statements
                        .iter()
                        .find(|(statement, _)| user_text.contains(statement))
                        .map(|(_, id)| id.clone())
                })
                .ok_or((
                    StatusCode::NOT_FOUND,
                    "cannot resolve a problem id; serve a single-problem script or pass --dataset"
                        .to_string(),
                ))?;
            (id, 0)
        }
    };

    let key = format!("{problem_id}/{index}/{preset}");
    let mut counters = state.counters.lock().expect("counter lock");
    match state.script.resolve(&key, &mut counters) {
        ScriptOutcome::Text(text) => Ok(json!({
            "id": format!("mock-{key}"),
            "object": "chat.completion",
            "model": model,
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": text},
                "finish_reason": "stop",
            }],
        })),
        ScriptOutcome::Failure => Err((
            StatusCode::INTERNAL_SERVER_ERROR,
            format!("scripted failure for {key}"),
        )),
        ScriptOutcome::Missing => Err((
            StatusCode::NOT_FOUND,
            format!("no script entry for {key}"),
        )),
    }
}
