//! OpenAI-compatible chat-completions transport.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::engine::{
    BackendConfig, BackendResponse, CallError, EngineError, FinishReason, GenerationRequest,
};

pub(crate) struct HttpTransport {
    client: reqwest::Client,
    endpoint: String,
    bearer: Option<String>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
    // Continuation flags for prefill requests; endpoints that do not know
    // them ignore unknown fields.
    #[serde(skip_serializing_if = "Option::is_none")]
    add_generation_prompt: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    continue_final_message: Option<bool>,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

impl HttpTransport {
    pub fn new(config: &BackendConfig) -> Result<Self, EngineError> {
        let base = config.base_url.trim_end_matches('/');
        let bearer = if config.api_key_env.is_empty() {
            None
        } else {
            match std::env::var(&config.api_key_env) {
                Ok(key) if !key.is_empty() => Some(key),
                _ => {
                    return Err(EngineError::Config(format!(
                        "credential variable {} is not set",
                        config.api_key_env
                    )));
                }
            }
        };
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(u64::from(config.timeout_seconds)))
            .build()
            .map_err(|e| EngineError::Config(format!("failed to build HTTP client: {e}")))?;
        Ok(HttpTransport {
            client,
            endpoint: format!("{base}/chat/completions"),
            bearer,
        })
    }

    pub async fn complete(
        &self,
        request: &GenerationRequest,
        config: &BackendConfig,
    ) -> Result<BackendResponse, CallError> {
        let bundle = &request.bundle;
        let mut messages = vec![
            ChatMessage { role: "system", content: &bundle.system_text },
            ChatMessage { role: "user", content: &bundle.user_text },
        ];
        let continuing = bundle.prefill_text.is_some();
        if let Some(prefill) = &bundle.prefill_text {
            messages.push(ChatMessage { role: "assistant", content: prefill });
        }
        let body = ChatRequest {
            model: &config.model_name,
            messages,
            temperature: request.params.temperature,
            top_p: request.params.top_p,
            max_tokens: request.params.max_new_tokens,
            add_generation_prompt: continuing.then_some(false),
            continue_final_message: continuing.then_some(true),
        };

        let mut http_request = self.client.post(&self.endpoint).json(&body);
        if let Some(token) = &self.bearer {
            http_request = http_request.bearer_auth(token);
        }
        let response = http_request
            .send()
            .await
            .map_err(|e| CallError::Transient(e.to_string()))?;

        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(CallError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let detail = response.text().await.unwrap_or_default();
            return Err(CallError::Fatal(format!("HTTP {status}: {}", truncate(&detail, 200))));
        }

        let parsed: ChatResponse = response
            .json()
            .await
            .map_err(|e| CallError::Fatal(format!("malformed completion response: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| CallError::Fatal("completion response had no choices".into()))?;
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("length") => FinishReason::LengthLimit,
            _ => FinishReason::Stop,
        };
        Ok(BackendResponse {
            text: choice.message.content.unwrap_or_default(),
            finish_reason,
        })
    }
}

fn truncate(text: &str, limit: usize) -> &str {
    match text.char_indices().nth(limit) {
        Some((byte, _)) => &text[..byte],
        None => text,
    }
}
