//! Prompt construction and model completion backends.
//!
//! A [`Backend`] talks either to a live OpenAI-compatible endpoint over HTTP
//! or to an in-process scripted mock, selected by the `base_url` scheme
//! (`http(s)://` vs `mock://path/to/script.json`). Both sit behind the same
//! retrying [`Backend::generate`] entry point so the rest of the pipeline
//! never cares which one it is running against.

mod http;
pub mod mock;
pub mod prompt;

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ProblemInstance, SamplingParams};
use crate::segment::{SubthoughtSegmentation, cumulative_prefix};

const BACKOFF_BASE_MS: u64 = 100;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("protocol error after {attempts} attempt(s): {message}")]
    Protocol { attempts: u32, message: String },
    #[error("prompt template does not contain the placeholder {0:?}")]
    MissingPlaceholder(&'static str),
    #[error("partial trace text must not be empty")]
    EmptyPartialTrace,
}

impl EngineError {
    pub fn attempts(&self) -> u32 {
        match self {
            EngineError::Transport { attempts, .. } | EngineError::Protocol { attempts, .. } => {
                *attempts
            }
            _ => 1,
        }
    }
}

/// How to reach one completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    /// Endpoint root, e.g. `http://host:8000/v1`. The scheme `mock://` selects
    /// the in-process scripted backend; the rest of the URL is the script path.
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the bearer token. Empty means
    /// the endpoint needs no credential.
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_timeout_seconds")]
    pub timeout_seconds: u32,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

fn default_timeout_seconds() -> u32 {
    120
}

fn default_max_retries() -> u32 {
    3
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.model_name.is_empty() {
            return Err(EngineError::Config("model_name must not be empty".into()));
        }
        if self.timeout_seconds == 0 {
            return Err(EngineError::Config("timeout_seconds must be positive".into()));
        }
        if let Some(path) = self.base_url.strip_prefix("mock://") {
            if path.is_empty() {
                return Err(EngineError::Config("mock backend needs a script path".into()));
            }
        } else {
            reqwest::Url::parse(&self.base_url)
                .map_err(|e| EngineError::Config(format!("invalid base_url {:?}: {e}", self.base_url)))?;
        }
        Ok(())
    }
}

/// The text sent to the model for one request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    /// Assistant-side text the model must continue from; carries the partial
    /// trace. Ends exactly at the end of the injected text.
    pub prefill_text: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    LengthLimit,
    Error,
}

/// One model generation, successful or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub problem_id: String,
    /// 0 marks the initial full-trace generation; i >= 1 is the completion
    /// from the cumulative prefix through subthought i.
    pub subthought_index: u32,
    pub prompt: PromptBundle,
    pub params: SamplingParams,
    pub output_text: String,
    pub finish_reason: FinishReason,
    pub attempt_count: u32,
}

/// What a request is for; decides the preset slot in mock-script keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestSlot {
    Completion,
    Extraction,
}

#[derive(Debug, Clone)]
pub struct GenerationRequest {
    pub problem_id: String,
    pub subthought_index: u32,
    pub bundle: PromptBundle,
    pub params: SamplingParams,
    pub slot: RequestSlot,
}

impl GenerationRequest {
    pub fn completion(
        problem_id: impl Into<String>,
        subthought_index: u32,
        bundle: PromptBundle,
        params: SamplingParams,
    ) -> Self {
        GenerationRequest {
            problem_id: problem_id.into(),
            subthought_index,
            bundle,
            params,
            slot: RequestSlot::Completion,
        }
    }

    fn preset_slot(&self) -> String {
        match self.slot {
            RequestSlot::Completion => self.params.preset_name(),
            RequestSlot::Extraction => "extract".into(),
        }
    }

    /// Mock-script lookup key, `{problem_id}/{index}/{preset}`.
    pub fn script_key(&self) -> String {
        format!("{}/{}/{}", self.problem_id, self.subthought_index, self.preset_slot())
    }
}

pub(crate) struct BackendResponse {
    pub text: String,
    pub finish_reason: FinishReason,
}

pub(crate) enum CallError {
    /// Worth retrying: network failure, timeout, 429, 5xx.
    Transient(String),
    /// Not worth retrying: malformed response, unknown script key, other 4xx.
    Fatal(String),
}

enum Transport {
    Http(http::HttpTransport),
    Mock(mock::MockTransport),
}

/// A completion endpoint plus its retry policy.
pub struct Backend {
    config: BackendConfig,
    transport: Transport,
    requests_issued: AtomicU64,
}

impl Backend {
    pub fn from_config(config: &BackendConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let transport = match config.base_url.strip_prefix("mock://") {
            Some(path) => Transport::Mock(mock::MockTransport::from_script_path(path.as_ref())?),
            None => Transport::Http(http::HttpTransport::new(config)?),
        };
        Ok(Backend {
            config: config.clone(),
            transport,
            requests_issued: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// Total requests issued through this backend, counting each retry.
    pub fn requests_issued(&self) -> u64 {
        self.requests_issued.load(Ordering::Relaxed)
    }

    /// Issue one completion request, retrying transient failures with
    /// exponential backoff up to `max_retries` extra attempts.
    pub async fn generate(
        &self,
        request: &GenerationRequest,
    ) -> Result<CompletionRecord, EngineError> {
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            self.requests_issued.fetch_add(1, Ordering::Relaxed);
            let outcome = match &self.transport {
                Transport::Http(t) => t.complete(request, &self.config).await,
                Transport::Mock(t) => t.complete(request),
            };
            match outcome {
                Ok(response) => {
                    return Ok(CompletionRecord {
                        problem_id: request.problem_id.clone(),
                        subthought_index: request.subthought_index,
                        prompt: request.bundle.clone(),
                        params: request.params,
                        output_text: response.text,
                        finish_reason: response.finish_reason,
                        attempt_count: attempt,
                    });
                }
                Err(CallError::Transient(message)) => {
                    if attempt > self.config.max_retries {
                        return Err(EngineError::Transport { attempts: attempt, message });
                    }
                    tokio::time::sleep(backoff_delay(attempt)).await;
                }
                Err(CallError::Fatal(message)) => {
                    return Err(EngineError::Protocol { attempts: attempt, message });
                }
            }
        }
    }

    /// Generate one completion from every cumulative prefix of `seg`.
    ///
    /// Runs at most `parallelism` requests in flight; the returned records are
    /// ordered by subthought index regardless of completion order. A failed
    /// index becomes a record with `FinishReason::Error` instead of aborting
    /// the batch.
    pub async fn expand_all(
        &self,
        problem: &ProblemInstance,
        seg: &SubthoughtSegmentation,
        params: SamplingParams,
        parallelism: usize,
    ) -> Vec<CompletionRecord> {
        use futures::StreamExt;

        let parallelism = parallelism.max(1);
        let indices = 1..=seg.n();
        let mut records: Vec<CompletionRecord> = futures::stream::iter(indices.map(|i| async move {
            let partial = cumulative_prefix(seg, i).expect("index in range");
            let bundle = prompt::build_partial_prompt(problem, &partial, prompt::DEFAULT_USER_TEMPLATE)
                .expect("chunks are non-empty");
            let request =
                GenerationRequest::completion(&problem.id, i as u32, bundle, params);
            match self.generate(&request).await {
                Ok(record) => record,
                Err(error) => error_record(&request, &error),
            }
        }))
        .buffer_unordered(parallelism)
        .collect()
        .await;
        records.sort_by_key(|r| r.subthought_index);
        records
    }
}

/// A placeholder record for a request that could not be completed.
pub fn error_record(request: &GenerationRequest, error: &EngineError) -> CompletionRecord {
    CompletionRecord {
        problem_id: request.problem_id.clone(),
        subthought_index: request.subthought_index,
        prompt: request.bundle.clone(),
        params: request.params,
        output_text: String::new(),
        finish_reason: FinishReason::Error,
        attempt_count: error.attempts(),
    }
}

fn backoff_delay(attempt: u32) -> Duration {
    Duration::from_millis(BACKOFF_BASE_MS << (attempt - 1).min(6))
}
