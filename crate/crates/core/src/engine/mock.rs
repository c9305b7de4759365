//! Table-driven scripted backend for deterministic tests.
//!
//! A script is a JSON object mapping `{problem_id}/{index}/{preset}` keys to
//! entries. The preset slot is `greedy` or `diverse` for completions and
//! `extract` for fallback-extraction calls.
//!
//! Entry forms:
//! - `{"text": "..."}` — always succeed with this output.
//! - `{"fail": N, "text": "..."}` — fail the first N attempts, then succeed.
//! - `{"fail": N}` — fail every attempt (a permanently broken index).

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;

use crate::engine::{BackendResponse, CallError, EngineError, FinishReason, GenerationRequest};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub fail: Option<u32>,
}

/// What the script says should happen for one attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptOutcome {
    Text(String),
    Failure,
    Missing,
}

#[derive(Debug, Clone)]
pub struct MockScript {
    entries: HashMap<String, ScriptEntry>,
}

impl MockScript {
    pub fn from_json_str(json: &str) -> Result<Self, EngineError> {
        let entries: HashMap<String, ScriptEntry> = serde_json::from_str(json)
            .map_err(|e| EngineError::Config(format!("invalid mock script: {e}")))?;
        for (key, entry) in &entries {
            if entry.text.is_none() && entry.fail.is_none() {
                return Err(EngineError::Config(format!(
                    "mock script entry {key:?} needs a \"text\" or \"fail\" field"
                )));
            }
            if key.splitn(3, '/').count() != 3 {
                return Err(EngineError::Config(format!(
                    "mock script key {key:?} is not of the form problem_id/index/preset"
                )));
            }
        }
        Ok(MockScript { entries })
    }

    pub fn from_path(path: &Path) -> Result<Self, EngineError> {
        let json = std::fs::read_to_string(path).map_err(|e| {
            EngineError::Config(format!("cannot read mock script {}: {e}", path.display()))
        })?;
        Self::from_json_str(&json)
    }

    /// Distinct problem ids named by the script keys.
    pub fn problem_ids(&self) -> BTreeSet<String> {
        self.entries
            .keys()
            .filter_map(|key| key.split('/').next())
            .map(str::to_string)
            .collect()
    }

    /// The scripted text for `key`, if any.
    pub fn text_for(&self, key: &str) -> Option<&str> {
        self.entries.get(key).and_then(|entry| entry.text.as_deref())
    }

    /// Resolve one attempt against the script, updating per-key failure
    /// counters so "fail N times then succeed" scripts play out in order.
    pub fn resolve(&self, key: &str, counters: &mut HashMap<String, u32>) -> ScriptOutcome {
        let Some(entry) = self.entries.get(key) else {
            return ScriptOutcome::Missing;
        };
        if let Some(fail_count) = entry.fail {
            let served = counters.entry(key.to_string()).or_insert(0);
            if *served < fail_count {
                *served += 1;
                return ScriptOutcome::Failure;
            }
        }
        match &entry.text {
            Some(text) => ScriptOutcome::Text(text.clone()),
            None => ScriptOutcome::Failure,
        }
    }
}

pub(crate) struct MockTransport {
    script: MockScript,
    counters: Mutex<HashMap<String, u32>>,
}

impl MockTransport {
    pub fn from_script_path(path: &Path) -> Result<Self, EngineError> {
        Ok(MockTransport {
            script: MockScript::from_path(path)?,
            counters: Mutex::new(HashMap::new()),
        })
    }

    pub fn complete(&self, request: &GenerationRequest) -> Result<BackendResponse, CallError> {
        let key = request.script_key();
        let mut counters = self.counters.lock().expect("counter lock");
        match self.script.resolve(&key, &mut counters) {
            ScriptOutcome::Text(text) => Ok(BackendResponse {
                text,
                finish_reason: FinishReason::Stop,
            }),
            ScriptOutcome::Failure => {
                Err(CallError::Transient(format!("scripted failure for {key}")))
            }
            ScriptOutcome::Missing => {
                Err(CallError::Fatal(format!("no mock script entry for {key}")))
            }
        }
    }
}
