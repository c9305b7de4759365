//! Shared domain types: problems, answers, sampling presets, and run configuration.

use std::fmt;
use std::path::PathBuf;

use num_bigint::BigInt;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::engine::BackendConfig;
use crate::segment;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("ground truth answer must be a concrete integer")]
    UnresolvedGroundTruth,
    #[error("trace text is not a substring of its source response")]
    TraceNotInSource,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// One reasoning problem together with its ground-truth answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub id: String,
    pub statement: String,
    pub ground_truth: AnswerValue,
}

/// A canonicalized answer.
///
/// `Integer` holds an arbitrary-precision value so answers outside the usual
/// 0-999 contest range are never truncated. `Unresolved` marks a response from
/// which no integer could be extracted; it never compares equal to an
/// `Integer` and never counts as correct.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AnswerValue {
    Integer(BigInt),
    Unresolved,
}

impl AnswerValue {
    pub fn integer(value: i64) -> Self {
        AnswerValue::Integer(BigInt::from(value))
    }

    pub fn is_unresolved(&self) -> bool {
        matches!(self, AnswerValue::Unresolved)
    }
}

impl fmt::Display for AnswerValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnswerValue::Integer(v) => write!(f, "{v}"),
            AnswerValue::Unresolved => write!(f, "unresolved"),
        }
    }
}

// Persisted form: a decimal string for integers, null for unresolved. Strings
// keep arbitrary-precision values exact where JSON numbers would not.
impl Serialize for AnswerValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            AnswerValue::Integer(v) => serializer.serialize_str(&v.to_string()),
            AnswerValue::Unresolved => serializer.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for AnswerValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match Option::<String>::deserialize(deserializer)? {
            None => Ok(AnswerValue::Unresolved),
            Some(text) => text
                .parse::<BigInt>()
                .map(AnswerValue::Integer)
                .map_err(|_| D::Error::custom(format!("not a decimal integer: {text:?}"))),
        }
    }
}

/// Parse a raw answer string into canonical form.
///
/// Accepts optional surrounding whitespace and dollar signs, well-formed
/// thousands separators ("1,234,567"), an optional sign, and leading zeros.
/// Anything else maps to [`AnswerValue::Unresolved`]; this function never
/// fails.
pub fn canonicalize_answer(raw: &str) -> AnswerValue {
    let trimmed = raw.trim().trim_matches('$').trim();
    let digits = if trimmed.contains(',') {
        match strip_thousands_separators(trimmed) {
            Some(stripped) => stripped,
            None => return AnswerValue::Unresolved,
        }
    } else {
        trimmed.to_string()
    };
    match digits.parse::<BigInt>() {
        Ok(value) => AnswerValue::Integer(value),
        Err(_) => AnswerValue::Unresolved,
    }
}

/// Remove commas when they form well-formed 3-digit grouping; otherwise the
/// string is not a number written with thousands separators.
fn strip_thousands_separators(text: &str) -> Option<String> {
    let (sign, body) = match text.strip_prefix(['-', '+']) {
        Some(rest) => (&text[..1], rest),
        None => ("", text),
    };
    let groups: Vec<&str> = body.split(',').collect();
    if groups.len() < 2 {
        return None;
    }
    let first = groups[0];
    if first.is_empty() || first.len() > 3 || !first.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    for group in &groups[1..] {
        if group.len() != 3 || !group.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
    }
    Some(format!("{sign}{}", groups.concat()))
}

/// Whether `answer` matches the ground truth. `Unresolved` answers are never
/// correct; an `Unresolved` ground truth is a dataset error.
pub fn is_correct(answer: &AnswerValue, truth: &AnswerValue) -> Result<bool, ModelError> {
    match truth {
        AnswerValue::Unresolved => Err(ModelError::UnresolvedGroundTruth),
        AnswerValue::Integer(t) => {
            Ok(matches!(answer, AnswerValue::Integer(a) if a == t))
        }
    }
}

/// Sampling parameters for one completion request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
}

impl SamplingParams {
    /// Deterministic decoding; also used for every initial trace.
    pub const GREEDY: SamplingParams = SamplingParams {
        temperature: 0.0,
        top_p: 1.0,
        max_new_tokens: 8192,
    };

    /// Stochastic decoding used to explore alternative continuations.
    pub const DIVERSE: SamplingParams = SamplingParams {
        temperature: 1.0,
        top_p: 0.95,
        max_new_tokens: 8192,
    };

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ModelError::InvalidConfig(format!(
                "temperature must be non-negative, got {}",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ModelError::InvalidConfig(format!(
                "top_p must be in (0, 1], got {}",
                self.top_p
            )));
        }
        if self.max_new_tokens == 0 {
            return Err(ModelError::InvalidConfig(
                "max_new_tokens must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Short label used in logs and mock-script keys.
    pub fn preset_name(&self) -> String {
        if *self == Self::GREEDY {
            "greedy".into()
        } else if *self == Self::DIVERSE {
            "diverse".into()
        } else {
            format!("t{}-p{}", self.temperature, self.top_p)
        }
    }
}

/// The reasoning trace extracted from a full model response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    /// Content of the final thought block.
    pub text: String,
    /// The raw response the text was extracted from.
    pub source_response: String,
}

impl ReasoningTrace {
    pub fn new(text: String, source_response: String) -> Result<Self, ModelError> {
        if !source_response.contains(&text) {
            return Err(ModelError::TraceNotInSource);
        }
        Ok(ReasoningTrace {
            text,
            source_response,
        })
    }

    /// A trace that is its own source; convenient for tests and the
    /// standalone `segment` command.
    pub fn from_text(text: impl Into<String>) -> Self {
        let text = text.into();
        ReasoningTrace {
            source_response: text.clone(),
            text,
        }
    }
}

/// Everything a pipeline run needs.
///
/// The initial trace is always generated greedily; that is enforced here
/// rather than left to callers, so `trace_params` has no public setter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub dataset_path: PathBuf,
    pub backend: BackendConfig,
    pub completion_params: SamplingParams,
    trace_params: SamplingParams,
    pub marker_set: Vec<String>,
    pub max_subthoughts: Option<usize>,
    pub parallelism: usize,
    pub run_dir: PathBuf,
    pub fallback_extractor: Option<BackendConfig>,
}

impl RunConfig {
    pub fn new(dataset_path: PathBuf, backend: BackendConfig, run_dir: PathBuf) -> Self {
        RunConfig {
            dataset_path,
            backend,
            completion_params: SamplingParams::GREEDY,
            trace_params: SamplingParams::GREEDY,
            marker_set: segment::default_marker_set(),
            max_subthoughts: None,
            parallelism: 1,
            run_dir,
            fallback_extractor: None,
        }
    }

    pub fn trace_params(&self) -> SamplingParams {
        self.trace_params
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.marker_set.is_empty() {
            return Err(ModelError::InvalidConfig("marker_set must not be empty".into()));
        }
        if self.marker_set.iter().any(|m| m.is_empty()) {
            return Err(ModelError::InvalidConfig(
                "marker_set entries must not be empty".into(),
            ));
        }
        if self.parallelism == 0 {
            return Err(ModelError::InvalidConfig("parallelism must be at least 1".into()));
        }
        if self.max_subthoughts == Some(0) {
            return Err(ModelError::InvalidConfig(
                "max_subthoughts must be positive when set".into(),
            ));
        }
        self.completion_params.validate()?;
        self.backend.validate().map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
        if let Some(fb) = &self.fallback_extractor {
            fb.validate().map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawRunConfig {
    dataset_path: PathBuf,
    backend: BackendConfig,
    #[serde(default)]
    completion_params: Option<SamplingParams>,
    #[serde(default)]
    trace_params: Option<SamplingParams>,
    #[serde(default)]
    marker_set: Option<Vec<String>>,
    #[serde(default)]
    max_subthoughts: Option<usize>,
    #[serde(default)]
    parallelism: Option<usize>,
    run_dir: PathBuf,
    #[serde(default)]
    fallback_extractor: Option<BackendConfig>,
}

impl<'de> Deserialize<'de> for RunConfig {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawRunConfig::deserialize(deserializer)?;
        if let Some(trace_params) = raw.trace_params
            && trace_params != SamplingParams::GREEDY
        {
            return Err(D::Error::custom(
                "trace_params must be the greedy preset (temperature 0.0, top_p 1.0, 8192 tokens)",
            ));
        }
        let config = RunConfig {
            dataset_path: raw.dataset_path,
            backend: raw.backend,
            completion_params: raw.completion_params.unwrap_or(SamplingParams::GREEDY),
            trace_params: SamplingParams::GREEDY,
            marker_set: raw.marker_set.unwrap_or_else(segment::default_marker_set),
            max_subthoughts: raw.max_subthoughts,
            parallelism: raw.parallelism.unwrap_or(1),
            run_dir: raw.run_dir,
            fallback_extractor: raw.fallback_extractor,
        };
        config.validate().map_err(D::Error::custom)?;
        Ok(config)
    }
}
