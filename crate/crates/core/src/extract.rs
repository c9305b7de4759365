//! Extracting the reasoning trace and the final numeric answer from responses.
//!
//! Extraction is two-tiered: a deterministic scan for the last well-formed
//! `\boxed{...}` value, then an optional model-backed fallback for responses
//! that lack one. The deterministic tier always runs first so golden tests
//! stay reproducible; the fallback only adds recall. Neither tier can fail:
//! every input maps to exactly one [`ExtractionOutcome`].

use serde::{Deserialize, Serialize};

use crate::engine::prompt::build_extraction_prompt;
use crate::engine::{Backend, FinishReason, GenerationRequest, RequestSlot};
use crate::model::{AnswerValue, ReasoningTrace, SamplingParams, canonicalize_answer};

pub const BOXED_MACRO: &str = "\\boxed{";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMethod {
    BoxedRegex,
    FallbackModel,
    None,
}

/// The result of answer extraction for one response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionOutcome {
    pub answer: AnswerValue,
    pub method: ExtractionMethod,
    /// Byte offsets of the boxed argument in the source text, when one was
    /// found.
    pub span: Option<(usize, usize)>,
}

impl ExtractionOutcome {
    fn unresolved(span: Option<(usize, usize)>) -> Self {
        ExtractionOutcome {
            answer: AnswerValue::Unresolved,
            method: ExtractionMethod::None,
            span,
        }
    }
}

/// Pull the reasoning trace out of a full model response.
///
/// Takes the content of the last well-formed delimiter pair. An open
/// delimiter with no close (a truncated generation) yields everything after
/// the last open; a response without delimiters is its own trace.
pub fn extract_trace(full_response: &str, delimiters: (&str, &str)) -> ReasoningTrace {
    let (open, close) = delimiters;
    let text = if open.is_empty() {
        full_response
    } else {
        match full_response.rfind(open) {
            None => full_response,
            Some(open_at) => {
                let content_start = open_at + open.len();
                let rest = &full_response[content_start..];
                match rest.find(close) {
                    Some(close_at) if !close.is_empty() => &rest[..close_at],
                    _ => rest,
                }
            }
        }
    };
    ReasoningTrace::new(text.to_string(), full_response.to_string())
        .expect("extracted text is a substring of the response")
}

/// Byte span of the argument of the last well-formed `\boxed{...}` in `text`.
///
/// "Well-formed" means its braces balance; nested braces are part of the
/// argument. A truncated final box is skipped in favor of an earlier complete
/// one.
pub fn find_last_boxed(text: &str) -> Option<(usize, usize)> {
    let mut best = None;
    let mut from = 0;
    while let Some(found) = text[from..].find(BOXED_MACRO) {
        let arg_start = from + found + BOXED_MACRO.len();
        if let Some(arg_end) = balanced_end(text, arg_start) {
            best = Some((arg_start, arg_end));
        }
        from = arg_start;
    }
    best
}

fn balanced_end(text: &str, arg_start: usize) -> Option<usize> {
    let mut depth = 1u32;
    for (offset, c) in text[arg_start..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(arg_start + offset);
                }
            }
            _ => {}
        }
    }
    None
}

/// Deterministic extraction tier: canonicalize the last boxed argument.
pub fn extract_boxed(text: &str) -> ExtractionOutcome {
    match find_last_boxed(text) {
        None => ExtractionOutcome::unresolved(None),
        Some((start, end)) => match canonicalize_answer(&text[start..end]) {
            AnswerValue::Unresolved => ExtractionOutcome::unresolved(Some((start, end))),
            answer => ExtractionOutcome {
                answer,
                method: ExtractionMethod::BoxedRegex,
                span: Some((start, end)),
            },
        },
    }
}

/// Context for the model-backed extraction fallback.
pub struct FallbackExtractor<'a> {
    pub backend: &'a Backend,
    pub problem_id: &'a str,
    pub subthought_index: u32,
}

impl FallbackExtractor<'_> {
    /// Ask the fallback model for the final answer. The reply is read as a
    /// boxed value first (the prompt requests that form), then as a bare
    /// number. Any transport or protocol failure degrades to `None`.
    async fn query(&self, response_text: &str) -> Option<AnswerValue> {
        let request = GenerationRequest {
            problem_id: self.problem_id.to_string(),
            subthought_index: self.subthought_index,
            bundle: build_extraction_prompt(response_text),
            params: SamplingParams::GREEDY,
            slot: RequestSlot::Extraction,
        };
        let record = self.backend.generate(&request).await.ok()?;
        if record.finish_reason == FinishReason::Error {
            return None;
        }
        let reply = record.output_text;
        let boxed = extract_boxed(&reply);
        if let AnswerValue::Integer(_) = boxed.answer {
            return Some(boxed.answer);
        }
        match canonicalize_answer(&reply) {
            AnswerValue::Integer(v) => Some(AnswerValue::Integer(v)),
            AnswerValue::Unresolved => None,
        }
    }
}

/// Full extraction: boxed tier first, fallback model second.
///
/// The fallback is consulted only when no well-formed boxed integer exists
/// and never aborts extraction; its failures yield `Unresolved`.
pub async fn extract_answer(
    response_text: &str,
    fallback: Option<&FallbackExtractor<'_>>,
) -> ExtractionOutcome {
    let boxed = extract_boxed(response_text);
    if boxed.method == ExtractionMethod::BoxedRegex {
        return boxed;
    }
    let Some(extractor) = fallback else {
        return boxed;
    };
    match extractor.query(response_text).await {
        Some(answer) => ExtractionOutcome {
            answer,
            method: ExtractionMethod::FallbackModel,
            span: None,
        },
        None => ExtractionOutcome::unresolved(boxed.span),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::BackendConfig;
    use crate::engine::prompt::{THOUGHT_CLOSE, THOUGHT_OPEN};
    use std::io::Write;

    const DELIMS: (&str, &str) = (THOUGHT_OPEN, THOUGHT_CLOSE);

    #[test]
    fn trace_comes_from_the_last_block() {
        let trace =
            extract_trace("<thought>A</thought> junk <thought>B</thought>ans", DELIMS);
        assert_eq!(trace.text, "B");
        assert_eq!(trace.source_response, "<thought>A</thought> junk <thought>B</thought>ans");
    }

    #[test]
    fn truncated_block_falls_back_to_tail() {
        assert_eq!(extract_trace("<thought>partial reasoning", DELIMS).text, "partial reasoning");
        assert_eq!(
            extract_trace("<thought>A</thought><thought>cut off", DELIMS).text,
            "cut off"
        );
    }

    #[test]
    fn no_delimiters_means_the_whole_response() {
        assert_eq!(extract_trace("no delimiters at all", DELIMS).text, "no delimiters at all");
        assert_eq!(extract_trace("", DELIMS).text, "");
    }

    #[test]
    fn boxed_extraction_examples() {
        let outcome = extract_boxed("so \\boxed{96}.");
        assert_eq!(outcome.answer, AnswerValue::integer(96));
        assert_eq!(outcome.method, ExtractionMethod::BoxedRegex);
        let (start, end) = outcome.span.unwrap();
        assert_eq!(&"so \\boxed{96}."[start..end], "96");

        let last = extract_boxed("\\boxed{12} then \\boxed{50}");
        assert_eq!(last.answer, AnswerValue::integer(50));

        let none = extract_boxed("no box here");
        assert_eq!(none.answer, AnswerValue::Unresolved);
        assert_eq!(none.method, ExtractionMethod::None);
        assert_eq!(none.span, None);
    }

    #[test]
    fn nested_braces_are_kept_in_the_argument() {
        let text = "x \\boxed{1{2}3} y";
        let (start, end) = find_last_boxed(text).unwrap();
        assert_eq!(&text[start..end], "1{2}3");
        // non-integer argument: no boxed answer, but the span is reported
        let outcome = extract_boxed(text);
        assert_eq!(outcome.answer, AnswerValue::Unresolved);
        assert_eq!(outcome.method, ExtractionMethod::None);
        assert_eq!(outcome.span, Some((start, end)));
    }

    #[test]
    fn truncated_final_box_defers_to_earlier_one() {
        let text = "\\boxed{7} ... \\boxed{12";
        let (start, end) = find_last_boxed(text).unwrap();
        assert_eq!(&text[start..end], "7");
        assert_eq!(extract_boxed(text).answer, AnswerValue::integer(7));
        assert_eq!(find_last_boxed("\\boxed{12"), None);
    }

    fn fallback_fixture(script: &serde_json::Value) -> (Backend, tempfile::NamedTempFile) {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(script.to_string().as_bytes()).unwrap();
        let config = BackendConfig {
            base_url: format!("mock://{}", file.path().display()),
            model_name: "extractor".into(),
            api_key_env: String::new(),
            timeout_seconds: 5,
            max_retries: 0,
        };
        (Backend::from_config(&config).unwrap(), file)
    }

    #[tokio::test]
    async fn boxed_tier_wins_without_touching_the_fallback() {
        let (backend, _file) =
            fallback_fixture(&serde_json::json!({"p/3/extract": {"text": "999"}}));
        let extractor = FallbackExtractor { backend: &backend, problem_id: "p", subthought_index: 3 };
        let outcome = extract_answer("final \\boxed{204}", Some(&extractor)).await;
        assert_eq!(outcome.answer, AnswerValue::integer(204));
        assert_eq!(outcome.method, ExtractionMethod::BoxedRegex);
        assert_eq!(backend.requests_issued(), 0);
    }

    #[tokio::test]
    async fn fallback_recovers_unboxed_answers() {
        let (backend, _file) =
            fallback_fixture(&serde_json::json!({"p/3/extract": {"text": "96"}}));
        let extractor = FallbackExtractor { backend: &backend, problem_id: "p", subthought_index: 3 };
        let outcome = extract_answer("the answer is ninety-six", Some(&extractor)).await;
        assert_eq!(outcome.answer, AnswerValue::integer(96));
        assert_eq!(outcome.method, ExtractionMethod::FallbackModel);
        assert_eq!(backend.requests_issued(), 1);
    }

    #[tokio::test]
    async fn fallback_reply_may_be_boxed() {
        let (backend, _file) =
            fallback_fixture(&serde_json::json!({"p/0/extract": {"text": "\\boxed{42}"}}));
        let extractor = FallbackExtractor { backend: &backend, problem_id: "p", subthought_index: 0 };
        let outcome = extract_answer("no number here", Some(&extractor)).await;
        assert_eq!(outcome.answer, AnswerValue::integer(42));
        assert_eq!(outcome.method, ExtractionMethod::FallbackModel);
    }

    #[tokio::test]
    async fn without_fallback_unboxed_stays_unresolved() {
        let outcome = extract_answer("nothing numeric", None).await;
        assert_eq!(outcome.answer, AnswerValue::Unresolved);
        assert_eq!(outcome.method, ExtractionMethod::None);
    }

    #[tokio::test(start_paused = true)]
    async fn fallback_failures_degrade_to_unresolved() {
        let (backend, _file) =
            fallback_fixture(&serde_json::json!({"p/1/extract": {"fail": 10}}));
        let extractor = FallbackExtractor { backend: &backend, problem_id: "p", subthought_index: 1 };
        let outcome = extract_answer("still nothing", Some(&extractor)).await;
        assert_eq!(outcome.answer, AnswerValue::Unresolved);
        assert_eq!(outcome.method, ExtractionMethod::None);

        // a non-numeric reply degrades the same way
        let (backend, _file) =
            fallback_fixture(&serde_json::json!({"p/1/extract": {"text": "\\boxed{none}"}}));
        let extractor = FallbackExtractor { backend: &backend, problem_id: "p", subthought_index: 1 };
        let outcome = extract_answer("still nothing", Some(&extractor)).await;
        assert_eq!(outcome.answer, AnswerValue::Unresolved);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn extraction_is_total(text in ".{0,400}") {
                let boxed = extract_boxed(&text);
                match boxed.method {
                    ExtractionMethod::BoxedRegex => {
                        let (start, end) = boxed.span.unwrap();
                        prop_assert_eq!(canonicalize_answer(&text[start..end]), boxed.answer);
                    }
                    ExtractionMethod::None => prop_assert!(boxed.answer.is_unresolved()),
                    ExtractionMethod::FallbackModel => prop_assert!(false, "tier 1 never uses the fallback"),
                }
                let trace = extract_trace(&text, (THOUGHT_OPEN, THOUGHT_CLOSE));
                prop_assert!(trace.source_response.contains(&trace.text));
            }
        }
    }
}
