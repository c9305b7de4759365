//! Prompt templates and assembly.
//!
//! The initial prompt asks for reasoning inside thought delimiters followed by
//! a boxed integer answer. Partial prompts reuse the same bundle and add the
//! cumulative trace as assistant prefill text, so the model continues the
//! reasoning from exactly that state instead of starting over.

use crate::engine::{EngineError, PromptBundle};
use crate::model::ProblemInstance;
use crate::segment::PartialTrace;

pub const THOUGHT_OPEN: &str = "<thought>";
pub const THOUGHT_CLOSE: &str = "</thought>";

/// Placeholder the user template must contain.
pub const STATEMENT_PLACEHOLDER: &str = "{statement}";

pub const DEFAULT_SYSTEM_TEXT: &str =
    "You are a careful mathematical problem solver.";

pub const DEFAULT_USER_TEMPLATE: &str = "Solve the following problem. Work through your reasoning inside <thought> and </thought> delimiters, then state the final integer answer in the form \\boxed{answer}.\n\nProblem: {statement}";

/// Placeholder the extraction template must contain.
const RESPONSE_PLACEHOLDER: &str = "{response}";

pub const EXTRACTION_SYSTEM_TEXT: &str =
    "You extract final numerical answers from solutions.";

pub const EXTRACTION_USER_TEMPLATE: &str = "Below is a model's response to a math problem. Identify the final numerical answer it commits to and reply with only that number in the form \\boxed{answer}. If the response contains no numerical answer, reply \\boxed{none}.\n\nResponse:\n{response}";

/// Splice `value` into every placeholder occurrence without re-scanning the
/// inserted text, so braces or placeholder-like substrings in the value are
/// preserved verbatim.
fn splice(template: &str, placeholder: &str, value: &str) -> String {
    template.split(placeholder).collect::<Vec<_>>().join(value)
}

/// Build the initial prompt for `problem`.
pub fn build_initial_prompt(
    problem: &ProblemInstance,
    template: &str,
) -> Result<PromptBundle, EngineError> {
    if !template.contains(STATEMENT_PLACEHOLDER) {
        return Err(EngineError::MissingPlaceholder(STATEMENT_PLACEHOLDER));
    }
    Ok(PromptBundle {
        system_text: DEFAULT_SYSTEM_TEXT.to_string(),
        user_text: splice(template, STATEMENT_PLACEHOLDER, &problem.statement),
        prefill_text: None,
    })
}

/// Build the prompt that continues reasoning from the end of `partial`.
///
/// The prefill is the opening thought delimiter followed by the partial trace,
/// with nothing appended after it.
pub fn build_partial_prompt(
    problem: &ProblemInstance,
    partial: &PartialTrace,
    template: &str,
) -> Result<PromptBundle, EngineError> {
    if partial.text.is_empty() {
        return Err(EngineError::EmptyPartialTrace);
    }
    let mut bundle = build_initial_prompt(problem, template)?;
    bundle.prefill_text = Some(format!("{THOUGHT_OPEN}{}", partial.text));
    Ok(bundle)
}

/// Build the fixed prompt used by the model-backed extraction fallback.
pub fn build_extraction_prompt(response_text: &str) -> PromptBundle {
    PromptBundle {
        system_text: EXTRACTION_SYSTEM_TEXT.to_string(),
        user_text: splice(EXTRACTION_USER_TEMPLATE, RESPONSE_PLACEHOLDER, response_text),
        prefill_text: None,
    }
}
