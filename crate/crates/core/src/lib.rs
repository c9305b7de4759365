//! Subthought-level evaluation of LLM reasoning traces.
//!
//! Given a problem, the pipeline built on this crate generates a greedy
//! reasoning trace, splits it into subthoughts at linguistic transition
//! markers ("Wait", "Alternatively", ...), re-prompts the model to continue
//! from every cumulative prefix, extracts the integer answer of each
//! continuation, and aggregates the resulting answer distribution: the most
//! frequent answer is usually a better final answer than the one the original
//! trace ended with, and the distribution's Shannon entropy tracks how
//! trustworthy that original answer was.
//!
//! Modules follow the pipeline stages:
//! - [`model`]: shared domain types and answer canonicalization.
//! - [`segment`]: marker matching and cumulative prefixes.
//! - [`engine`]: prompt assembly and completion backends (HTTP or scripted
//!   mock).
//! - [`extract`]: trace and boxed-answer extraction with an optional
//!   model-backed fallback.
//! - [`analytics`]: mode, entropy, and accuracy aggregation.

pub mod analytics;
pub mod engine;
pub mod extract;
pub mod model;
pub mod segment;
