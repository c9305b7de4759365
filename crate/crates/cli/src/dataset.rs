//! Dataset loading: UTF-8 line-delimited JSON, one problem per line.

use std::collections::HashSet;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use subthoughts::model::{AnswerValue, ProblemInstance, canonicalize_answer};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("dataset line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dataset line {line}: invalid id {id:?} ({reason})")]
    InvalidId {
        line: usize,
        id: String,
        reason: &'static str,
    },
    #[error("dataset line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("dataset line {line}: ground truth {raw:?} for {id:?} is not an integer")]
    GroundTruth { line: usize, id: String, raw: String },
    #[error("dataset {path} contains no problems")]
    Empty { path: String },
}

#[derive(Deserialize)]
struct RawProblem {
    id: String,
    statement: String,
    answer: RawAnswer,
}

/// Accept the documented string form and, leniently, a bare JSON number.
#[derive(Deserialize)]
#[serde(untagged)]
enum RawAnswer {
    Text(String),
    Number(serde_json::Number),
}

impl RawAnswer {
    fn into_text(self) -> String {
        match self {
            RawAnswer::Text(text) => text,
            RawAnswer::Number(number) => number.to_string(),
        }
    }
}

/// Load and validate a dataset file. Problems come back in file order.
pub fn load_dataset(path: &Path) -> Result<Vec<ProblemInstance>, DatasetError> {
    let contents = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut problems = Vec::new();
    let mut seen_ids = HashSet::new();
    for (index, raw_line) in contents.lines().enumerate() {
        let line = index + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let raw: RawProblem =
            serde_json::from_str(raw_line).map_err(|e| DatasetError::Parse {
                line,
                message: e.to_string(),
            })?;
        if raw.id.is_empty() {
            return Err(DatasetError::InvalidId { line, id: raw.id, reason: "empty" });
        }
        // ids become directory names under the run directory
        if raw.id.contains(['/', '\\']) || raw.id == "." || raw.id == ".." {
            return Err(DatasetError::InvalidId {
                line,
                id: raw.id,
                reason: "must be usable as a directory name",
            });
        }
        if raw.statement.is_empty() {
            return Err(DatasetError::Parse {
                line,
                message: "statement must not be empty".into(),
            });
        }
        if !seen_ids.insert(raw.id.clone()) {
            return Err(DatasetError::DuplicateId { line, id: raw.id });
        }
        let answer_text = raw.answer.into_text();
        let ground_truth = match canonicalize_answer(&answer_text) {
            value @ AnswerValue::Integer(_) => value,
            AnswerValue::Unresolved => {
                return Err(DatasetError::GroundTruth {
                    line,
                    id: raw.id,
                    raw: answer_text,
                });
            }
        };
        problems.push(ProblemInstance {
            id: raw.id,
            statement: raw.statement,
            ground_truth,
        });
    }
    if problems.is_empty() {
        return Err(DatasetError::Empty { path: path.display().to_string() });
    }
    Ok(problems)
}
