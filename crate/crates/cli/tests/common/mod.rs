//! Shared fixtures: scripted problems whose traces segment into a known
//! number of subthoughts, plus config/script/dataset builders.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::{Map, Value, json};

use subthoughts::engine::BackendConfig;
use subthoughts::model::RunConfig;

/// Markers used round-robin to open consecutive chunks; everything else in
/// the generated traces is lowercase, so chunk counts are exact.
pub const MARKER_ROTATION: [&str; 6] = ["Okay", "Wait", "Now", "Alternatively", "Therefore", "Thus"];

pub fn trace_with_chunks(n: usize) -> String {
    (0..n)
        .map(|k| {
            format!(
                "{} step {} of the reasoning. ",
                MARKER_ROTATION[k % MARKER_ROTATION.len()],
                k + 1
            )
        })
        .collect()
}

/// A problem with fully scripted model behavior.
#[derive(Debug, Clone)]
pub struct GoldenProblem {
    pub id: String,
    pub statement: String,
    pub truth: i64,
    pub a_last: i64,
    pub prefix_answers: Vec<i64>,
}

impl GoldenProblem {
    pub fn new(id: &str, truth: i64, a_last: i64, prefix_answers: &[i64]) -> Self {
        GoldenProblem {
            id: id.to_string(),
            statement: format!("statement of problem {id}"),
            truth,
            a_last,
            prefix_answers: prefix_answers.to_vec(),
        }
    }

    pub fn n(&self) -> usize {
        self.prefix_answers.len()
    }

    pub fn trace(&self) -> String {
        trace_with_chunks(self.n())
    }

    pub fn full_response(&self) -> String {
        format!(
            "<thought>{}</thought>\nThe final answer is \\boxed{{{}}}.",
            self.trace(),
            self.a_last
        )
    }

    pub fn completion_text(&self, i: usize) -> String {
        format!(
            "finishing from subthought {i}.</thought>\nFinal answer: \\boxed{{{}}}.",
            self.prefix_answers[i - 1]
        )
    }

    pub fn dataset_line(&self) -> String {
        json!({
            "id": self.id,
            "statement": self.statement,
            "answer": self.truth.to_string(),
        })
        .to_string()
    }

    /// Script the initial greedy trace plus one completion per prefix under
    /// `preset`.
    pub fn add_to_script(&self, entries: &mut Map<String, Value>, preset: &str) {
        entries.insert(
            format!("{}/0/greedy", self.id),
            json!({"text": self.full_response()}),
        );
        for i in 1..=self.n() {
            entries.insert(
                format!("{}/{}/{}", self.id, i, preset),
                json!({"text": self.completion_text(i)}),
            );
        }
    }
}

pub fn script_for(problems: &[GoldenProblem], preset: &str) -> Map<String, Value> {
    let mut entries = Map::new();
    for problem in problems {
        problem.add_to_script(&mut entries, preset);
    }
    entries
}

pub fn write_script(path: &Path, entries: &Map<String, Value>) -> PathBuf {
    std::fs::write(path, Value::Object(entries.clone()).to_string()).unwrap();
    path.to_path_buf()
}

pub fn write_dataset(path: &Path, problems: &[GoldenProblem]) -> PathBuf {
    let mut lines: Vec<String> = problems.iter().map(GoldenProblem::dataset_line).collect();
    lines.push(String::new());
    std::fs::write(path, lines.join("\n")).unwrap();
    path.to_path_buf()
}

pub fn mock_backend(script_path: &Path) -> BackendConfig {
    BackendConfig {
        base_url: format!("mock://{}", script_path.display()),
        model_name: "mock-model".into(),
        api_key_env: String::new(),
        timeout_seconds: 30,
        max_retries: 0,
    }
}

pub fn http_backend(base_url: &str) -> BackendConfig {
    BackendConfig {
        base_url: base_url.to_string(),
        model_name: "mock-model".into(),
        api_key_env: String::new(),
        timeout_seconds: 30,
        max_retries: 0,
    }
}

/// A mock-backed run config rooted in `dir`, with the dataset and script
/// written next to the run directory.
pub fn golden_config(dir: &Path, problems: &[GoldenProblem], preset: &str) -> RunConfig {
    let script = write_script(&dir.join("script.json"), &script_for(problems, preset));
    let dataset = write_dataset(&dir.join("dataset.jsonl"), problems);
    RunConfig::new(dataset, mock_backend(&script), dir.join("run"))
}

pub fn mode_corrects_last_problem() -> GoldenProblem {
    GoldenProblem::new("mcl1", 96, 50, &[96, 50, 96, 96, 50])
}
