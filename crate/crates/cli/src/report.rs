//! Render metrics from a run directory as a table, CSV, or JSON.

use std::path::{Path, PathBuf};

use thiserror::Error;

use subthoughts::analytics::{AnswerSequence, EvolutionRow, answer_evolution};

use crate::run::{RunSummary, StoredResult, csv_field};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no run artifacts found in {0}")]
    MissingRun(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

/// Problems that have no valid result yet; reported alongside a best-effort
/// summary when `summary.json` is missing.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialRunWarning {
    pub unfinished: Vec<String>,
}

pub struct ReportOutput {
    pub rendered: String,
    pub warning: Option<PartialRunWarning>,
}

pub fn report(run_dir: &Path, format: ReportFormat) -> Result<ReportOutput, ReportError> {
    let (summary, warning) = load_summary(run_dir)?;
    let evolutions = load_evolutions(run_dir, &summary);
    let rendered = match format {
        ReportFormat::Table => render_table(&summary),
        ReportFormat::Csv => render_csv(&summary, &evolutions),
        ReportFormat::Json => render_json(&summary, &evolutions),
    };
    Ok(ReportOutput { rendered, warning })
}

fn load_summary(run_dir: &Path) -> Result<(RunSummary, Option<PartialRunWarning>), ReportError> {
    let summary_path = run_dir.join("summary.json");
    if summary_path.exists() {
        let text = std::fs::read_to_string(&summary_path).map_err(|source| ReportError::Io {
            path: summary_path.clone(),
            source,
        })?;
        let summary = serde_json::from_str(&text).map_err(|e| ReportError::Parse {
            path: summary_path,
            message: e.to_string(),
        })?;
        return Ok((summary, None));
    }

    // No finalized summary: rebuild one from whatever problems completed and
    // warn about the rest.
    let problems_dir = run_dir.join("problems");
    let mut completed: Vec<StoredResult> = Vec::new();
    let mut unfinished: Vec<String> = Vec::new();
    if let Ok(entries) = std::fs::read_dir(&problems_dir) {
        for entry in entries.flatten() {
            let id = entry.file_name().to_string_lossy().to_string();
            let result_path = entry.path().join("result.json");
            let loaded = std::fs::read_to_string(&result_path)
                .ok()
                .and_then(|text| serde_json::from_str::<StoredResult>(&text).ok());
            match loaded {
                Some(stored) => completed.push(stored),
                None => unfinished.push(id),
            }
        }
    }
    if completed.is_empty() {
        return Err(ReportError::MissingRun(run_dir.to_path_buf()));
    }
    completed.sort_by(|a, b| a.result.problem_id.cmp(&b.result.problem_id));
    unfinished.sort();
    let summary = RunSummary::from_results(&completed).map_err(|e| ReportError::Parse {
        path: problems_dir,
        message: e.to_string(),
    })?;
    Ok((summary, Some(PartialRunWarning { unfinished })))
}

fn load_evolutions(run_dir: &Path, summary: &RunSummary) -> Vec<(String, Vec<EvolutionRow>)> {
    summary
        .problems
        .iter()
        .filter_map(|stored| {
            let id = &stored.result.problem_id;
            let path = run_dir.join("problems").join(id).join("answers.json");
            let sequence: AnswerSequence =
                serde_json::from_str(&std::fs::read_to_string(path).ok()?).ok()?;
            Some((id.clone(), answer_evolution(&sequence, &stored.ground_truth)))
        })
        .collect()
}

fn gain_pp(summary: &RunSummary) -> String {
    format!("{:+.1}", summary.gain * 100.0)
}

fn render_table(summary: &RunSummary) -> String {
    let split = &summary.entropy_split;
    let mean = |value: Option<f64>, count: usize| match value {
        Some(mean) => format!("{mean:.3} bits over {count} problem(s)"),
        None => "n/a (empty partition)".to_string(),
    };
    let last_count = summary.problems.iter().filter(|p| p.result.last_correct).count();
    let mode_count = summary.problems.iter().filter(|p| p.result.mode_correct).count();
    format!(
        "problems                 : {}\n\
         acc_last                 : {:.2}% ({}/{})\n\
         acc_most_freq            : {:.2}% ({}/{})\n\
         gain                     : {} percentage points\n\
         entropy mean (correct)   : {}\n\
         entropy mean (incorrect) : {}\n\
         unresolved answers       : {}\n",
        summary.problem_count,
        summary.acc_last * 100.0,
        last_count,
        summary.problem_count,
        summary.acc_most_freq * 100.0,
        mode_count,
        summary.problem_count,
        gain_pp(summary),
        mean(split.mean_correct, split.correct_count),
        mean(split.mean_incorrect, split.incorrect_count),
        summary.total_unresolved,
    )
}

fn render_csv(summary: &RunSummary, evolutions: &[(String, Vec<EvolutionRow>)]) -> String {
    let split = &summary.entropy_split;
    let optional = |value: Option<f64>| value.map_or("n/a".to_string(), |v| v.to_string());
    let mut out = String::new();
    out.push_str(&format!("# problems={}\n", summary.problem_count));
    out.push_str(&format!("# acc_last={}\n", summary.acc_last));
    out.push_str(&format!("# acc_most_freq={}\n", summary.acc_most_freq));
    out.push_str(&format!("# gain={}\n", summary.gain));
    out.push_str(&format!("# gain_pp={}\n", gain_pp(summary)));
    out.push_str(&format!("# entropy_mean_correct={}\n", optional(split.mean_correct)));
    out.push_str(&format!("# entropy_mean_incorrect={}\n", optional(split.mean_incorrect)));
    out.push_str("problem_id,index,answer,matches_truth,matches_mode,matches_last\n");
    for (id, rows) in evolutions {
        for row in rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                csv_field(id),
                row.index,
                row.answer,
                row.matches_truth,
                row.matches_mode,
                row.matches_last,
            ));
        }
    }
    out
}

fn render_json(summary: &RunSummary, evolutions: &[(String, Vec<EvolutionRow>)]) -> String {
    let mut value = serde_json::to_value(summary).expect("summary serializes");
    if let Some(problems) = value.get_mut("problems").and_then(|p| p.as_array_mut()) {
        for problem in problems {
            let id = problem
                .get("problem_id")
                .and_then(|v| v.as_str())
                .unwrap_or_default()
                .to_string();
            let rows = evolutions
                .iter()
                .find(|(eid, _)| *eid == id)
                .map(|(_, rows)| serde_json::to_value(rows).expect("rows serialize"))
                .unwrap_or(serde_json::Value::Array(Vec::new()));
            problem
                .as_object_mut()
                .expect("problem rows are objects")
                .insert("evolution".to_string(), rows);
        }
    }
    let mut rendered = serde_json::to_string_pretty(&value).expect("report serializes");
    rendered.push('\n');
    rendered
}
