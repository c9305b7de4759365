//! Run orchestration: execute the pipeline over a dataset, persisting every
//! intermediate artifact so an interrupted run can resume without re-paying
//! for inference.
//!
//! Run directory layout:
//!
//! ```text
//! run_dir/
//!   config.json                       effective configuration snapshot
//!   problems/{id}/full_response.txt   raw initial greedy response
//!   problems/{id}/trace.txt           extracted reasoning trace
//!   problems/{id}/segmentation.json   subthought chunks and markers
//!   problems/{id}/completions/{i}.json  one record per prefix completion
//!   problems/{id}/answers.json        extracted answer sequence
//!   problems/{id}/result.json         per-problem aggregates
//!   summary.json, summary.csv         written once every problem completed
//! ```
//!
//! A problem whose `result.json` exists and is consistent with the dataset is
//! skipped entirely on rerun; cached responses and completion records are
//! reused for partially finished problems.

use std::path::{Path, PathBuf};

use futures::StreamExt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use subthoughts::analytics::{
    AnalyticsError, AnswerSequence, EntropySplit, ProblemResult, accuracy_last,
    accuracy_most_freq, entropy_split,
};
use subthoughts::engine::prompt::{
    DEFAULT_USER_TEMPLATE, THOUGHT_CLOSE, THOUGHT_OPEN, build_initial_prompt,
    build_partial_prompt,
};
use subthoughts::engine::{
    Backend, CompletionRecord, EngineError, FinishReason, GenerationRequest, error_record,
};
use subthoughts::extract::{FallbackExtractor, extract_answer, extract_trace};
use subthoughts::model::{ModelError, ProblemInstance, RunConfig};
use subthoughts::segment::{
    MarkerPattern, SegmentError, SubthoughtSegmentation, compile_markers, cumulative_prefix,
    segment,
};

use crate::dataset::{DatasetError, load_dataset};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Config(#[from] ModelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot serialize {what}: {source}")]
    Serialize {
        what: &'static str,
        source: serde_json::Error,
    },
}

/// A per-problem result plus the ground truth it was scored against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredResult {
    pub ground_truth: subthoughts::model::AnswerValue,
    #[serde(flatten)]
    pub result: ProblemResult,
}

/// Dataset-level metrics, persisted as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub problem_count: usize,
    pub acc_last: f64,
    pub acc_most_freq: f64,
    /// acc_most_freq - acc_last, as a fraction.
    pub gain: f64,
    pub entropy_split: EntropySplit,
    pub total_unresolved: usize,
    pub problems: Vec<StoredResult>,
}

impl RunSummary {
    pub fn from_results(stored: &[StoredResult]) -> Result<Self, AnalyticsError> {
        let results: Vec<ProblemResult> = stored.iter().map(|s| s.result.clone()).collect();
        let acc_last = accuracy_last(&results)?;
        let acc_most_freq = accuracy_most_freq(&results)?;
        Ok(RunSummary {
            problem_count: stored.len(),
            acc_last,
            acc_most_freq,
            gain: acc_most_freq - acc_last,
            entropy_split: entropy_split(&results),
            total_unresolved: results.iter().map(|r| r.unresolved_count).sum(),
            problems: stored.to_vec(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct FailedProblem {
    pub id: String,
    pub reason: String,
}

/// What a run produced. `summary` is present only when every problem
/// completed; failed problems stay unfinished on disk and are retried by the
/// next invocation.
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub completed: Vec<StoredResult>,
    pub failed: Vec<FailedProblem>,
    pub summary: Option<RunSummary>,
    /// Requests issued to the completion backend during this invocation,
    /// counting retries. Zero on a fully resumed run.
    pub backend_requests: u64,
    pub fallback_requests: u64,
}

enum ProblemOutcome {
    Done(Box<StoredResult>),
    Failed(String),
}

struct RunContext<'a> {
    config: &'a RunConfig,
    pattern: MarkerPattern,
    backend: Backend,
    fallback: Option<Backend>,
}

/// Execute the pipeline for every problem in the configured dataset.
pub async fn run_pipeline(config: &RunConfig) -> Result<RunOutcome, RunError> {
    config.validate()?;
    let problems = load_dataset(&config.dataset_path)?;
    std::fs::create_dir_all(&config.run_dir).map_err(|source| RunError::Io {
        path: config.run_dir.clone(),
        source,
    })?;
    write_json_atomic(&config.run_dir.join("config.json"), config, "run config")?;

    let ctx = RunContext {
        config,
        pattern: compile_markers(&config.marker_set)?,
        backend: Backend::from_config(&config.backend)?,
        fallback: config
            .fallback_extractor
            .as_ref()
            .map(Backend::from_config)
            .transpose()?,
    };

    let mut completed = Vec::new();
    let mut failed = Vec::new();
    for (index, problem) in problems.iter().enumerate() {
        let dir = problem_dir(&config.run_dir, &problem.id);
        match process_problem(&ctx, problem, &dir).await? {
            ProblemOutcome::Done(stored) => {
                eprintln!(
                    "[{}/{}] {}: n={} mode={} last={} entropy={:.3}",
                    index + 1,
                    problems.len(),
                    problem.id,
                    stored.result.n,
                    stored.result.a_mode,
                    stored.result.a_last,
                    stored.result.entropy_bits,
                );
                completed.push(*stored);
            }
            ProblemOutcome::Failed(reason) => {
                eprintln!("[{}/{}] {}: FAILED: {reason}", index + 1, problems.len(), problem.id);
                write_atomic(&dir.join("error.txt"), reason.as_bytes())?;
                failed.push(FailedProblem { id: problem.id.clone(), reason });
            }
        }
    }

    let summary = if failed.is_empty() && !completed.is_empty() {
        let summary = RunSummary::from_results(&completed)?;
        write_json_atomic(&config.run_dir.join("summary.json"), &summary, "summary")?;
        write_atomic(
            &config.run_dir.join("summary.csv"),
            render_summary_csv(&summary).as_bytes(),
        )?;
        Some(summary)
    } else {
        None
    };

    Ok(RunOutcome {
        run_dir: config.run_dir.clone(),
        completed,
        failed,
        summary,
        backend_requests: ctx.backend.requests_issued(),
        fallback_requests: ctx.fallback.as_ref().map_or(0, Backend::requests_issued),
    })
}

pub fn problem_dir(run_dir: &Path, id: &str) -> PathBuf {
    run_dir.join("problems").join(id)
}

async fn process_problem(
    ctx: &RunContext<'_>,
    problem: &ProblemInstance,
    dir: &Path,
) -> Result<ProblemOutcome, RunError> {
    if let Some(stored) = load_valid_result(&dir.join("result.json"), problem) {
        return Ok(ProblemOutcome::Done(Box::new(stored)));
    }
    let completions_dir = dir.join("completions");
    std::fs::create_dir_all(&completions_dir).map_err(|source| RunError::Io {
        path: completions_dir.clone(),
        source,
    })?;

    // 1. initial greedy response, reused from disk when present
    let full_response_path = dir.join("full_response.txt");
    let full_text = match read_cached_text(&full_response_path) {
        Some(text) => text,
        None => {
            let bundle = build_initial_prompt(problem, DEFAULT_USER_TEMPLATE)?;
            let request = GenerationRequest::completion(
                &problem.id,
                0,
                bundle,
                ctx.config.trace_params(),
            );
            match ctx.backend.generate(&request).await {
                Ok(record) => {
                    write_atomic(&full_response_path, record.output_text.as_bytes())?;
                    record.output_text
                }
                Err(error) => {
                    return Ok(ProblemOutcome::Failed(format!(
                        "initial trace generation failed: {error}"
                    )));
                }
            }
        }
    };

    // 2. trace and baseline answer from the full response
    let trace = extract_trace(&full_text, (THOUGHT_OPEN, THOUGHT_CLOSE));
    write_atomic(&dir.join("trace.txt"), trace.text.as_bytes())?;
    let a_last = extract_answer(&full_text, fallback_for(ctx, &problem.id, 0).as_ref())
        .await
        .answer;

    // 3. segmentation
    let seg = match segment(&trace, &ctx.pattern) {
        Ok(seg) => match ctx.config.max_subthoughts {
            Some(cap) => seg.merge_tail(cap),
            None => seg,
        },
        Err(error) => {
            return Ok(ProblemOutcome::Failed(format!("segmentation failed: {error}")));
        }
    };
    write_json_atomic(&dir.join("segmentation.json"), &seg, "segmentation")?;

    // 4. one completion per cumulative prefix
    let records = expand_problem(ctx, problem, &seg, &completions_dir).await?;

    // 5. answer extraction, error completions staying in place as unresolved
    let mut answers = Vec::with_capacity(records.len());
    for record in &records {
        let answer = if record.finish_reason == FinishReason::Error {
            subthoughts::model::AnswerValue::Unresolved
        } else {
            let variation = match &record.prompt.prefill_text {
                Some(prefill) => format!("{prefill}{}", record.output_text),
                None => record.output_text.clone(),
            };
            extract_answer(
                &variation,
                fallback_for(ctx, &problem.id, record.subthought_index).as_ref(),
            )
            .await
            .answer
        };
        answers.push(answer);
    }
    let sequence = AnswerSequence {
        problem_id: problem.id.clone(),
        answers,
        a_last,
    };
    write_json_atomic(&dir.join("answers.json"), &sequence, "answer sequence")?;

    // 6. aggregates
    let result = ProblemResult::compute(&sequence, &problem.ground_truth)?;
    let stored = StoredResult {
        ground_truth: problem.ground_truth.clone(),
        result,
    };
    write_json_atomic(&dir.join("result.json"), &stored, "problem result")?;
    let _ = std::fs::remove_file(dir.join("error.txt"));
    Ok(ProblemOutcome::Done(Box::new(stored)))
}

/// Generate (or reload) the completion for every prefix, at most
/// `parallelism` requests in flight, persisting each record as it finishes.
async fn expand_problem(
    ctx: &RunContext<'_>,
    problem: &ProblemInstance,
    seg: &SubthoughtSegmentation,
    completions_dir: &Path,
) -> Result<Vec<CompletionRecord>, RunError> {
    let jobs = (1..=seg.n()).map(|i| {
        let path = completions_dir.join(format!("{i}.json"));
        async move {
            let partial = cumulative_prefix(seg, i).expect("index in range");
            let bundle = build_partial_prompt(problem, &partial, DEFAULT_USER_TEMPLATE)?;
            // a cached record is only valid for the same prompt, so a changed
            // marker set or template forces regeneration
            if let Some(record) =
                load_valid_record(&path, &bundle, &problem.id, i as u32, ctx.config.completion_params)
            {
                return Ok(record);
            }
            let request = GenerationRequest::completion(
                &problem.id,
                i as u32,
                bundle,
                ctx.config.completion_params,
            );
            let record = match ctx.backend.generate(&request).await {
                Ok(record) => record,
                Err(error) => error_record(&request, &error),
            };
            write_json_atomic(&path, &record, "completion record")?;
            Ok::<CompletionRecord, RunError>(record)
        }
    });
    let outcomes: Vec<Result<CompletionRecord, RunError>> = futures::stream::iter(jobs)
        .buffer_unordered(ctx.config.parallelism.max(1))
        .collect()
        .await;
    let mut records = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    records.sort_by_key(|record| record.subthought_index);
    Ok(records)
}

fn fallback_for<'a>(
    ctx: &'a RunContext<'_>,
    problem_id: &'a str,
    subthought_index: u32,
) -> Option<FallbackExtractor<'a>> {
    ctx.fallback.as_ref().map(|backend| FallbackExtractor {
        backend,
        problem_id,
        subthought_index,
    })
}

fn read_cached_text(path: &Path) -> Option<String> {
    std::fs::read_to_string(path).ok()
}

fn load_valid_result(path: &Path, problem: &ProblemInstance) -> Option<StoredResult> {
    let text = std::fs::read_to_string(path).ok()?;
    let stored: StoredResult = serde_json::from_str(&text).ok()?;
    (stored.result.problem_id == problem.id && stored.ground_truth == problem.ground_truth)
        .then_some(stored)
}

fn load_valid_record(
    path: &Path,
    bundle: &subthoughts::engine::PromptBundle,
    problem_id: &str,
    index: u32,
    params: subthoughts::model::SamplingParams,
) -> Option<CompletionRecord> {
    let text = std::fs::read_to_string(path).ok()?;
    let record: CompletionRecord = serde_json::from_str(&text).ok()?;
    (record.problem_id == problem_id
        && record.subthought_index == index
        && record.params == params
        && record.prompt == *bundle)
        .then_some(record)
}

/// Write via a temp file and rename so partially written artifacts never look
/// valid to a resumed run.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let io_error = |source| RunError::Io { path: path.to_path_buf(), source };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(io_error)?;
    std::fs::rename(&tmp, path).map_err(io_error)
}

pub fn write_json_atomic<T: Serialize>(
    path: &Path,
    value: &T,
    what: &'static str,
) -> Result<(), RunError> {
    let mut json =
        serde_json::to_string_pretty(value).map_err(|source| RunError::Serialize { what, source })?;
    json.push('\n');
    write_atomic(path, json.as_bytes())
}

pub fn csv_field(value: &str) -> String {
    if value.contains(['"', ',', '\n']) {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

pub fn render_summary_csv(summary: &RunSummary) -> String {
    let mut out = String::from(
        "problem_id,ground_truth,a_last,a_mode,last_correct,mode_correct,entropy_bits,n,unresolved_count\n",
    );
    for stored in &summary.problems {
        let r = &stored.result;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            csv_field(&r.problem_id),
            stored.ground_truth,
            r.a_last,
            r.a_mode,
            r.last_correct,
            r.mode_correct,
            r.entropy_bits,
            r.n,
            r.unresolved_count,
        ));
    }
    out
}
