use std::path::PathBuf;

use anyhow::{Context, bail};
use clap::{Parser, Subcommand, ValueEnum};

use subthoughts::model::{ReasoningTrace, RunConfig, SamplingParams};
use subthoughts::segment::{MarkerPattern, compile_markers, parse_marker_list, segment};
use subthoughts_cli::report::{ReportFormat, report};
use subthoughts_cli::run::run_pipeline;
use subthoughts_cli::{dataset, mockserve};

/// Evaluate LLM reasoning by re-prompting from every subthought prefix of a
/// trace and aggregating the answers by mode and entropy.
#[derive(Parser)]
#[command(name = "subthoughts", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParamsArg {
    Greedy,
    Diverse,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the evaluation pipeline described by a config file
    Run {
        /// Path to the run configuration (JSON)
        #[arg(long)]
        config: PathBuf,
        /// Override the completion sampling preset
        #[arg(long, value_enum)]
        params: Option<ParamsArg>,
        /// Override the request parallelism
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Render metrics from a run directory
    Report {
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: FormatArg,
    },
    /// Split a trace file into subthoughts and print them
    Segment {
        /// File holding the trace text
        #[arg(long, required_unless_present = "print_markers")]
        trace: Option<PathBuf>,
        /// Marker list override, one marker per line
        #[arg(long)]
        markers: Option<PathBuf>,
        /// Emit the segmentation as JSON instead of a listing
        #[arg(long)]
        json: bool,
        /// Print the embedded default marker list and exit
        #[arg(long)]
        print_markers: bool,
    },
    /// Serve a scripted OpenAI-compatible endpoint for integration tests
    MockServe {
        /// Mock script (JSON map of problem_id/index/preset keys)
        #[arg(long)]
        script: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Dataset used to resolve problem ids of initial-trace requests
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Marker list override, one marker per line
        #[arg(long)]
        markers: Option<PathBuf>,
    },
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run { config, params, parallelism } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("cannot read config {}", config.display()))?;
            let mut run_config: RunConfig = serde_json::from_str(&text)
                .with_context(|| format!("invalid config {}", config.display()))?;
            if let Some(preset) = params {
                run_config.completion_params = match preset {
                    ParamsArg::Greedy => SamplingParams::GREEDY,
                    ParamsArg::Diverse => SamplingParams::DIVERSE,
                };
            }
            if let Some(parallelism) = parallelism {
                run_config.parallelism = parallelism;
            }
            let outcome = run_pipeline(&run_config).await?;
            eprintln!(
                "backend requests: {} (+{} extraction fallback)",
                outcome.backend_requests, outcome.fallback_requests
            );
            if !outcome.failed.is_empty() {
                for failure in &outcome.failed {
                    eprintln!("unfinished problem {}: {}", failure.id, failure.reason);
                }
                bail!(
                    "{} of {} problem(s) did not finish; rerun to retry them",
                    outcome.failed.len(),
                    outcome.failed.len() + outcome.completed.len()
                );
            }
            let rendered = report(&outcome.run_dir, ReportFormat::Table)?;
            print!("{}", rendered.rendered);
            Ok(())
        }
        Command::Report { run_dir, format } => {
            let format = match format {
                FormatArg::Table => ReportFormat::Table,
                FormatArg::Csv => ReportFormat::Csv,
                FormatArg::Json => ReportFormat::Json,
            };
            let output = report(&run_dir, format)?;
            if let Some(warning) = &output.warning {
                eprintln!(
                    "warning: run is incomplete; unfinished problems: {}",
                    warning.unfinished.join(", ")
                );
            }
            print!("{}", output.rendered);
            Ok(())
        }
        Command::Segment { trace, markers, json, print_markers } => {
            let pattern = match markers {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("cannot read markers {}", path.display()))?;
                    compile_markers(&parse_marker_list(&text))?
                }
                None => MarkerPattern::default_set(),
            };
            if print_markers {
                for marker in pattern.markers() {
                    println!("{marker}");
                }
                return Ok(());
            }
            let path = trace.expect("clap enforces --trace without --print-markers");
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("cannot read trace {}", path.display()))?;
            let seg = segment(&ReasoningTrace::from_text(text), &pattern)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&seg)?);
            } else {
                println!("{} subthought(s)", seg.n());
                for (k, (chunk, marker)) in seg.chunks().iter().zip(seg.markers()).enumerate() {
                    let marker = marker.as_deref().unwrap_or("-");
                    println!("s{:<4} {:<22} {:?}", k + 1, marker, chunk);
                }
            }
            Ok(())
        }
        Command::MockServe { script, addr, dataset: dataset_path, markers } => {
            let script = subthoughts::engine::mock::MockScript::from_path(&script)?;
            let mut config = mockserve::MockEndpointConfig::new(script);
            if let Some(path) = dataset_path {
                config.dataset = dataset::load_dataset(&path)?;
            }
            if let Some(path) = markers {
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("cannot read markers {}", path.display()))?;
                config.markers = parse_marker_list(&text);
            }
            let handle = mockserve::spawn(config, &addr)
                .await
                .map_err(|e| anyhow::anyhow!(e))?;
            eprintln!("mock endpoint listening on {}", handle.base_url());
            // serve until interrupted
            futures::future::pending::<()>().await;
            unreachable!()
        }
    }
}
