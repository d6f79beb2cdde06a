//! `smart-suggest probe`: send one prompt repeatedly and report how often
//! the answers agree.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use smart_suggest_core::prompt::DEFAULT_TOKEN_BUDGET;
use smart_suggest_core::provider::{ChatCompletionsProvider, MockProvider, MockScript, ENV_API_KEY};
use smart_suggest_core::stability::{run_probe, write_transcript, ProbeError, ProbeOptions, StabilityReport};
use smart_suggest_core::{ChatProvider, FieldKind, InputValue, Inputs, ProviderConfig, SuggestionTask, TaskRegistry};

const EXIT_USAGE: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "smart-suggest", version, about = "Suggestion task tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Send the same prompt N times and measure response agreement.
    Probe(ProbeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProviderChoice {
    Mock,
    Live,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, clap::Args)]
struct ProbeArgs {
    /// Task id, e.g. related-predicates.
    #[arg(long)]
    task: String,
    /// Input as key=value; repeatable. List fields are split on commas.
    #[arg(long = "input", value_name = "KEY=VALUE")]
    inputs: Vec<String>,
    /// Number of identical calls.
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, value_enum, default_value_t = ProviderChoice::Mock)]
    provider: ProviderChoice,
    /// Overrides the task's temperature.
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    report: ReportFormat,
    /// Directory for the run transcript.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Maximum calls in flight.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// JSON mock script (mock provider only).
    #[arg(long)]
    mock_script: Option<PathBuf>,
    /// Extra task definitions (JSON array).
    #[arg(long, env = "SG_TASK_FILE")]
    task_file: Option<PathBuf>,
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: anyhow::Error) -> Failure {
    Failure { code: EXIT_USAGE, error }
}

fn config(error: anyhow::Error) -> Failure {
    Failure { code: EXIT_CONFIG, error }
}

fn parse_inputs(task: &SuggestionTask, raw: &[String]) -> anyhow::Result<Inputs> {
    let mut inputs = Inputs::new();
    for pair in raw {
        let Some((key, value)) = pair.split_once('=') else {
            bail!("--input expects key=value, got {pair:?}");
        };
        let key = key.trim();
        let is_list = task.field(key).is_some_and(|f| f.kind == FieldKind::StringList);
        if is_list {
            let items = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned);
            match inputs.entry(key.to_owned()).or_insert_with(|| InputValue::List(Vec::new())) {
                InputValue::List(list) => list.extend(items),
                InputValue::Text(_) => unreachable!("list fields only hold lists"),
            }
        } else if inputs.insert(key.to_owned(), InputValue::Text(value.to_owned())).is_some() {
            bail!("input {key:?} given more than once");
        }
    }
    Ok(inputs)
}

fn provider(args: &ProbeArgs) -> Result<(Box<dyn ChatProvider>, ProviderConfig), Failure> {
    let cfg = ProviderConfig::from_env().map_err(|e| config(e.into()))?;
    match args.provider {
        ProviderChoice::Live => {
            if args.mock_script.is_some() {
                return Err(usage(anyhow::anyhow!("--mock-script only applies to --provider mock")));
            }
            if std::env::var(&cfg.api_key_ref).map_or(true, |k| k.trim().is_empty()) {
                return Err(config(anyhow::anyhow!("{ENV_API_KEY} is not set; required for --provider live")));
            }
            Ok((Box::new(ChatCompletionsProvider::new()), cfg))
        }
        ProviderChoice::Mock => {
            let script = match &args.mock_script {
                None => MockScript::default(),
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))
                        .map_err(config)?;
                    serde_json::from_str(&text)
                        .with_context(|| format!("parsing {}", path.display()))
                        .map_err(config)?
                }
            };
            Ok((Box::new(MockProvider::from_script(script)), cfg))
        }
    }
}

fn render_text(report: &StabilityReport) -> String {
    let mut out = String::new();
    let overlap = report
        .per_item_overlap
        .map_or_else(|| "n/a".to_owned(), |v| format!("{v:.3}"));
    let rows = [
        ("task", report.task_id.clone()),
        ("runs", report.n.to_string()),
        ("parsed", format!("{}/{}", report.parse_success_count, report.n)),
        ("distinct responses", report.distinct_normalized_responses.to_string()),
        ("agreement", format!("{:.3}", report.agreement)),
        ("all failed", report.all_failed.to_string()),
        ("item overlap", overlap),
        ("latency p50 (ms)", report.latency_p50_ms.to_string()),
        ("latency p95 (ms)", report.latency_p95_ms.to_string()),
    ];
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<20} {v}");
    }
    out
}

async fn probe(args: ProbeArgs) -> Result<(), Failure> {
    let registry = TaskRegistry::load(args.task_file.as_deref()).map_err(|e| config(e.into()))?;
    let task = registry.get_task(&args.task).map_err(|e| usage(e.into()))?;
    let inputs = parse_inputs(task, &args.inputs).map_err(usage)?;
    let (provider, cfg) = provider(&args)?;
    let options = ProbeOptions {
        n: args.n,
        temperature_override: args.temperature,
        parallelism: args.parallel.max(1),
        token_budget: DEFAULT_TOKEN_BUDGET,
    };
    let outcome = match run_probe(task, &inputs, provider.as_ref(), &cfg, &options).await {
        Ok(o) => o,
        Err(e @ (ProbeError::TooFewRuns(_) | ProbeError::InvalidTemperature(_) | ProbeError::Prompt(_))) => {
            return Err(usage(e.into()))
        }
    };
    let path = write_transcript(&args.out, &task.task_id, &outcome.transcript)
        .with_context(|| format!("writing transcript to {}", args.out.display()))
        .map_err(|e| Failure { code: 1, error: e })?;
    match args.report {
        ReportFormat::Json => {
            let json = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
            println!("{json}");
        }
        ReportFormat::Text => print!("{}", render_text(&outcome.report)),
    }
    eprintln!("transcript: {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("tokio runtime");
    let result = match cli.command {
        Command::Probe(args) => rt.block_on(probe(args)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
