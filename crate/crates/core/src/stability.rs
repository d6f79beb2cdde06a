//! Repeated-prompt stability probe.
//!
//! Sends the same rendered prompt `n` times, parses every reply and measures
//! how often the normalized answers agree. Every run is kept in a transcript
//! so the report can be recounted independently.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::Utc;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parser::{parse_result, Provenance};
use crate::prompt::{render_prompt, Inputs, PromptError, DEFAULT_TOKEN_BUDGET};
use crate::provider::{complete, ChatProvider, ProviderConfig, ResponseKind};
use crate::task::{Category, ModelParams, SuggestionTask};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("a probe needs at least two runs, got {0}")]
    TooFewRuns(usize),
    #[error("temperature must be within [0, 2], got {0}")]
    InvalidTemperature(f64),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone)]
pub struct ProbeOptions {
    pub n: usize,
    pub temperature_override: Option<f64>,
    /// Maximum calls in flight; 1 runs sequentially.
    pub parallelism: usize,
    pub token_budget: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            n: 10,
            temperature_override: None,
            parallelism: 1,
            token_budget: DEFAULT_TOKEN_BUDGET,
        }
    }
}

/// One probe run as written to the transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub run: usize,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_kind: Option<ResponseKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Normalized labels, sorted (closed tasks).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    /// Normalized answer used for agreement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized: Option<String>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub task_id: String,
    pub n: usize,
    pub parse_success_count: usize,
    pub distinct_normalized_responses: usize,
    /// Frequency of the modal normalized response divided by `n`.
    pub agreement: f64,
    /// No run parsed; `agreement` is reported as 0.
    pub all_failed: bool,
    /// Mean pairwise Jaccard similarity of suggestion sets (closed tasks).
    pub per_item_overlap: Option<f64>,
    pub latency_p50_ms: u64,
    pub latency_p95_ms: u64,
}

#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub report: StabilityReport,
    pub transcript: Vec<TranscriptEntry>,
}

/// Trim, lowercase and collapse internal whitespace.
pub fn normalize_text(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn jaccard(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Nearest-rank percentile of an unsorted sample; 0 for an empty sample.
pub fn percentile(values: &[u64], p: f64) -> u64 {
    if values.is_empty() {
        return 0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Computes the report from a transcript.
pub fn compute_report(task_id: &str, category: Category, transcript: &[TranscriptEntry]) -> StabilityReport {
    let n = transcript.len();
    let parsed: Vec<&TranscriptEntry> = transcript.iter().filter(|e| e.ok).collect();

    let mut freq: HashMap<&str, usize> = HashMap::new();
    for e in &parsed {
        if let Some(norm) = &e.normalized {
            *freq.entry(norm.as_str()).or_default() += 1;
        }
    }
    let modal = freq.values().copied().max().unwrap_or(0);
    let agreement = if n == 0 { 0.0 } else { modal as f64 / n as f64 };

    let per_item_overlap = match category {
        Category::ClosedRecommendation => {
            let sets: Vec<BTreeSet<&str>> = parsed
                .iter()
                .map(|e| {
                    e.labels
                        .iter()
                        .flatten()
                        .map(String::as_str)
                        .collect()
                })
                .collect();
            let mut total = 0.0;
            let mut pairs = 0usize;
            for i in 0..sets.len() {
                for j in i + 1..sets.len() {
                    total += jaccard(&sets[i], &sets[j]);
                    pairs += 1;
                }
            }
            (pairs > 0).then(|| total / pairs as f64)
        }
        Category::OpenFeedback => None,
    };

    let latencies: Vec<u64> = transcript.iter().map(|e| e.latency_ms).collect();
    StabilityReport {
        task_id: task_id.to_owned(),
        n,
        parse_success_count: parsed.len(),
        distinct_normalized_responses: freq.len(),
        agreement,
        all_failed: parsed.is_empty(),
        per_item_overlap,
        latency_p50_ms: percentile(&latencies, 50.0),
        latency_p95_ms: percentile(&latencies, 95.0),
    }
}

/// Sends the task's prompt `options.n` times without caching or retries.
pub async fn run_probe(
    task: &SuggestionTask,
    inputs: &Inputs,
    provider: &dyn ChatProvider,
    config: &ProviderConfig,
    options: &ProbeOptions,
) -> Result<ProbeOutcome, ProbeError> {
    if options.n < 2 {
        return Err(ProbeError::TooFewRuns(options.n));
    }
    let mut task = task.clone();
    if let Some(t) = options.temperature_override {
        if !t.is_finite() || !ModelParams::temperature_in_range(t) {
            return Err(ProbeError::InvalidTemperature(t));
        }
        task.model_params.temperature = t;
    }
    let bundle = render_prompt(&task, inputs, options.token_budget)?;
    let config = ProviderConfig {
        max_retries: 0,
        ..config.clone()
    };
    let model_name = config
        .model_name
        .clone()
        .unwrap_or_else(|| task.model_params.model_name.clone());

    let task = &task;
    let bundle = &bundle;
    let config = &config;
    let model_name = &model_name;
    let mut transcript: Vec<TranscriptEntry> = stream::iter(0..options.n)
        .map(|run| async move {
            let started = Instant::now();
            let outcome = complete(provider, bundle, config).await;
            let latency_ms = started.elapsed().as_millis() as u64;
            let mut entry = TranscriptEntry {
                run,
                ok: false,
                response_kind: None,
                payload: None,
                error: None,
                labels: None,
                normalized: None,
                latency_ms,
            };
            match outcome {
                Err(e) => entry.error = Some(e.to_string()),
                Ok(raw) => {
                    entry.response_kind = Some(raw.kind);
                    entry.payload = Some(raw.payload.clone());
                    let prov = Provenance {
                        model_name: model_name.clone(),
                        prompt_hash: bundle.prompt_hash.clone(),
                        latency_ms,
                        attempt: 1,
                    };
                    match parse_result(task, &raw, prov) {
                        Err(e) => entry.error = Some(e.to_string()),
                        Ok(result) => {
                            entry.ok = true;
                            match result.feedback_text {
                                Some(text) => entry.normalized = Some(normalize_text(&text)),
                                None => {
                                    let mut labels: Vec<String> =
                                        result.items.iter().map(|i| normalize_text(&i.label)).collect();
                                    labels.sort();
                                    entry.normalized =
                                        Some(serde_json::to_string(&labels).unwrap_or_default());
                                    entry.labels = Some(labels);
                                }
                            }
                        }
                    }
                }
            }
            entry
        })
        .buffer_unordered(options.parallelism.max(1))
        .collect()
        .await;
    transcript.sort_by_key(|e| e.run);

    Ok(ProbeOutcome {
        report: compute_report(&task.task_id, task.category, &transcript),
        transcript,
    })
}

/// Writes `probe-<task>-<timestamp>.jsonl` into `dir` and returns its path.
pub fn write_transcript(dir: &Path, task_id: &str, transcript: &[TranscriptEntry]) -> io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let stamp = Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    let path = dir.join(format!("probe-{task_id}-{stamp}.jsonl"));
    let mut w = BufWriter::new(File::create(&path)?);
    for entry in transcript {
        serde_json::to_writer(&mut w, entry).map_err(io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(path)
}
