//! Latency benchmarking and score aggregation into report tables.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Duration;

use serde::Serialize;

use crate::corpus::Corpus;
use crate::metrics::ScoreReport;
use crate::parallel::map_ordered;
use crate::pipeline::{CellKey, GridEntry, PipelineConfig, RunRecord, Strategy, StrategyKind, Summarizer};
use crate::prompting::{PromptId, PromptRegistry};
use crate::provider::Client;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BenchError {
    #[error("no latency samples")]
    NoSamples,
    #[error("all {attempted} transcripts failed; first error: {first_error}")]
    AllFailed { attempted: usize, first_error: String },
    #[error("score report {0} has no matching run record")]
    OrphanReport(CellKey),
    #[error("nothing to report")]
    EmptyReport,
    #[error("unknown group field \"{0}\" (expected dataset, provider, strategy, prompt or n)")]
    UnknownGroupField(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencySample {
    pub transcript_id: String,
    /// Wall-clock including failed attempts and backoff.
    pub duration: Duration,
    /// Successful attempts only.
    pub success_duration: Duration,
    pub calls: u32,
    pub failed_attempts: u32,
    pub failed: bool,
    #[serde(skip)]
    pub error: Option<String>,
}

impl LatencySample {
    pub fn from_entry(entry: &GridEntry) -> Self {
        let acct = entry.accounting();
        let (transcript_id, error) = match entry {
            GridEntry::Ok(r) => (r.transcript_id.clone(), None),
            GridEntry::Error(e) => (e.transcript_id.clone(), Some(e.error.clone())),
        };
        Self {
            transcript_id,
            duration: acct.total_latency,
            success_duration: acct.success_latency,
            calls: acct.call_count,
            failed_attempts: acct.failure_count,
            failed: error.is_some(),
            error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyStats {
    pub samples: usize,
    pub succeeded: usize,
    pub failed_transcripts: usize,
    /// Failed attempts across all transcripts (retries and terminal).
    pub failure_count: u32,
    /// Mean of successful-attempt durations over successful transcripts.
    pub mean: Duration,
    pub median: Duration,
    /// Nearest-rank 95th percentile.
    pub p95: Duration,
    pub min: Duration,
    pub max: Duration,
    /// Wall-clock spent on all transcripts, failures included, per
    /// successfully summarized transcript.
    pub failure_adjusted_mean: Duration,
}

fn mean_of(durations: &[Duration]) -> Duration {
    durations.iter().sum::<Duration>() / durations.len() as u32
}

/// Nearest-rank percentile of sorted values, `p` in (0, 100].
pub fn nearest_rank(sorted: &[Duration], p: f64) -> Duration {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn latency_stats(samples: &[LatencySample]) -> Result<LatencyStats, BenchError> {
    if samples.is_empty() {
        return Err(BenchError::NoSamples);
    }
    let mut ok: Vec<Duration> = samples
        .iter()
        .filter(|s| !s.failed)
        .map(|s| s.success_duration)
        .collect();
    if ok.is_empty() {
        return Err(BenchError::AllFailed {
            attempted: samples.len(),
            first_error: samples
                .iter()
                .find_map(|s| s.error.clone())
                .unwrap_or_else(|| "unknown".into()),
        });
    }
    ok.sort();
    let n = ok.len();
    let median = if n % 2 == 1 {
        ok[n / 2]
    } else {
        (ok[n / 2 - 1] + ok[n / 2]) / 2
    };
    let total: Duration = samples.iter().map(|s| s.duration).sum();
    Ok(LatencyStats {
        samples: samples.len(),
        succeeded: n,
        failed_transcripts: samples.len() - n,
        failure_count: samples.iter().map(|s| s.failed_attempts).sum(),
        mean: mean_of(&ok),
        median,
        p95: nearest_rank(&ok, 95.0),
        min: ok[0],
        max: ok[n - 1],
        failure_adjusted_mean: total / n as u32,
    })
}

/// Runs `strategy` over every transcript and collects latency statistics.
/// Parallelism comes from `config`; use 1 for faithful per-call timings.
pub fn bench_latency(
    corpus: &Corpus,
    client: &Client,
    strategy: Strategy,
    registry: &PromptRegistry,
    config: &PipelineConfig,
) -> Result<(LatencyStats, Vec<LatencySample>), BenchError> {
    let summarizer = Summarizer::new(client, registry, config);
    let samples = map_ordered(corpus.transcripts(), config.parallelism, |t| {
        LatencySample::from_entry(&summarizer.run(corpus.name(), t, strategy))
    });
    Ok((latency_stats(&samples)?, samples))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupField {
    Dataset,
    Provider,
    Strategy,
    Prompt,
    N,
}

impl FromStr for GroupField {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "dataset" | "corpus" => GroupField::Dataset,
            "provider" | "model" => GroupField::Provider,
            "strategy" => GroupField::Strategy,
            "prompt" => GroupField::Prompt,
            "n" | "max-words" => GroupField::N,
            other => return Err(BenchError::UnknownGroupField(other.to_owned())),
        })
    }
}

pub fn parse_group_by(spec: &str) -> Result<Vec<GroupField>, BenchError> {
    let mut fields: Vec<GroupField> = spec
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    fields.sort();
    fields.dedup();
    Ok(fields)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct GroupKey {
    pub dataset: Option<String>,
    pub provider: Option<String>,
    pub strategy: Option<StrategyKind>,
    pub prompt: Option<PromptId>,
    pub n: Option<usize>,
}

impl GroupKey {
    fn of(cell: &CellKey, fields: &[GroupField]) -> Self {
        let has = |f| fields.contains(&f);
        GroupKey {
            dataset: has(GroupField::Dataset).then(|| cell.corpus.clone()),
            provider: has(GroupField::Provider).then(|| cell.provider.clone()),
            strategy: has(GroupField::Strategy).then_some(cell.strategy),
            prompt: has(GroupField::Prompt).then_some(cell.prompt),
            n: has(GroupField::N).then_some(cell.n),
        }
    }
}

/// How groups spanning several datasets are averaged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Averaging {
    /// Average each dataset first, then weight datasets equally.
    #[default]
    MeanOfDatasetMeans,
    /// One mean over all reports in the group.
    Pooled,
}

impl FromStr for Averaging {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean-of-means" | "dataset" => Ok(Averaging::MeanOfDatasetMeans),
            "pooled" => Ok(Averaging::Pooled),
            other => Err(format!(
                "unknown averaging \"{other}\" (expected mean-of-means or pooled)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub key: GroupKey,
    pub rouge1_f1: f64,
    pub rouge2_f1: f64,
    pub rouge_l_f1: f64,
    pub mean_length: f64,
    pub count: usize,
}

/// Order-independent mean: values are sorted before summing.
fn mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

fn row_over(key: GroupKey, reports: &[&ScoreReport]) -> AggregateRow {
    let col = |f: &dyn Fn(&ScoreReport) -> f64| mean(&mut reports.iter().map(|r| f(r)).collect::<Vec<_>>());
    AggregateRow {
        key,
        rouge1_f1: col(&|r| r.rouge1.f1),
        rouge2_f1: col(&|r| r.rouge2.f1),
        rouge_l_f1: col(&|r| r.rouge_l.f1),
        mean_length: col(&|r| r.candidate_word_count as f64),
        count: reports.len(),
    }
}

/// Groups reports by `group_by` and averages F1 scores and summary length.
/// Every report must correspond to one of `records`.
pub fn aggregate(
    reports: &[ScoreReport],
    records: &[RunRecord],
    group_by: &[GroupField],
    averaging: Averaging,
) -> Result<Vec<AggregateRow>, BenchError> {
    let known: HashSet<CellKey> = records.iter().map(RunRecord::key).collect();
    if let Some(orphan) = reports.iter().find(|r| !known.contains(&r.cell)) {
        return Err(BenchError::OrphanReport(orphan.cell.clone()));
    }
    let mut groups: BTreeMap<GroupKey, Vec<&ScoreReport>> = BTreeMap::new();
    for r in reports {
        groups.entry(GroupKey::of(&r.cell, group_by)).or_default().push(r);
    }
    let by_dataset = averaging == Averaging::MeanOfDatasetMeans && !group_by.contains(&GroupField::Dataset);
    Ok(groups
        .into_iter()
        .map(|(key, members)| {
            if !by_dataset {
                return row_over(key, &members);
            }
            let mut per_dataset: BTreeMap<&str, Vec<&ScoreReport>> = BTreeMap::new();
            for r in &members {
                per_dataset.entry(r.cell.corpus.as_str()).or_default().push(r);
            }
            let rows: Vec<AggregateRow> = per_dataset
                .into_values()
                .map(|m| row_over(GroupKey::default(), &m))
                .collect();
            let col = |f: &dyn Fn(&AggregateRow) -> f64| mean(&mut rows.iter().map(f).collect::<Vec<_>>());
            AggregateRow {
                rouge1_f1: col(&|r| r.rouge1_f1),
                rouge2_f1: col(&|r| r.rouge2_f1),
                rouge_l_f1: col(&|r| r.rouge_l_f1),
                mean_length: col(&|r| r.mean_length),
                count: members.len(),
                key,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format \"{other}\" (expected markdown or csv)")),
        }
    }
}

type Column = fn(&GroupKey) -> String;

/// Renders rows as a table: group columns, then R-1, R-2, R-L (F1 × 100),
/// mean summary length and count, all with two decimals. Rows are sorted by
/// group key.
pub fn emit_report(rows: &[AggregateRow], format: ReportFormat) -> Result<String, BenchError> {
    if rows.is_empty() {
        return Err(BenchError::EmptyReport);
    }
    let mut rows: Vec<&AggregateRow> = rows.iter().collect();
    rows.sort_by(|a, b| a.key.cmp(&b.key));

    let any = |f: fn(&GroupKey) -> bool| rows.iter().any(|r| f(&r.key));
    let mut group_cols: Vec<(&str, Column)> = Vec::new();
    if any(|k| k.dataset.is_some()) {
        group_cols.push(("Dataset", |k| k.dataset.clone().unwrap_or_default()));
    }
    if any(|k| k.provider.is_some()) {
        group_cols.push(("Provider", |k| k.provider.clone().unwrap_or_default()));
    }
    if any(|k| k.strategy.is_some()) {
        group_cols.push(("Strategy", |k| k.strategy.map(|s| s.to_string()).unwrap_or_default()));
    }
    if any(|k| k.prompt.is_some()) {
        group_cols.push(("Prompt", |k| k.prompt.map(|p| p.to_string()).unwrap_or_default()));
    }
    if any(|k| k.n.is_some()) {
        group_cols.push(("n", |k| k.n.map(|n| n.to_string()).unwrap_or_default()));
    }

    let mut header: Vec<String> = group_cols.iter().map(|(h, _)| (*h).to_owned()).collect();
    header.extend(["R-1", "R-2", "R-L", "Length", "Count"].map(str::to_owned));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut cells: Vec<String> = group_cols.iter().map(|(_, f)| f(&r.key)).collect();
            cells.push(format!("{:.2}", r.rouge1_f1 * 100.0));
            cells.push(format!("{:.2}", r.rouge2_f1 * 100.0));
            cells.push(format!("{:.2}", r.rouge_l_f1 * 100.0));
            cells.push(format!("{:.2}", r.mean_length));
            cells.push(r.count.to_string());
            cells
        })
        .collect();

    let mut out = String::new();
    match format {
        ReportFormat::Markdown => {
            let _ = writeln!(out, "| {} |", header.join(" | "));
            let _ = writeln!(out, "|{}", header.iter().map(|_| "---|").collect::<String>());
            for row in body {
                let _ = writeln!(out, "| {} |", row.join(" | "));
            }
        }
        ReportFormat::Csv => {
            let csv_cell = |s: &str| {
                if s.contains([',', '"', '\n']) {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.to_owned()
                }
            };
            for row in std::iter::once(header).chain(body) {
                let _ = writeln!(out, "{}", row.iter().map(|c| csv_cell(c)).collect::<Vec<_>>().join(","));
            }
        }
    }
    Ok(out)
}
