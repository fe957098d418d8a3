//! ROUGE-1/2/L scoring and the external scorer hook.

use std::collections::{BTreeMap, HashMap};
use std::time::Duration;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::corpus::{count_words, Corpus, ReferenceSummary};
use crate::parallel::map_ordered;
use crate::pipeline::{CellKey, RunRecord};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("reference has no {0}-grams")]
    EmptyReference(usize),
    #[error("n-gram order must be at least 1")]
    ZeroOrder,
    #[error("no reference summary for transcript \"{0}\"")]
    MissingReference(String),
    #[error("reference is for transcript \"{reference}\" but the run is for \"{run}\"")]
    TranscriptMismatch { run: String, reference: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }

    fn from_counts(matched: usize, candidate_total: usize, reference_total: usize) -> Self {
        let precision = if candidate_total == 0 {
            0.0
        } else {
            matched as f64 / candidate_total as f64
        };
        Self::from_pr(precision, matched as f64 / reference_total as f64)
    }
}

/// Tokens are maximal alphanumeric runs; everything else separates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricTokenization {
    pub lowercase: bool,
    /// Snowball English stemming of each token.
    pub stemming: bool,
}

impl Default for MetricTokenization {
    fn default() -> Self {
        Self {
            lowercase: true,
            stemming: false,
        }
    }
}

pub fn tokenize(text: &str, tok: MetricTokenization) -> Vec<String> {
    let stemmer = tok.stemming.then(|| Stemmer::create(Algorithm::English));
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| {
            let t = if tok.lowercase { t.to_lowercase() } else { t.to_owned() };
            match &stemmer {
                Some(s) => s.stem(&t).into_owned(),
                None => t,
            }
        })
        .collect()
}

fn ngram_counts<T: AsRef<str>>(tokens: &[T], order: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(order) {
        *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
    }
    counts
}

/// ROUGE-N over pre-tokenized input: clipped n-gram overlap.
pub fn rouge_n_tokens<T: AsRef<str>>(
    candidate: &[T],
    reference: &[T],
    order: usize,
) -> Result<RougeScore, MetricsError> {
    if order == 0 {
        return Err(MetricsError::ZeroOrder);
    }
    let ref_total = reference.len().saturating_sub(order - 1);
    if ref_total == 0 {
        return Err(MetricsError::EmptyReference(order));
    }
    let cand_total = candidate.len().saturating_sub(order - 1);
    let ref_counts = ngram_counts(reference, order);
    let matched = ngram_counts(candidate, order)
        .iter()
        .map(|(g, c)| (*c).min(ref_counts.get(g).copied().unwrap_or(0)))
        .sum();
    Ok(RougeScore::from_counts(matched, cand_total, ref_total))
}

/// Longest common subsequence length, two-row dynamic program.
pub fn lcs_len<T: AsRef<str>>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l_tokens<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> Result<RougeScore, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference(1));
    }
    let l = lcs_len(candidate, reference);
    Ok(RougeScore::from_counts(l, candidate.len(), reference.len()))
}

pub fn rouge_n(
    candidate: &str,
    reference: &str,
    order: usize,
    tok: MetricTokenization,
) -> Result<RougeScore, MetricsError> {
    rouge_n_tokens(&tokenize(candidate, tok), &tokenize(reference, tok), order)
}

pub fn rouge_l(candidate: &str, reference: &str, tok: MetricTokenization) -> Result<RougeScore, MetricsError> {
    rouge_l_tokens(&tokenize(candidate, tok), &tokenize(reference, tok))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    #[serde(flatten)]
    pub cell: CellKey,
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    #[serde(rename = "rougeL")]
    pub rouge_l: RougeScore,
    /// Whitespace word count of the final summary.
    pub candidate_word_count: usize,
    /// Set when the final summary is empty.
    pub degenerate: bool,
    pub tokenization: MetricTokenization,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub external_scores: BTreeMap<String, f64>,
}

pub fn score_run(
    record: &RunRecord,
    reference: &ReferenceSummary,
    tok: MetricTokenization,
) -> Result<ScoreReport, MetricsError> {
    if record.transcript_id != reference.transcript_id {
        return Err(MetricsError::TranscriptMismatch {
            run: record.transcript_id.clone(),
            reference: reference.transcript_id.clone(),
        });
    }
    let cand = tokenize(&record.final_summary, tok);
    let refs = tokenize(&reference.text, tok);
    Ok(ScoreReport {
        cell: record.key(),
        rouge1: rouge_n_tokens(&cand, &refs, 1)?,
        rouge2: rouge_n_tokens(&cand, &refs, 2)?,
        rouge_l: rouge_l_tokens(&cand, &refs)?,
        candidate_word_count: count_words(&record.final_summary),
        degenerate: record.final_summary.trim().is_empty(),
        tokenization: tok,
        external_scores: BTreeMap::new(),
    })
}

/// Scores each record against its corpus reference, in input order.
pub fn score_batch(
    records: &[RunRecord],
    corpora: &[Corpus],
    tok: MetricTokenization,
    parallelism: usize,
) -> Vec<Result<ScoreReport, MetricsError>> {
    map_ordered(records, parallelism, |r| {
        let reference = corpora
            .iter()
            .filter(|c| c.name() == r.corpus)
            .find_map(|c| c.reference_for(&r.transcript_id))
            .ok_or_else(|| MetricsError::MissingReference(r.transcript_id.clone()))?;
        score_run(r, reference, tok)
    })
}

/// Client for an HTTP scorer: POST `{"candidate", "reference"}`, reply
/// `{"name", "score"}`. Failures are logged and yield no score.
#[derive(Debug, Clone)]
pub struct ExternalScorer {
    url: String,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ScorerReply {
    name: String,
    score: f64,
}

impl ExternalScorer {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("http client"),
        }
    }

    pub fn score(&self, candidate: &str, reference: &str) -> Option<(String, f64)> {
        let body = serde_json::json!({"candidate": candidate, "reference": reference});
        let reply = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json::<ScorerReply>());
        match reply {
            Ok(r) => {
                if !(0.0..=1.0).contains(&r.score) {
                    tracing::warn!(scorer = %r.name, score = r.score, "external score outside [0, 1]");
                }
                Some((r.name, r.score))
            }
            Err(e) => {
                tracing::warn!(url = %self.url, "external scorer unavailable: {e}");
                None
            }
        }
    }

    /// Adds this scorer's result to `report`, if any.
    pub fn annotate(&self, report: &mut ScoreReport, candidate: &str, reference: &str) {
        if let Some((name, score)) = self.score(candidate, reference) {
            report.external_scores.insert(name, score);
        }
    }
}

pub fn external_score(candidate: &str, reference: &str, scorer_endpoint: &str) -> Option<(String, f64)> {
    ExternalScorer::new(scorer_endpoint).score(candidate, reference)
}
