//! Meeting corpus data model and the newline-delimited JSON loader.
//!
//! Each line of a corpus file holds one meeting:
//!
//! ```json
//! {"id": "m1", "utterances": [{"speaker": "A", "text": "hello there"}], "reference": "A greets."}
//! ```
//!
//! Blank lines are ignored. The corpus name defaults to the file stem.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Bundled three-meeting corpus used by tests, examples and `--corpus toy`.
pub const TOY_CORPUS: &str = include_str!("../data/toy.jsonl");

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("failed to read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate transcript id \"{id}\"")]
    DuplicateId { line: usize, id: String },
    #[error("reference cites unknown transcript id \"{0}\"")]
    DanglingReference(String),
    #[error("corpus contains no transcripts")]
    Empty,
}

/// How utterances are rendered before word splitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerRendering {
    pub include_speakers: bool,
}

impl Default for SpeakerRendering {
    fn default() -> Self {
        Self { include_speakers: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<String>,
    pub text: String,
}

impl Utterance {
    fn render(&self, rendering: SpeakerRendering) -> String {
        match (&self.speaker, rendering.include_speakers) {
            (Some(speaker), true) => format!("{speaker}: {}", self.text),
            _ => self.text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    id: String,
    utterances: Vec<Utterance>,
    word_count: usize,
}

impl Transcript {
    /// Builds a transcript, rejecting an empty id or blank utterance text.
    pub fn new(id: impl Into<String>, utterances: Vec<Utterance>) -> Result<Self, String> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err("transcript id is empty".into());
        }
        if utterances.is_empty() {
            return Err(format!("transcript \"{id}\" has no utterances"));
        }
        if let Some(pos) = utterances.iter().position(|u| u.text.trim().is_empty()) {
            return Err(format!("transcript \"{id}\": utterance {pos} has blank text"));
        }
        let word_count = utterances
            .iter()
            .map(|u| count_words(&u.render(SpeakerRendering::default())))
            .sum();
        Ok(Self {
            id,
            utterances,
            word_count,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    /// Word count under the default rendering (speaker prefixes included).
    pub fn word_count(&self) -> usize {
        self.word_count
    }

    /// Ordered word sequence with speaker prefixes rendered as `speaker:`.
    pub fn flatten(&self) -> Vec<String> {
        self.flatten_with(SpeakerRendering::default())
    }

    pub fn flatten_with(&self, rendering: SpeakerRendering) -> Vec<String> {
        self.utterances
            .iter()
            .flat_map(|u| {
                u.render(rendering)
                    .split_whitespace()
                    .map(str::to_owned)
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceSummary {
    pub transcript_id: String,
    pub text: String,
}

impl ReferenceSummary {
    pub fn word_count(&self) -> usize {
        count_words(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    name: String,
    transcripts: Vec<Transcript>,
    references: Vec<ReferenceSummary>,
}

/// Line-level wire record.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusLine {
    id: String,
    utterances: Vec<Utterance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference: Option<String>,
}

impl Corpus {
    /// Validates and assembles a corpus. Each reference must name exactly one
    /// transcript and a transcript may carry at most one reference.
    pub fn new(
        name: impl Into<String>,
        transcripts: Vec<Transcript>,
        references: Vec<ReferenceSummary>,
    ) -> Result<Self, CorpusError> {
        if transcripts.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut ids = HashSet::new();
        for (i, t) in transcripts.iter().enumerate() {
            if !ids.insert(t.id()) {
                return Err(CorpusError::DuplicateId {
                    line: i + 1,
                    id: t.id().to_owned(),
                });
            }
        }
        let mut referenced = HashSet::new();
        for r in &references {
            if !ids.contains(r.transcript_id.as_str()) {
                return Err(CorpusError::DanglingReference(r.transcript_id.clone()));
            }
            if !referenced.insert(r.transcript_id.as_str()) {
                return Err(CorpusError::Malformed {
                    line: 0,
                    message: format!("transcript \"{}\" has more than one reference", r.transcript_id),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            transcripts,
            references,
        })
    }

    /// Parses corpus text in the canonical line format.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self, CorpusError> {
        let mut transcripts = Vec::new();
        let mut references = Vec::new();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let rec: CorpusLine = serde_json::from_str(raw).map_err(|e| CorpusError::Malformed {
                line,
                message: e.to_string(),
            })?;
            if !seen.insert(rec.id.clone()) {
                return Err(CorpusError::DuplicateId { line, id: rec.id });
            }
            if let Some(reference) = rec.reference {
                if reference.trim().is_empty() {
                    return Err(CorpusError::Malformed {
                        line,
                        message: "reference text is blank".into(),
                    });
                }
                references.push(ReferenceSummary {
                    transcript_id: rec.id.clone(),
                    text: reference,
                });
            }
            let transcript =
                Transcript::new(rec.id, rec.utterances).map_err(|message| CorpusError::Malformed { line, message })?;
            transcripts.push(transcript);
        }
        Self::new(name, transcripts, references)
    }

    /// Renders the corpus back to canonical lines; `parse` of the output
    /// reproduces an identical corpus.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.transcripts {
            let line = CorpusLine {
                id: t.id.clone(),
                utterances: t.utterances.clone(),
                reference: self.reference_for(t.id()).map(|r| r.text.clone()),
            };
            out.push_str(&serde_json::to_string(&line).expect("corpus line serializes"));
            out.push('\n');
        }
        out
    }

    pub fn toy() -> Self {
        Self::parse("toy", TOY_CORPUS).expect("bundled toy corpus is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn transcripts(&self) -> &[Transcript] {
        &self.transcripts
    }

    pub fn references(&self) -> &[ReferenceSummary] {
        &self.references
    }

    pub fn transcript(&self, id: &str) -> Option<&Transcript> {
        self.transcripts.iter().find(|t| t.id == id)
    }

    pub fn reference_for(&self, id: &str) -> Option<&ReferenceSummary> {
        self.references.iter().find(|r| r.transcript_id == id)
    }
}

/// Loads and validates a corpus file. The name `toy` (with no such file on
/// disk) resolves to the bundled fixture.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    if path.as_os_str() == "toy" && !path.exists() {
        return Ok(Corpus::toy());
    }
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into());
    Corpus::parse(name, &text)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorpusStats {
    pub transcripts: usize,
    pub mean_transcript_words: f64,
    pub mean_reference_words: f64,
}

impl std::fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "transcripts={} mean_transcript_words={:.2} mean_reference_words={:.2}",
            self.transcripts, self.mean_transcript_words, self.mean_reference_words
        )
    }
}

/// Corpus-level length statistics. Reference mean is over transcripts that
/// carry a reference (0 when none do).
pub fn corpus_stats(c: &Corpus) -> Result<CorpusStats, CorpusError> {
    if c.transcripts.is_empty() {
        return Err(CorpusError::Empty);
    }
    let n = c.transcripts.len();
    let words: usize = c.transcripts.iter().map(Transcript::word_count).sum();
    let ref_words: usize = c.references.iter().map(ReferenceSummary::word_count).sum();
    let mean_reference_words = if c.references.is_empty() {
        0.0
    } else {
        ref_words as f64 / c.references.len() as f64
    };
    Ok(CorpusStats {
        transcripts: n,
        mean_transcript_words: words as f64 / n as f64,
        mean_reference_words,
    })
}

pub fn count_words(text: &str) -> usize {
    text.split_whitespace().count()
}
