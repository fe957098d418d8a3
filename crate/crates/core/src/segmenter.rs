//! Prefix truncation and fixed-size chapter windows over a word sequence.

use serde::{Deserialize, Serialize};

/// Default maximum words per LLM input.
pub const DEFAULT_MAX_WORDS: usize = 2500;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SegmentError {
    #[error("window size must be at least 1 word")]
    ZeroWindow,
    #[error("nothing to segment: input has no words")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub max_words: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            max_words: DEFAULT_MAX_WORDS,
        }
    }
}

/// A contiguous window of the flattened transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chapter<'a> {
    pub index: usize,
    pub start_offset: usize,
    pub words: &'a [String],
}

impl Chapter<'_> {
    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

/// First `min(n, len)` words.
pub fn truncate(words: &[String], n: usize) -> Result<&[String], SegmentError> {
    if n == 0 {
        return Err(SegmentError::ZeroWindow);
    }
    Ok(&words[..words.len().min(n)])
}

/// Splits `words` into consecutive non-overlapping windows of `n` words; the
/// last window holds the remainder (1..=n words).
pub fn chapterize(words: &[String], n: usize) -> Result<Vec<Chapter<'_>>, SegmentError> {
    if n == 0 {
        return Err(SegmentError::ZeroWindow);
    }
    if words.is_empty() {
        return Err(SegmentError::EmptyInput);
    }
    Ok(words
        .chunks(n)
        .enumerate()
        .map(|(index, words)| Chapter {
            index,
            start_offset: index * n,
            words,
        })
        .collect())
}
