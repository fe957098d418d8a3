//! Summarization of long meeting transcripts with chat-completion LLMs.
//!
//! The crate covers the whole experiment loop:
//!
//! * [`corpus`]: canonical newline-delimited JSON corpora and a bundled toy set.
//! * [`segmenter`]: prefix truncation and fixed-size chapter windows.
//! * [`prompting`]: the prompt registry.
//! * [`provider`]: a retrying chat-completion client with HTTP and mock backends.
//! * [`pipeline`]: truncation and chapterization strategies, grid runs and the
//!   run-record store.
//! * [`metrics`]: ROUGE-1/2/L and an external scorer hook.
//! * [`costing`]: pricing tables and cost comparisons.
//! * [`bench`]: latency statistics, aggregation and report tables.
//!
//! Grid cells, chapter calls and batch scoring run on rayon when the
//! `parallel` feature is enabled (the default).

pub mod bench;
pub mod config;
pub mod corpus;
pub mod costing;
pub mod metrics;
pub mod parallel;
pub mod pipeline;
pub mod prompting;
pub mod provider;
pub mod segmenter;

pub use corpus::{load_corpus, Corpus, Transcript};
pub use pipeline::{GridEntry, RunRecord, Strategy, StrategyKind};
