//! Cartesian grid runner: corpora × providers × strategies × prompts × n.

use crate::corpus::{Corpus, Transcript};
use crate::costing::PricingBook;
use crate::parallel::map_ordered;
use crate::prompting::{PromptId, PromptRegistry};
use crate::provider::Client;

use super::{CellKey, GridEntry, PipelineConfig, RecordStore, StoreError, Strategy, StrategyKind, Summarizer};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    pub strategies: Vec<StrategyKind>,
    pub prompts: Vec<PromptId>,
    pub n_values: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            strategies: StrategyKind::ALL.to_vec(),
            prompts: vec![PromptId::Summarize],
            n_values: vec![crate::segmenter::DEFAULT_MAX_WORDS],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    /// Entries produced by this invocation, in cell order.
    pub entries: Vec<GridEntry>,
    /// Cells skipped because the store already held them.
    pub skipped: usize,
}

impl GridReport {
    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| matches!(e, GridEntry::Error(_))).count()
    }
}

struct Cell<'a> {
    corpus: &'a str,
    transcript: &'a Transcript,
    client: &'a Client,
    strategy: Strategy,
}

impl Cell<'_> {
    fn key(&self) -> CellKey {
        CellKey {
            corpus: self.corpus.to_owned(),
            transcript_id: self.transcript.id().to_owned(),
            provider: self.client.name().to_owned(),
            strategy: self.strategy.kind,
            prompt: self.strategy.prompt,
            n: self.strategy.n,
        }
    }
}

/// Runs every cell not already in `store`, persisting each entry as soon as
/// it completes. Pricing is looked up by provider name; providers without
/// an entry are costed at zero.
pub fn run_grid(
    corpora: &[Corpus],
    clients: &[Client],
    spec: &GridSpec,
    registry: &PromptRegistry,
    pricing: &PricingBook,
    config: &PipelineConfig,
    store: Option<&RecordStore>,
) -> Result<GridReport, StoreError> {
    let mut cells = Vec::new();
    for corpus in corpora {
        for transcript in corpus.transcripts() {
            for client in clients {
                for &kind in &spec.strategies {
                    for &prompt in &spec.prompts {
                        for &n in &spec.n_values {
                            cells.push(Cell {
                                corpus: corpus.name(),
                                transcript,
                                client,
                                strategy: Strategy { kind, n, prompt },
                            });
                        }
                    }
                }
            }
        }
    }
    let total = cells.len();
    if let Some(store) = store {
        cells.retain(|c| !store.contains(&c.key()));
    }
    let skipped = total - cells.len();
    if skipped > 0 {
        tracing::info!(skipped, remaining = cells.len(), "resuming grid");
    }

    let results = map_ordered(&cells, config.parallelism, |cell| {
        let summarizer =
            Summarizer::new(cell.client, registry, config).with_pricing(pricing.get(cell.client.name()).ok());
        let entry = summarizer.run(cell.corpus, cell.transcript, cell.strategy);
        if let GridEntry::Error(e) = &entry {
            tracing::warn!(cell = %cell.key(), error = %e.error, "cell failed");
        }
        let persisted = store.map_or(Ok(()), |s| s.append(&entry));
        persisted.map(|_| entry)
    });
    let entries = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(GridReport { entries, skipped })
}
