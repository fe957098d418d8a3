//! Grid runs with failing providers, pricing and the on-disk store.

use minutes_core::costing::{estimate_cost, PricingBook};
use minutes_core::pipeline::{read_entries, run_grid, GridEntry, GridSpec, PipelineConfig, RecordStore};
use minutes_core::prompting::{PromptId, PromptRegistry};
use minutes_core::provider::{Client, FailurePlan, MockParams, ProviderConfig, RetryPolicy};
use minutes_core::{Corpus, StrategyKind};

fn client(name: &str, failures: FailurePlan) -> Client {
    let mut cfg = ProviderConfig::mock(
        name,
        MockParams {
            failures,
            ..MockParams::default()
        },
    );
    cfg.retry = RetryPolicy {
        max_attempts: 2,
        backoff_base_ms: 1,
        backoff_multiplier: 2.0,
    };
    Client::from_config(cfg, &PromptRegistry::default()).unwrap()
}

fn spec() -> GridSpec {
    GridSpec {
        strategies: StrategyKind::ALL.to_vec(),
        prompts: vec![PromptId::Summarize],
        n_values: vec![100],
    }
}

#[test]
fn failing_provider_yields_error_entries_without_stopping_the_grid() {
    let corpus = Corpus::toy();
    let clients = [
        client("gpt-3.5", FailurePlan::default()),
        client(
            "broken",
            FailurePlan {
                fail_first: 1,
                every: 1,
                terminal: true,
            },
        ),
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runs.jsonl");
    let store = RecordStore::create(&path).unwrap();
    let report = run_grid(
        std::slice::from_ref(&corpus),
        &clients,
        &spec(),
        &PromptRegistry::default(),
        &PricingBook::bundled_2023(),
        &PipelineConfig::default(),
        Some(&store),
    )
    .unwrap();
    drop(store);

    assert_eq!(report.entries.len(), 24);
    assert_eq!(report.failures(), 12);
    for entry in &report.entries {
        match entry {
            GridEntry::Ok(r) => {
                assert_eq!(r.provider_name, "gpt-3.5");
                let pricing = PricingBook::bundled_2023();
                let expected = estimate_cost(
                    pricing.get("gpt-3.5").unwrap(),
                    r.accounting.total_input_tokens,
                    r.accounting.total_output_tokens,
                )
                .total;
                assert!((r.accounting.cost - expected).abs() < 1e-12);
                assert_eq!(r.accounting.failure_count, 0);
            }
            GridEntry::Error(e) => {
                assert_eq!(e.provider_name, "broken");
                assert!(e.completed_chapters.is_empty());
                assert!(e.accounting.failure_count >= 1);
                assert_eq!(e.accounting.cost, 0.0);
            }
        }
    }

    let on_disk = read_entries(&path).unwrap();
    assert_eq!(on_disk.len(), 24);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().filter(|l| l.contains(r#""status":"error""#)).count(), 12);

    // Error cells count as done on resume.
    let store = RecordStore::resume(&path).unwrap();
    let again = run_grid(
        std::slice::from_ref(&corpus),
        &clients,
        &spec(),
        &PromptRegistry::default(),
        &PricingBook::bundled_2023(),
        &PipelineConfig::default(),
        Some(&store),
    )
    .unwrap();
    assert_eq!((again.entries.len(), again.skipped), (0, 24));
}

#[test]
fn resume_drops_a_torn_trailing_line() {
    let corpus = Corpus::toy();
    let clients = [client("mock", FailurePlan::default())];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runs.jsonl");
    let store = RecordStore::create(&path).unwrap();
    run_grid(
        std::slice::from_ref(&corpus),
        &clients,
        &spec(),
        &PromptRegistry::default(),
        &PricingBook::default(),
        &PipelineConfig::default(),
        Some(&store),
    )
    .unwrap();
    drop(store);

    let full = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = full.lines().collect();
    let torn = format!("{}\n{}\n{}", lines[0], lines[1], &lines[2][..lines[2].len() / 2]);
    std::fs::write(&path, torn).unwrap();

    let store = RecordStore::resume(&path).unwrap();
    assert_eq!(store.existing_len(), 2);
    let report = run_grid(
        std::slice::from_ref(&corpus),
        &clients,
        &spec(),
        &PromptRegistry::default(),
        &PricingBook::default(),
        &PipelineConfig::default(),
        Some(&store),
    )
    .unwrap();
    assert_eq!((report.entries.len(), report.skipped), (10, 2));
    assert_eq!(read_entries(&path).unwrap().len(), 12);
}
