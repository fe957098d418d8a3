//! `minutes`: corpus checks, grid runs, scoring, cost, latency and reports.
//!
//! Exit status: 0 on success, 1 on user or validation errors, 2 when a
//! provider call or file write fails.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{IsTerminal, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use minutes_core::bench::{aggregate, bench_latency, emit_report, parse_group_by, Averaging, BenchError, ReportFormat};
use minutes_core::config::AppConfig;
use minutes_core::corpus::{corpus_stats, load_corpus, Corpus};
use minutes_core::costing::{cost_ratio, estimate_cost, PricingBook};
use minutes_core::metrics::{score_batch, ExternalScorer, MetricTokenization, ScoreReport};
use minutes_core::pipeline::{read_entries, run_grid, GridEntry, GridSpec, RecordStore};
use minutes_core::prompting::PromptId;
use minutes_core::provider::Client;
use minutes_core::{RunRecord, Strategy, StrategyKind};

#[derive(Parser)]
#[command(
    name = "minutes",
    version,
    about = "Summarize long meeting transcripts with LLMs, then score and compare the runs"
)]
struct Cli {
    /// TOML config with defaults, providers and pricing.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check or describe a corpus file ("toy" selects the bundled corpus).
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Run a strategy grid and append records to a run file.
    Run(RunArgs),
    /// Score run records with ROUGE-1/2/L.
    Score(ScoreArgs),
    /// Estimate run costs, or compare provider prices.
    Cost(CostArgs),
    /// Measure per-transcript latency for one provider and strategy.
    Bench(BenchArgs),
    /// Aggregate scores into a table.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum CorpusCmd {
    Validate { path: PathBuf },
    Stats { path: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// Corpus file; repeat for several datasets.
    #[arg(long, required = true)]
    corpus: Vec<PathBuf>,
    /// Provider names, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "mock")]
    provider: Vec<String>,
    /// Strategies, comma-separated, or "all".
    #[arg(long, default_value = "all")]
    strategy: String,
    /// Prompt ids, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "summarize")]
    prompt: Vec<PromptId>,
    /// Context sizes in words, comma-separated (default from config).
    #[arg(long = "max-words", value_delimiter = ',')]
    max_words: Vec<usize>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Skip cells already present in the run file.
    #[arg(long)]
    resume: bool,
    /// Replace an existing run file.
    #[arg(long, conflicts_with = "resume")]
    overwrite: bool,
    #[arg(long, default_value = "runs.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    runs: PathBuf,
    #[arg(long, required = true)]
    corpus: Vec<PathBuf>,
    /// Optional HTTP scorer for an extra metric.
    #[arg(long = "scorer-url")]
    scorer_url: Option<String>,
    /// Apply English Snowball stemming before matching.
    #[arg(long)]
    stemming: bool,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long, default_value = "scores.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct CostArgs {
    #[command(subcommand)]
    action: Option<CostCmd>,
    /// Pricing TOML (default: config pricing, else bundled 2023 prices).
    #[arg(long, global = true)]
    pricing: Option<PathBuf>,
    #[arg(long)]
    runs: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CostCmd {
    /// Price of provider A relative to provider B.
    Ratio { a: String, b: String },
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    provider: String,
    #[arg(long, default_value = "truncation")]
    strategy: StrategyKind,
    #[arg(long, default_value = "summarize")]
    prompt: PromptId,
    #[arg(long = "max-words")]
    max_words: Option<usize>,
    /// Concurrent transcripts; 1 keeps timings free of contention.
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// Also write per-transcript samples as JSON.
    #[arg(long)]
    samples: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    runs: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    /// Any of dataset, provider, strategy, prompt, n.
    #[arg(long = "group-by", default_value = "provider,strategy")]
    group_by: String,
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
    /// mean-of-means (datasets weighted equally) or pooled.
    #[arg(long, default_value = "mean-of-means")]
    averaging: Averaging,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error with its exit status.
enum Failure {
    User(anyhow::Error),
    Infra(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::User(_) => 1,
            Failure::Infra(_) => 2,
        }
    }
}

trait Classify<T> {
    fn user(self) -> Result<T, Failure>;
    fn infra(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn user(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::User(e.into()))
    }
    fn infra(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Infra(e.into()))
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();

    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            let (Failure::User(e) | Failure::Infra(e)) = f;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: Cli) -> Outcome {
    let config = match &cli.config {
        Some(path) => AppConfig::load(path).user()?,
        None => AppConfig::default(),
    };
    match cli.command {
        Command::Corpus(cmd) => corpus_cmd(cmd),
        Command::Run(args) => run_cmd(&config, args),
        Command::Score(args) => score_cmd(&config, args),
        Command::Cost(args) => cost_cmd(&config, args),
        Command::Bench(args) => bench_cmd(&config, args),
        Command::Report(args) => report_cmd(args),
    }
}

/// Writes `contents` next to `path` and renames it into place.
fn write_atomic(path: &Path, contents: &[u8]) -> Outcome {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Failure::User(anyhow!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = std::fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(contents).and_then(|_| f.sync_all()))
        .and_then(|_| std::fs::rename(&tmp, path));
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.with_context(|| format!("writing {}", path.display())).infra()
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_corpora(paths: &[PathBuf]) -> Result<Vec<Corpus>, Failure> {
    paths
        .iter()
        .map(|p| load_corpus(p).with_context(|| format!("corpus {}", p.display())).user())
        .collect()
}

fn read_run_file(path: &Path) -> Result<Vec<GridEntry>, Failure> {
    if !path.exists() {
        return Err(Failure::User(anyhow!("run file {} does not exist", path.display())));
    }
    read_entries(path).user()
}

fn pricing_book(config: &AppConfig, path: Option<&Path>) -> Result<PricingBook, Failure> {
    match path {
        Some(p) => PricingBook::load(p).user(),
        None if !config.pricing.is_empty() => Ok(config.pricing_book()),
        None => Ok(PricingBook::bundled_2023()),
    }
}

fn clients(config: &AppConfig, names: &[String]) -> Result<Vec<Client>, Failure> {
    let registry = config.registry().user()?;
    names
        .iter()
        .map(|name| {
            let cfg = config.provider(name).user()?;
            Client::from_config(cfg, &registry).user()
        })
        .collect()
}

fn corpus_cmd(cmd: CorpusCmd) -> Outcome {
    match cmd {
        CorpusCmd::Validate { path } => {
            let corpus = load_corpus(&path)
                .with_context(|| format!("corpus {}", path.display()))
                .user()?;
            println!(
                "ok: {} ({} transcripts, {} references)",
                corpus.name(),
                corpus.transcripts().len(),
                corpus.references().len()
            );
        }
        CorpusCmd::Stats { path } => {
            let corpus = load_corpus(&path)
                .with_context(|| format!("corpus {}", path.display()))
                .user()?;
            println!("{}", corpus_stats(&corpus).user()?);
        }
    }
    Ok(())
}

fn parse_strategies(spec: &str) -> Result<Vec<StrategyKind>, Failure> {
    if spec.trim() == "all" {
        return Ok(StrategyKind::ALL.to_vec());
    }
    let mut kinds = spec
        .split(',')
        .map(|s| s.trim().parse::<StrategyKind>())
        .collect::<Result<Vec<_>, _>>()
        .user()?;
    kinds.sort();
    kinds.dedup();
    Ok(kinds)
}

fn run_cmd(config: &AppConfig, args: RunArgs) -> Outcome {
    let corpora = load_corpora(&args.corpus)?;
    let mut pipeline = config.pipeline();
    if let Some(p) = args.parallelism {
        if p == 0 {
            return Err(Failure::User(anyhow!("--parallelism must be at least 1")));
        }
        pipeline.parallelism = p;
    }
    let n_values = if args.max_words.is_empty() {
        vec![config.defaults.max_words]
    } else {
        args.max_words.clone()
    };
    if n_values.contains(&0) {
        return Err(Failure::User(anyhow!("--max-words must be at least 1")));
    }
    let spec = GridSpec {
        strategies: parse_strategies(&args.strategy)?,
        prompts: args.prompt.clone(),
        n_values,
    };
    let clients = clients(config, &args.provider)?;
    let registry = config.registry().user()?;
    let pricing = pricing_book(config, None)?;

    let store = if args.resume {
        RecordStore::resume(&args.out).user()?
    } else if args.out.exists() && !args.overwrite {
        return Err(Failure::User(anyhow!(
            "{} already exists; pass --resume to continue it or --overwrite to replace it",
            args.out.display()
        )));
    } else {
        RecordStore::create(&args.out).infra()?
    };

    let report = run_grid(&corpora, &clients, &spec, &registry, &pricing, &pipeline, Some(&store)).infra()?;
    let failed = report.failures();
    eprintln!(
        "{} new records ({} failed), {} skipped -> {}",
        report.entries.len(),
        failed,
        report.skipped,
        args.out.display()
    );
    if failed > 0 {
        // Failed cells are stored as error entries; --resume does not retry them.
        return Err(Failure::Infra(anyhow!(
            "{failed} cells failed; see the error entries in {}",
            args.out.display()
        )));
    }
    Ok(())
}

fn score_cmd(config: &AppConfig, args: ScoreArgs) -> Outcome {
    let entries = read_run_file(&args.runs)?;
    let corpora = load_corpora(&args.corpus)?;
    let records: Vec<RunRecord> = entries.iter().filter_map(GridEntry::as_record).cloned().collect();
    let skipped = entries.len() - records.len();
    if skipped > 0 {
        tracing::warn!(skipped, "error records are not scored");
    }
    let tok = MetricTokenization {
        stemming: args.stemming,
        ..MetricTokenization::default()
    };
    let parallelism = args.parallelism.unwrap_or(config.defaults.parallelism).max(1);
    let mut reports = score_batch(&records, &corpora, tok, parallelism)
        .into_iter()
        .collect::<Result<Vec<ScoreReport>, _>>()
        .user()?;
    if let Some(url) = &args.scorer_url {
        let scorer = ExternalScorer::new(url.clone());
        for (report, record) in reports.iter_mut().zip(&records) {
            let reference = corpora
                .iter()
                .filter(|c| c.name() == record.corpus)
                .find_map(|c| c.reference_for(&record.transcript_id))
                .expect("scored records have references");
            scorer.annotate(report, &record.final_summary, &reference.text);
        }
    }
    let mut text = String::new();
    for r in &reports {
        text.push_str(&serde_json::to_string(r).expect("score report serializes"));
        text.push('\n');
    }
    write_atomic(&args.out, text.as_bytes())?;
    eprintln!("{} scored -> {}", reports.len(), args.out.display());
    Ok(())
}

fn cost_cmd(config: &AppConfig, args: CostArgs) -> Outcome {
    let book = pricing_book(config, args.pricing.as_deref())?;
    if let Some(CostCmd::Ratio { a, b }) = &args.action {
        let ratio = cost_ratio(book.get(a).user()?, book.get(b).user()?).user()?;
        println!("{a} / {b} = {ratio:.2}");
        return Ok(());
    }
    let runs = args
        .runs
        .as_deref()
        .ok_or_else(|| Failure::User(anyhow!("--runs is required (or use `cost ratio <a> <b>`)")))?;
    let entries = read_run_file(runs)?;

    #[derive(Default)]
    struct Totals {
        records: usize,
        calls: u64,
        input: u64,
        output: u64,
    }
    let mut by_provider: BTreeMap<String, Totals> = BTreeMap::new();
    for e in &entries {
        let name = match e {
            GridEntry::Ok(r) => &r.provider_name,
            GridEntry::Error(r) => &r.provider_name,
        };
        let acct = e.accounting();
        let t = by_provider.entry(name.clone()).or_default();
        t.records += 1;
        t.calls += u64::from(acct.call_count);
        t.input += acct.total_input_tokens;
        t.output += acct.total_output_tokens;
    }
    let mut doc = String::from(
        "| Provider | Records | Calls | Input tokens | Output tokens | Cost (USD) |\n|---|---|---|---|---|---|\n",
    );
    for (name, t) in &by_provider {
        let cost = match book.get(name) {
            Ok(p) => format!("{:.4}", estimate_cost(p, t.input, t.output).total),
            Err(_) => {
                tracing::warn!(provider = %name, "no pricing entry");
                "n/a".into()
            }
        };
        let _ = writeln!(
            doc,
            "| {name} | {} | {} | {} | {} | {cost} |",
            t.records, t.calls, t.input, t.output
        );
    }
    emit(args.out.as_deref(), &doc)
}

fn secs(d: std::time::Duration) -> String {
    format!("{:.3}", d.as_secs_f64())
}

fn bench_cmd(config: &AppConfig, args: BenchArgs) -> Outcome {
    if args.parallelism == 0 {
        return Err(Failure::User(anyhow!("--parallelism must be at least 1")));
    }
    let corpus = load_corpora(std::slice::from_ref(&args.corpus))?.remove(0);
    let client = clients(config, std::slice::from_ref(&args.provider))?.remove(0);
    let registry = config.registry().user()?;
    let mut pipeline = config.pipeline();
    pipeline.parallelism = args.parallelism;
    let strategy = Strategy::new(args.strategy)
        .with_n(args.max_words.unwrap_or(config.defaults.max_words))
        .with_prompt(args.prompt);
    let (stats, samples) = match bench_latency(&corpus, &client, strategy, &registry, &pipeline) {
        Ok(v) => v,
        Err(e @ BenchError::AllFailed { .. }) => return Err(Failure::Infra(e.into())),
        Err(e) => return Err(Failure::User(e.into())),
    };
    let mut doc = String::from("| Statistic | Value |\n|---|---|\n");
    let rows = [
        ("provider", args.provider.clone()),
        ("strategy", strategy.kind.to_string()),
        ("transcripts", stats.samples.to_string()),
        ("succeeded", stats.succeeded.to_string()),
        ("failed transcripts", stats.failed_transcripts.to_string()),
        ("failed attempts", stats.failure_count.to_string()),
        ("mean (s)", secs(stats.mean)),
        ("median (s)", secs(stats.median)),
        ("p95 (s)", secs(stats.p95)),
        ("min (s)", secs(stats.min)),
        ("max (s)", secs(stats.max)),
        ("failure-adjusted mean (s)", secs(stats.failure_adjusted_mean)),
    ];
    for (k, v) in rows {
        let _ = writeln!(doc, "| {k} | {v} |");
    }
    print!("{doc}");
    if let Some(path) = &args.samples {
        let json = serde_json::to_string_pretty(&samples).expect("samples serialize");
        write_atomic(path, json.as_bytes())?;
    }
    Ok(())
}

fn report_cmd(args: ReportArgs) -> Outcome {
    let entries = read_run_file(&args.runs)?;
    let records: Vec<RunRecord> = entries.iter().filter_map(GridEntry::as_record).cloned().collect();
    if !args.scores.exists() {
        return Err(Failure::User(anyhow!(
            "score file {} does not exist",
            args.scores.display()
        )));
    }
    let text = std::fs::read_to_string(&args.scores)
        .with_context(|| format!("reading {}", args.scores.display()))
        .user()?;
    let mut reports = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: ScoreReport = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: malformed score report", args.scores.display(), i + 1))
            .user()?;
        reports.push(r);
    }
    let fields = parse_group_by(&args.group_by).user()?;
    if fields.is_empty() {
        return Err(Failure::User(anyhow!("--group-by needs at least one field")));
    }
    let rows = aggregate(&reports, &records, &fields, args.averaging).user()?;
    let doc = emit_report(&rows, args.format).user()?;
    emit(args.out.as_deref(), &doc)
}
