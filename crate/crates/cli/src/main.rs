use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use chrono::NaiveDateTime;
use clap::{Parser, Subcommand};
use layered_trading::backtest::{
    build_embedder, report_csv, BacktestError, MetricsReport, ReportFormat, RunConfig, Simulation,
    CONFIG_FILE,
};
use layered_trading::decision::Phase;
use layered_trading::fixtures::{self, FixtureSpec};
use layered_trading::market_data::{ingest_holdings, ingest_news, ingest_prices, IngestError};
use layered_trading::memory::{LayerKind, MemoryConfig, ScoredMemory};
use layered_trading::store::{
    read_log, CognitionRecord, Frequency, RunLock, Store, StoreError, COGNITION_LOG,
};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "ltrade", version, about = "Layered-memory multi-agent trading backtests")]
struct Cli {
    /// Root directory holding one subdirectory per run.
    #[arg(long, global = true, default_value = "runs")]
    run_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate data files into a run's raw input log.
    Ingest {
        /// Run directory name under --run-dir.
        #[arg(long, default_value = "data")]
        run: String,
        #[arg(long)]
        prices: Option<PathBuf>,
        #[arg(long)]
        minute_prices: Option<PathBuf>,
        #[arg(long)]
        holdings: Option<PathBuf>,
        #[arg(long)]
        news: Option<PathBuf>,
    },
    /// Write seeded synthetic price, holding and news files plus sample configs.
    Fixtures {
        #[arg(long, default_value_t = 60)]
        days: usize,
        /// Comma-separated tickers.
        #[arg(long, value_delimiter = ',', default_value = "AAA,BBB,CCC,DDD,EEE")]
        tickers: Vec<String>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        agents: usize,
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
    },
    /// Run a training backtest.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a test backtest.
    Test {
        #[arg(long)]
        config: PathBuf,
    },
    /// Rank one agent's memories in a layer against a prompt.
    Query {
        #[arg(long)]
        run: String,
        #[arg(long)]
        agent: String,
        #[arg(long, default_value = "short")]
        layer: LayerKind,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        prompt: String,
        /// Scoring time, e.g. 2023-03-01T16:00:00. Defaults to the newest record.
        #[arg(long)]
        at: Option<NaiveDateTime>,
        #[arg(long)]
        json: bool,
    },
    /// Print a finished run's metrics report.
    Report {
        #[arg(long)]
        run: String,
        #[arg(long, default_value = "json")]
        format: ReportFormat,
    },
    /// Print a run's debate messages as JSON lines.
    ExportDebates {
        #[arg(long)]
        run: String,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    category: &'static str,
    message: String,
}

impl Failure {
    fn new(category: &'static str, message: impl Into<String>) -> Self {
        Self {
            category,
            message: message.into(),
        }
    }
}

fn store_category(e: &StoreError) -> &'static str {
    match e {
        StoreError::Locked(_) => "locked",
        StoreError::Corrupt { .. } => "corrupt_log",
        StoreError::SchemaViolation(_) | StoreError::Duplicate(_) => "validation",
        StoreError::Io(_) => "io",
        _ => "store",
    }
}

impl From<BacktestError> for Failure {
    fn from(e: BacktestError) -> Self {
        let category = match &e {
            BacktestError::Config(_) => "config",
            BacktestError::MissingPrice { .. } => "data",
            BacktestError::Store(s) => store_category(s),
            BacktestError::Ingest(_) | BacktestError::Csv(_) => "ingest",
            BacktestError::Io(_) => "io",
            _ => "run",
        };
        Failure::new(category, e.to_string())
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        Failure::new(store_category(&e), e.to_string())
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Store(s) => s.into(),
            IngestError::Io(_) => Failure::new("io", e.to_string()),
            _ => Failure::new("ingest", e.to_string()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let category = if e.chain().any(|c| c.downcast_ref::<io::Error>().is_some()) {
            "io"
        } else {
            "internal"
        };
        Failure::new(category, format!("{e:#}"))
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(io::stderr)
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let line = serde_json::json!({ "error": f.category, "message": f.message });
            eprintln!("{line}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> CmdResult {
    let root = cli.run_dir;
    match cli.command {
        Command::Ingest {
            run,
            prices,
            minute_prices,
            holdings,
            news,
        } => ingest(&root, &run, prices, minute_prices, holdings, news),
        Command::Fixtures {
            days,
            tickers,
            seed,
            agents,
            out,
        } => write_fixtures(days, &tickers, seed, agents, &out),
        Command::Train { config } => backtest(&root, &config, Phase::Train),
        Command::Test { config } => backtest(&root, &config, Phase::Test),
        Command::Query {
            run,
            agent,
            layer,
            k,
            prompt,
            at,
            json,
        } => query(&root, &run, &agent, layer, k, &prompt, at, json),
        Command::Report { run, format } => report(&root, &run, format),
        Command::ExportDebates { run, out } => export_debates(&root, &run, out.as_deref()),
    }
}

fn run_path(root: &Path, run: &str) -> Result<PathBuf, Failure> {
    let ok = !run.is_empty()
        && !run.starts_with('.')
        && run.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
    if !ok {
        return Err(Failure::new("usage", format!("run id {run:?} must be a [A-Za-z0-9._-] name")));
    }
    Ok(root.join(run))
}

fn existing_run(root: &Path, run: &str) -> Result<PathBuf, Failure> {
    let dir = run_path(root, run)?;
    if !dir.is_dir() {
        return Err(Failure::new("not_found", format!("no run directory {}", dir.display())));
    }
    Ok(dir)
}

/// Writes to stdout; a reader that hung up early (`| head`) is not an error.
fn emit(bytes: &[u8]) -> CmdResult {
    match io::stdout().lock().write_all(bytes) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => {
            Err(Failure::new("io", format!("writing stdout: {e}")))
        }
        _ => Ok(()),
    }
}

fn print_json(value: &impl Serialize) -> CmdResult {
    let text = serde_json::to_string_pretty(value).context("serializing output")?;
    emit(format!("{text}\n").as_bytes())
}

fn ingest(
    root: &Path,
    run: &str,
    prices: Option<PathBuf>,
    minute_prices: Option<PathBuf>,
    holdings: Option<PathBuf>,
    news: Option<PathBuf>,
) -> CmdResult {
    if prices.is_none() && minute_prices.is_none() && holdings.is_none() && news.is_none() {
        return Err(Failure::new(
            "usage",
            "nothing to ingest; pass --prices, --minute-prices, --holdings or --news",
        ));
    }
    let dir = run_path(root, run)?;
    let _lock = RunLock::acquire(&dir)?;
    let mut store = Store::open(&dir)?;
    let mut summary = serde_json::Map::new();
    let mut rejected = 0;
    let inputs = [
        ("prices", prices, Some(Frequency::Daily)),
        ("minute_prices", minute_prices, Some(Frequency::Minute)),
        ("holdings", holdings, None),
        ("news", news, None),
    ];
    for (name, path, freq) in inputs {
        let Some(path) = path else { continue };
        let report = match (name, freq) {
            (_, Some(f)) => ingest_prices(&mut store, &path, f)?,
            ("holdings", _) => ingest_holdings(&mut store, &path)?,
            _ => ingest_news(&mut store, &path)?,
        };
        rejected += report.rejected.len();
        summary.insert(name.into(), serde_json::to_value(&report).context("serializing report")?);
    }
    print_json(&summary)?;
    if rejected > 0 {
        return Err(Failure::new("validation", format!("{rejected} rows rejected")));
    }
    Ok(())
}

fn write_fixtures(days: usize, tickers: &[String], seed: u64, agents: usize, out: &Path) -> CmdResult {
    if days < 2 {
        return Err(Failure::new("usage", "--days must be at least 2"));
    }
    if tickers.is_empty() || tickers.iter().any(|t| t.trim().is_empty()) {
        return Err(Failure::new("usage", "--tickers must list at least one ticker"));
    }
    if agents == 0 {
        return Err(Failure::new("usage", "--agents must be at least 1"));
    }
    let names: Vec<&str> = tickers.iter().map(|t| t.trim()).collect();
    let spec = FixtureSpec::new(days, &names, seed);
    fixtures::generate(&spec)
        .write_to(out)
        .with_context(|| format!("writing fixtures to {}", out.display()))?;

    // Train on the first two thirds, test on the rest with the trained memory.
    let dates = spec.trading_days();
    let split = (dates.len() * 2 / 3).clamp(1, dates.len() - 1);
    let mut train = spec.sample_config("fixture-train", agents);
    train.end = Some(dates[split - 1]);
    let mut test = spec.sample_config("fixture-test", agents);
    test.phase = Phase::Test;
    test.start = Some(dates[split]);
    test.inherit_from = Some(train.run_id.clone());
    for (name, config) in [("train.json", &train), ("test.json", &test)] {
        let body = serde_json::to_string_pretty(config).context("serializing config")? + "\n";
        fs::write(out.join(name), body).with_context(|| format!("writing {name}"))?;
    }
    emit(format!("{}\n", out.display()).as_bytes())
}

fn backtest(root: &Path, config_path: &Path, phase: Phase) -> CmdResult {
    let config = RunConfig::load(config_path)?;
    if config.phase != phase {
        return Err(Failure::new(
            "config",
            format!("{} is a {} config; use the `{}` subcommand", config_path.display(), config.phase, config.phase),
        ));
    }
    let mut sim = Simulation::open(config, root)?;
    let summary = sim.run()?;
    print_json(&serde_json::json!({
        "run_id": summary.metrics.run_id,
        "config_hash": summary.metrics.config_hash,
        "days": summary.days,
        "aggregate": summary.metrics.aggregate,
        "reports": summary.report_paths,
        "audit_violations": sim.auditor().violations.len(),
    }))
}

#[derive(Serialize)]
struct QueryRow<'a> {
    rank: usize,
    id: &'a str,
    timestamp: NaiveDateTime,
    gamma: f64,
    recency: f64,
    relevancy: f64,
    importance: f64,
    bonus: f64,
    access_count: u32,
    text: &'a str,
}

#[allow(clippy::too_many_arguments)]
fn query(
    root: &Path,
    run: &str,
    agent: &str,
    layer: LayerKind,
    k: usize,
    prompt: &str,
    at: Option<NaiveDateTime>,
    json: bool,
) -> CmdResult {
    if k == 0 {
        return Err(Failure::new("usage", "--k must be at least 1"));
    }
    let dir = existing_run(root, run)?;
    // Read-only: retrieval bumps counters in memory, nothing is written back.
    let mut store = Store::load(&dir)?;
    let config_file = dir.join(CONFIG_FILE);
    let config = if config_file.is_file() {
        Some(RunConfig::load(&config_file)?)
    } else {
        None
    };
    let memory = config.as_ref().map_or_else(MemoryConfig::default, |c| c.memory.clone());
    let embedding = config.map(|c| c.embedding).unwrap_or_default();

    let newest = store
        .memory(agent)
        .and_then(|space| space.events().map(|e| e.timestamp).max());
    let hits: Vec<ScoredMemory> = match at.or(newest) {
        Some(now) => {
            let embedder = build_embedder(&embedding)?;
            store.retrieve_top_k_text(agent, layer, prompt, k, now, &memory, embedder.as_ref())?
        }
        None => Vec::new(),
    };
    let rows: Vec<QueryRow> = hits
        .iter()
        .enumerate()
        .map(|(i, h)| QueryRow {
            rank: i + 1,
            id: &h.event.id.0,
            timestamp: h.event.timestamp,
            gamma: h.score.gamma,
            recency: h.score.recency,
            relevancy: h.score.relevancy,
            importance: h.score.importance,
            bonus: h.score.bonus,
            access_count: h.event.access_count,
            text: &h.event.text,
        })
        .collect();
    if json {
        return print_json(&rows);
    }
    let mut table = Vec::new();
    write_table(&mut table, &rows).context("formatting table")?;
    emit(&table)
}

fn write_table(out: &mut impl Write, rows: &[QueryRow]) -> io::Result<()> {
    writeln!(
        out,
        "{:>4}  {:<24}  {:<19}  {:>8}  {:>7}  {:>7}  {:>7}  {:>5}  text",
        "rank", "id", "timestamp", "gamma", "rec", "rel", "imp", "bonus"
    )?;
    for r in rows {
        let text: String = r.text.chars().take(60).collect();
        writeln!(
            out,
            "{:>4}  {:<24}  {:<19}  {:>8.3}  {:>7.4}  {:>7.4}  {:>7.4}  {:>5.1}  {}",
            r.rank,
            r.id,
            r.timestamp.format("%Y-%m-%d %H:%M:%S"),
            r.gamma,
            r.recency,
            r.relevancy,
            r.importance,
            r.bonus,
            text.replace('\n', " ")
        )?;
    }
    Ok(())
}

fn report(root: &Path, run: &str, format: ReportFormat) -> CmdResult {
    let dir = existing_run(root, run)?;
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| Failure::new("not_found", format!("{}: {e}", path.display())))?;
    let report: MetricsReport = serde_json::from_str(&text)
        .map_err(|e| Failure::new("corrupt_report", format!("{}: {e}", path.display())))?;
    match format {
        ReportFormat::Json => print_json(&report),
        ReportFormat::Csv => emit(report_csv(&report)?.as_bytes()),
    }
}

fn export_debates(root: &Path, run: &str, out: Option<&Path>) -> CmdResult {
    let dir = existing_run(root, run)?;
    let mut body = String::new();
    for stored in read_log::<CognitionRecord>(&dir.join(COGNITION_LOG))? {
        if let CognitionRecord::Debate { message, .. } = stored.record {
            body += &serde_json::to_string(&message).context("serializing message")?;
            body.push('\n');
        }
    }
    match out {
        Some(path) => {
            if path.starts_with(root) && !path.starts_with(&dir) {
                return Err(Failure::new("usage", "refusing to write into another run's directory"));
            }
            fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
        }
        None => return emit(body.as_bytes()),
    }
    Ok(())
}
