use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

use super::audit::ContextAuditor;
use super::config::{CoreSpec, EmbeddingSpec, RunConfig};
use super::metrics::{compute_metrics, emit_report, MetricsReport, ReportFormat};
use super::BacktestError;
use crate::agent::{
    build_context, execute, extended_reflection, immediate_reflection, Agent, AgentError,
    ContextOptions, ExecutionOutcome, PeriodSpan, PositionOutcome, Recommendation, TradeAction,
    TradeExecution,
};
use crate::debate::{
    convene, exchange_round, finalize, is_eligible, Cores, Participant, ReflectionSummary,
};
use crate::decision::{DecisionContext, DecisionCore, DecisionError, Phase, RuleBasedCore};
use crate::embedding::{Embedder, HashingEmbedder};
use crate::market_data::{
    covers, ingest_holdings, ingest_news, ingest_prices, news_memories, IngestReport, MARKET_WIDE,
};
use crate::memory::SweepReport;
use crate::store::{CognitionRecord, Frequency, RunLock, Store, COGNITION_LOG};

pub const DECISION_TIME: (u32, u32) = (16, 0);
pub const DEBATE_TIME: (u32, u32) = (16, 30);
pub const TEST_EXECUTION_TIME: (u32, u32) = (16, 45);
pub const SWEEP_TIME: (u32, u32) = (17, 0);
pub const EXTENDED_TIME: (u32, u32) = (17, 30);

pub const AUDIT_LOG: &str = "audit.jsonl";
pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const CONFIG_FILE: &str = "config.json";

fn at(date: NaiveDate, (h, m): (u32, u32)) -> NaiveDateTime {
    date.and_time(NaiveTime::from_hms_opt(h, m, 0).expect("valid time"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub agent_id: String,
    pub ticker: String,
    pub decided_at: NaiveDateTime,
    pub action: TradeAction,
    pub rationale: String,
    /// Post-debate recommendation, when the ticker was debated.
    pub revised: Option<TradeAction>,
    pub executed: TradeAction,
    pub outcome: ExecutionOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub agent_id: String,
    pub ticker: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub ticker: String,
    pub participants: Vec<String>,
    pub rounds: u32,
    pub messages: usize,
    pub revised: BTreeMap<String, TradeAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayReport {
    pub date: NaiveDate,
    pub phase: Phase,
    pub news_released: usize,
    pub decisions: Vec<DecisionRecord>,
    pub gaps: Vec<Gap>,
    pub sessions: Vec<SessionSummary>,
    pub sweeps: Vec<SweepReport>,
    pub extended_reflections: Vec<String>,
    pub trades: usize,
    pub bought: f64,
    pub sold: f64,
    pub values: BTreeMap<String, f64>,
}

/// Result of a whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub days: usize,
    pub metrics: MetricsReport,
    pub report_paths: Vec<PathBuf>,
}

/// Summary of what a fresh run ingested from its configured data paths.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub prices: Option<IngestReport>,
    pub minute_prices: Option<IngestReport>,
    pub holdings: Option<IngestReport>,
    pub news: Option<IngestReport>,
}

struct Pending {
    agent: usize,
    ctx: DecisionContext,
    rec: Recommendation,
    position: PositionOutcome,
    outcome: Option<ExecutionOutcome>,
    summary: Option<ReflectionSummary>,
    revised: Option<Recommendation>,
}

type ContextObserver = Box<dyn FnMut(&DecisionContext) + Send>;

/// One run: a roster of agents stepping through trading days.
pub struct Simulation {
    config: RunConfig,
    config_hash: String,
    run_dir: Option<PathBuf>,
    _lock: Option<RunLock>,
    store: Store,
    agents: Vec<Agent>,
    cores: Cores,
    embedder: Box<dyn Embedder>,
    options: ContextOptions,
    dates: Vec<NaiveDate>,
    period_start: Option<NaiveDate>,
    next_day: usize,
    news_order: Vec<usize>,
    news_cursor: usize,
    release_after: Option<NaiveDateTime>,
    auditor: ContextAuditor,
    observer: Option<ContextObserver>,
    audit: Option<File>,
    ingest: IngestSummary,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation")
            .field("run_id", &self.config.run_id)
            .field("phase", &self.config.phase)
            .field("days", &self.dates.len())
            .field("next_day", &self.next_day)
            .finish()
    }
}

pub fn build_embedder(spec: &EmbeddingSpec) -> Result<Box<dyn Embedder>, BacktestError> {
    match spec {
        EmbeddingSpec::Hashing { dimension } => Ok(Box::new(HashingEmbedder::new(*dimension))),
        #[cfg(feature = "remote")]
        EmbeddingSpec::Http {
            endpoint,
            dimension,
            timeout_secs,
        } => Ok(Box::new(crate::embedding::HttpEmbedder::new(
            endpoint.clone(),
            *dimension,
            std::time::Duration::from_secs(*timeout_secs),
        ))),
        #[cfg(not(feature = "remote"))]
        EmbeddingSpec::Http { .. } => Err(BacktestError::Config(
            "http embedding requires the `remote` feature".into(),
        )),
    }
}

fn build_core(spec: &CoreSpec) -> Result<Arc<dyn DecisionCore>, BacktestError> {
    match spec {
        CoreSpec::Rule(cfg) => Ok(Arc::new(RuleBasedCore::new(cfg.clone()))),
        #[cfg(feature = "remote")]
        CoreSpec::Llm(cfg) => Ok(Arc::new(crate::decision::LlmCore::from_env(cfg.clone())?)),
        #[cfg(not(feature = "remote"))]
        CoreSpec::Llm(_) => Err(BacktestError::Config(
            "the llm core requires the `remote` feature".into(),
        )),
    }
}

fn ingest_configured(store: &mut Store, config: &RunConfig) -> Result<IngestSummary, BacktestError> {
    let d = &config.data;
    Ok(IngestSummary {
        prices: d
            .prices
            .as_deref()
            .map(|p| ingest_prices(store, p, Frequency::Daily))
            .transpose()?,
        minute_prices: d
            .minute_prices
            .as_deref()
            .map(|p| ingest_prices(store, p, Frequency::Minute))
            .transpose()?,
        holdings: d.holdings.as_deref().map(|p| ingest_holdings(store, p)).transpose()?,
        news: d.news.as_deref().map(|p| ingest_news(store, p)).transpose()?,
    })
}

impl Simulation {
    /// A run over an existing store, without files. Configured data paths
    /// are still ingested.
    pub fn with_store(config: RunConfig, mut store: Store) -> Result<Self, BacktestError> {
        config.validate()?;
        let ingest = ingest_configured(&mut store, &config)?;
        Self::assemble(config, store, None, None, ingest)
    }

    /// Creates `runs_root/<run_id>`, locks it, ingests the configured data and,
    /// for a test run, imports the trained memory of `inherit_from`.
    pub fn open(config: RunConfig, runs_root: &Path) -> Result<Self, BacktestError> {
        config.validate()?;
        let run_dir = runs_root.join(&config.run_id);
        let lock = RunLock::acquire(&run_dir)?;
        let cognition = run_dir.join(COGNITION_LOG);
        if std::fs::metadata(&cognition).is_ok_and(|m| m.len() > 0) {
            return Err(BacktestError::Config(format!(
                "run directory {} already holds a run; use a new run_id",
                run_dir.display()
            )));
        }
        std::fs::write(run_dir.join(CONFIG_FILE), serde_json::to_string_pretty(&config)? + "\n")?;
        let mut store = Store::open(&run_dir)?;
        let ingest = ingest_configured(&mut store, &config)?;
        let mut release_after = None;
        if let Some(parent) = &config.inherit_from {
            release_after = Some(inherit(&mut store, &config, &runs_root.join(parent))?);
        }
        let audit = File::create(run_dir.join(AUDIT_LOG))?;
        let mut sim = Self::assemble(config, store, Some(run_dir), Some(lock), ingest)?;
        sim.audit = Some(audit);
        sim.release_after = release_after;
        Ok(sim)
    }

    fn assemble(
        config: RunConfig,
        store: Store,
        run_dir: Option<PathBuf>,
        lock: Option<RunLock>,
        ingest: IngestSummary,
    ) -> Result<Self, BacktestError> {
        let core = build_core(&config.core)?;
        let embedder = build_embedder(&config.embedding)?;
        let mut agents: Vec<Agent> = config
            .agents
            .iter()
            .map(|a| Agent::new(a.character(), a.initial_cash))
            .collect();
        agents.sort_by(|a, b| a.id().cmp(b.id()));
        let cores = agents
            .iter()
            .map(|a| (a.id().to_string(), Arc::clone(&core)))
            .collect();
        let dates: Vec<NaiveDate> = store
            .raw()
            .trading_dates()
            .into_iter()
            .filter(|d| config.start.is_none_or(|s| *d >= s) && config.end.is_none_or(|e| *d <= e))
            .collect();
        if dates.is_empty() {
            return Err(BacktestError::Config("no trading days with prices in the configured span".into()));
        }
        let mut news_order: Vec<usize> = (0..store.raw().news().len()).collect();
        news_order.sort_by_key(|&i| (store.raw().news()[i].timestamp, i));
        Ok(Self {
            config_hash: config.hash(),
            options: config.context_options(),
            period_start: dates.first().copied(),
            config,
            run_dir,
            _lock: lock,
            store,
            agents,
            cores,
            embedder,
            dates,
            next_day: 0,
            news_order,
            news_cursor: 0,
            release_after: None,
            auditor: ContextAuditor::default(),
            observer: None,
            audit: None,
            ingest,
        })
    }

    /// Replaces the decision core of every agent.
    pub fn set_core(&mut self, core: Arc<dyn DecisionCore>) {
        for c in self.cores.values_mut() {
            *c = Arc::clone(&core);
        }
    }

    pub fn set_context_observer(&mut self, observer: impl FnMut(&DecisionContext) + Send + 'static) {
        self.observer = Some(Box::new(observer));
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn run_dir(&self) -> Option<&Path> {
        self.run_dir.as_deref()
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn auditor(&self) -> &ContextAuditor {
        &self.auditor
    }

    pub fn ingest_summary(&self) -> &IngestSummary {
        &self.ingest
    }

    pub fn is_done(&self) -> bool {
        self.next_day >= self.dates.len()
    }

    fn release_news(&mut self, until: NaiveDateTime) -> Result<usize, BacktestError> {
        let characters: Vec<_> = self.agents.iter().map(|a| a.character.clone()).collect();
        let mut released = 0;
        while let Some(&i) = self.news_order.get(self.news_cursor) {
            let item = self.store.raw().news()[i].clone();
            if item.timestamp > until {
                break;
            }
            self.news_cursor += 1;
            if self.release_after.is_some_and(|t| item.timestamp <= t) {
                continue;
            }
            let memories = news_memories(&item, &characters, &self.config.universe, self.embedder.as_ref())
                .map_err(crate::memory::MemoryError::from)?;
            for (agent_id, memory) in memories {
                self.store.insert_memory(&agent_id, memory, &self.config.memory)?;
                released += 1;
            }
        }
        Ok(released)
    }

    fn close_on(&self, ticker: &str, date: NaiveDate) -> Option<f64> {
        self.store
            .raw()
            .last_close_on_or_before(ticker, date)
            .map(|(_, c)| c)
    }

    fn period_of(&self, date: NaiveDate) -> Option<PeriodSpan> {
        let start = self.period_start?;
        let n = (date - start).num_days().div_euclid(self.config.period_days);
        let s = start + Duration::days(n * self.config.period_days);
        Some(PeriodSpan {
            start: s,
            end: s + Duration::days(self.config.period_days - 1),
        })
    }

    fn reflect(
        &mut self,
        p: &Pending,
        decision: &Recommendation,
        outcome: &ExecutionOutcome,
        when: NaiveDateTime,
    ) -> Result<crate::agent::Reflection, BacktestError> {
        Ok(immediate_reflection(
            &mut self.store,
            &p.ctx,
            decision,
            outcome,
            p.position,
            when,
            &self.config.reflection,
            &self.config.memory,
            self.embedder.as_ref(),
        )?)
    }

    /// Runs the next trading day.
    pub fn step(&mut self) -> Result<Option<DayReport>, BacktestError> {
        let Some(&date) = self.dates.get(self.next_day) else {
            return Ok(None);
        };
        let report = self.run_day(date)?;
        self.next_day += 1;
        Ok(Some(report))
    }

    /// decide → execute → reflect (training), debates, execute → reflect
    /// (test), valuation, sweeps, and the extended reflection on the last
    /// trading day of each period.
    pub fn run_day(&mut self, date: NaiveDate) -> Result<DayReport, BacktestError> {
        let phase = self.config.phase;
        let t_decide = at(date, DECISION_TIME);
        let mut report = DayReport {
            date,
            phase,
            news_released: self.release_news(t_decide)?,
            decisions: Vec::new(),
            gaps: Vec::new(),
            sessions: Vec::new(),
            sweeps: Vec::new(),
            extended_reflections: Vec::new(),
            trades: 0,
            bought: 0.0,
            sold: 0.0,
            values: BTreeMap::new(),
        };
        let tickers: Vec<String> = self
            .config
            .universe
            .keys()
            .filter(|t| t.as_str() != MARKET_WIDE)
            .cloned()
            .collect();

        let mut pending: Vec<Pending> = Vec::new();
        for ai in 0..self.agents.len() {
            for ticker in &tickers {
                if !covers(&self.agents[ai].character, &self.config.universe, ticker) {
                    continue;
                }
                let agent_id = self.agents[ai].id().to_string();
                let ctx = match build_context(
                    &mut self.store,
                    &self.agents[ai],
                    ticker,
                    t_decide,
                    phase,
                    &self.options,
                    &self.config.memory,
                    self.embedder.as_ref(),
                ) {
                    Ok(ctx) => ctx,
                    Err(AgentError::MissingMarketData { .. }) => {
                        tracing::info!(%date, %ticker, agent = %agent_id, "no bar, skipping");
                        report.gaps.push(Gap {
                            agent_id,
                            ticker: ticker.clone(),
                            reason: "missing market data".into(),
                        });
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                self.auditor.inspect(&ctx);
                if let Some(obs) = self.observer.as_mut() {
                    obs(&ctx);
                }
                let rec = match self.cores[&agent_id].decide(&ctx) {
                    Ok(rec) => rec,
                    Err(e @ DecisionError::InsufficientHistory { .. }) => {
                        report.gaps.push(Gap {
                            agent_id,
                            ticker: ticker.clone(),
                            reason: e.to_string(),
                        });
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                let closes = &ctx.facts.recent_closes;
                let prev_close = (closes.len() >= 2).then(|| closes[closes.len() - 2].1);
                let position = PositionOutcome {
                    shares_held: self.agents[ai].portfolio.shares(ticker),
                    prev_close,
                    close: ctx.facts.close,
                };
                let mut p = Pending {
                    agent: ai,
                    ctx,
                    rec,
                    position,
                    outcome: None,
                    summary: None,
                    revised: None,
                };
                match phase {
                    Phase::Train => {
                        let outcome = execute(
                            p.rec.action,
                            &mut self.agents[ai].portfolio,
                            ticker,
                            p.ctx.facts.close,
                            t_decide,
                            &self.config.sizing,
                        )?;
                        let rec = p.rec.clone();
                        let reflection = self.reflect(&p, &rec, &outcome, t_decide)?;
                        p.summary = Some(ReflectionSummary::of(&reflection, p.rec.action));
                        p.outcome = Some(outcome);
                    }
                    Phase::Test => {
                        // Dry run to describe the planned trade to peers.
                        let mut scratch = self.agents[ai].portfolio.clone();
                        let planned = execute(
                            p.rec.action,
                            &mut scratch,
                            ticker,
                            p.ctx.facts.close,
                            t_decide,
                            &self.config.sizing,
                        )?;
                        let (volume, value) = planned
                            .trade()
                            .map_or((0, 0.0), |t| (t.shares, t.notional()));
                        p.summary = Some(ReflectionSummary {
                            timestamp: t_decide,
                            action: p.rec.action,
                            trade_volume: volume,
                            trade_value: value,
                            realized_return: p.position.daily_return(),
                        });
                        p.outcome = Some(planned);
                    }
                }
                pending.push(p);
            }
        }

        if self.config.debate.enabled {
            let t_debate = at(date, DEBATE_TIME);
            let mut sessions = Vec::new();
            for ticker in &tickers {
                let idx: Vec<usize> = (0..pending.len())
                    .filter(|&i| {
                        let p = &pending[i];
                        let intends = phase == Phase::Test
                            && p.outcome.as_ref().is_some_and(|o| o.trade().is_some());
                        p.ctx.ticker == *ticker && is_eligible(&self.agents[p.agent], ticker, date, intends)
                    })
                    .collect();
                let participants = idx
                    .iter()
                    .map(|&i| {
                        let p = &pending[i];
                        Participant::new(
                            p.ctx.clone(),
                            p.rec.clone(),
                            p.summary.clone().expect("summary set above"),
                        )
                    })
                    .collect();
                if let Some(session) = convene(date, ticker, t_debate, participants, &self.config.debate) {
                    sessions.push((session, idx));
                }
            }
            // Round r of every session completes before any round r + 1.
            for _ in 0..self.config.debate.max_rounds {
                for (session, _) in sessions.iter_mut() {
                    exchange_round(
                        session,
                        &mut self.store,
                        &self.cores,
                        &self.config.memory,
                        self.embedder.as_ref(),
                    )?;
                }
            }
            for (session, idx) in sessions {
                let revised = finalize(&session, &self.cores)?;
                for &i in &idx {
                    let id = self.agents[pending[i].agent].id();
                    pending[i].revised = revised.get(id).cloned();
                }
                report.sessions.push(SessionSummary {
                    session_id: session.session_id.clone(),
                    ticker: session.ticker.clone(),
                    participants: session.participant_ids().iter().map(|s| s.to_string()).collect(),
                    rounds: session.rounds_done,
                    messages: session.transcript.len(),
                    revised: revised.iter().map(|(k, v)| (k.clone(), v.action)).collect(),
                });
            }
        }

        if phase == Phase::Test {
            let t_exec = at(date, TEST_EXECUTION_TIME);
            for p in pending.iter_mut() {
                let decision = p.revised.clone().unwrap_or_else(|| p.rec.clone());
                let outcome = execute(
                    decision.action,
                    &mut self.agents[p.agent].portfolio,
                    &p.ctx.ticker,
                    p.ctx.facts.close,
                    t_exec,
                    &self.config.sizing,
                )?;
                p.outcome = Some(outcome);
            }
            for p in &pending {
                let decision = p.revised.clone().unwrap_or_else(|| p.rec.clone());
                let outcome = p.outcome.clone().expect("executed above");
                self.reflect(p, &decision, &outcome, t_exec)?;
            }
        }

        for p in pending {
            let outcome = p.outcome.expect("every pending decision has an outcome");
            if let Some(t) = outcome.trade() {
                report.trades += 1;
                match t.side {
                    crate::agent::Side::Buy => report.bought += t.notional(),
                    crate::agent::Side::Sell => report.sold += t.notional(),
                }
            }
            let executed = match phase {
                Phase::Train => p.rec.action,
                Phase::Test => p.revised.as_ref().map_or(p.rec.action, |r| r.action),
            };
            report.decisions.push(DecisionRecord {
                agent_id: self.agents[p.agent].id().to_string(),
                ticker: p.ctx.ticker.clone(),
                decided_at: t_decide,
                action: p.rec.action,
                rationale: p.rec.rationale,
                revised: p.revised.map(|r| r.action),
                executed,
                outcome,
            });
        }

        for ai in 0..self.agents.len() {
            let value = self.agents[ai]
                .portfolio
                .value_with(|t| self.close_on(t, date));
            self.agents[ai].valuations.push((date, value));
            report.values.insert(self.agents[ai].id().to_string(), value);
        }

        let t_sweep = at(date, SWEEP_TIME);
        for ai in 0..self.agents.len() {
            let id = self.agents[ai].id().to_string();
            report
                .sweeps
                .push(self.store.maintenance_sweep(&id, t_sweep, &self.config.memory)?);
        }

        let period = self.period_of(date).expect("run has a first date");
        let next_in_period = self
            .dates
            .iter()
            .find(|d| **d > date)
            .is_some_and(|d| period.contains(*d));
        if !next_in_period {
            let t_ext = at(date, EXTENDED_TIME);
            for ai in 0..self.agents.len() {
                match extended_reflection(
                    &mut self.store,
                    &self.agents[ai],
                    period,
                    t_ext,
                    &self.config.memory,
                    self.embedder.as_ref(),
                ) {
                    Ok(_) => report.extended_reflections.push(self.agents[ai].id().to_string()),
                    Err(AgentError::NoActivity { .. }) => {}
                    Err(e) => return Err(e.into()),
                }
            }
        }

        if let Some(f) = self.audit.as_mut() {
            serde_json::to_writer(&mut *f, &report)?;
            f.write_all(b"\n")?;
            f.flush()?;
        }
        Ok(report)
    }

    /// Metrics over the days run so far.
    pub fn metrics(&self) -> Result<MetricsReport, BacktestError> {
        let span = &self.dates[..self.next_day.max(1).min(self.dates.len())];
        let close = |t: &str, d: NaiveDate| self.close_on(t, d);
        let mut agents = BTreeMap::new();
        let mut all: Vec<TradeExecution> = Vec::new();
        let mut cash = 0.0;
        for a in &self.agents {
            agents.insert(
                a.id().to_string(),
                compute_metrics(a.initial_cash, &a.portfolio.ledger, &close, span)?,
            );
            all.extend(a.portfolio.ledger.iter().cloned());
            cash += a.initial_cash;
        }
        Ok(MetricsReport {
            run_id: self.config.run_id.clone(),
            config_hash: self.config_hash.clone(),
            phase: self.config.phase,
            start: span[0],
            end: span[span.len() - 1],
            agents,
            aggregate: compute_metrics(cash, &all, &close, span)?,
        })
    }

    /// Writes reports and the ledger into the run directory (if any).
    pub fn finish(&self) -> Result<RunSummary, BacktestError> {
        let metrics = self.metrics()?;
        let mut report_paths = Vec::new();
        if let Some(dir) = &self.run_dir {
            report_paths.push(emit_report(&metrics, dir, ReportFormat::Csv)?);
            report_paths.push(emit_report(&metrics, dir, ReportFormat::Json)?);
            let mut ledger = String::new();
            for a in &self.agents {
                for t in &a.portfolio.ledger {
                    ledger.push_str(&serde_json::to_string(&LedgerLine { agent_id: a.id(), trade: t })?);
                    ledger.push('\n');
                }
            }
            std::fs::write(dir.join(LEDGER_FILE), ledger)?;
        }
        Ok(RunSummary {
            days: self.next_day,
            metrics,
            report_paths,
        })
    }

    /// Runs every remaining day, then [`Simulation::finish`].
    pub fn run(&mut self) -> Result<RunSummary, BacktestError> {
        while self.step()?.is_some() {}
        self.finish()
    }
}

#[derive(Serialize)]
struct LedgerLine<'a> {
    agent_id: &'a str,
    trade: &'a TradeExecution,
}

/// Imports the final memory of a finished training run; returns the time
/// up to which that run already released news.
fn inherit(store: &mut Store, config: &RunConfig, parent_dir: &Path) -> Result<NaiveDateTime, BacktestError> {
    let report_path = parent_dir.join("report.json");
    let text = std::fs::read_to_string(&report_path).map_err(|e| {
        BacktestError::Config(format!(
            "cannot inherit from {}: {e} (has the training run finished?)",
            parent_dir.display()
        ))
    })?;
    let parent: MetricsReport = serde_json::from_str(&text)?;
    if parent.phase != Phase::Train {
        return Err(BacktestError::Config(format!("{} is not a training run", parent.run_id)));
    }
    if let Some(start) = config.start {
        if start <= parent.end {
            return Err(BacktestError::Config(format!(
                "test span starts {start}, before training ended {}",
                parent.end
            )));
        }
    }
    let parent_store = Store::load(parent_dir)?;
    let last = at(parent.end, EXTENDED_TIME);
    for spec in &config.agents {
        let Some(space) = parent_store.memory(&spec.id) else {
            continue;
        };
        for event in space.events() {
            store.append_cognition(CognitionRecord::Memory { event: event.clone() })?;
        }
        if !space.purged_ids().is_empty() {
            store.append_cognition(CognitionRecord::MemoryTombstone {
                agent_id: spec.id.clone(),
                timestamp: last,
                ids: space.purged_ids().iter().cloned().collect(),
            })?;
        }
    }
    Ok(at(parent.end, DECISION_TIME))
}
