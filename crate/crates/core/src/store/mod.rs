//! Append-only data warehouse.
//!
//! Two JSON-lines logs per run directory:
//!
//! * `raw_input.jsonl` holds the Raw Input schema (price bars, news, fund holdings).
//! * `cognition.jsonl` holds the Agents' Cognition schema (memory events and
//!   their state changes, tombstones for purges, flagged reflections,
//!   receiver-tagged debate messages).
//!
//! Every line is `{"id": <u64>, "record": {"kind": ..., ...}}`, ids strictly
//! increasing per log. Nothing is rewritten in place; state is the fold of the
//! log, and [`Store::load`] rebuilds it (including the in-memory exact cosine
//! index, which is just the materialized memory spaces).

mod log;
mod records;

pub use log::{read_log, RunLock};
pub use records::{
    AnyRecord, CognitionRecord, Direction, Frequency, HoldingRecord, NewsCategory, NewsItem,
    PriceBar, RawRecord, RecordKind, Stored,
};

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use thiserror::Error;

use crate::agent::{Reflection, ReflectionFlag};
use crate::debate::DebateMessage;
use crate::embedding::{Embedder, EmbeddingVector};
use crate::memory::{
    LayerKind, MemoryConfig, MemoryError, MemoryEvent, MemoryId, MemorySpace, NewMemory,
    ScoredMemory, SweepReport,
};
use log::LogWriter;

pub const RAW_LOG: &str = "raw_input.jsonl";
pub const COGNITION_LOG: &str = "cognition.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("duplicate record: {0}")]
    Duplicate(String),
    #[error("invalid range: {from} is after {to}")]
    InvalidRange {
        from: NaiveDateTime,
        to: NaiveDateTime,
    },
    #[error("corrupt log {file} at line {line}: {reason}")]
    Corrupt {
        file: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("run directory {0} is locked by another process")]
    Locked(PathBuf),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Materialized Raw Input schema.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawState {
    prices: BTreeMap<(Frequency, String), BTreeMap<NaiveDateTime, PriceBar>>,
    news: Vec<NewsItem>,
    holdings: BTreeMap<String, Vec<HoldingRecord>>,
    seen: HashSet<String>,
}

impl RawState {
    fn dedup_key(record: &RawRecord) -> String {
        match record {
            RawRecord::PriceBar(b) => format!("p|{:?}|{}|{}", b.frequency, b.ticker, b.timestamp),
            RawRecord::NewsItem(n) => format!("n|{}|{}|{}", n.ticker, n.timestamp, n.headline),
            RawRecord::HoldingRecord(h) => format!(
                "h|{}|{}|{}|{}",
                h.fund, h.ticker, h.timestamp, h.shares_delta
            ),
        }
    }

    fn apply(&mut self, record: &RawRecord) {
        self.seen.insert(Self::dedup_key(record));
        match record {
            RawRecord::PriceBar(b) => {
                self.prices
                    .entry((b.frequency, b.ticker.clone()))
                    .or_default()
                    .insert(b.timestamp, b.clone());
            }
            RawRecord::NewsItem(n) => self.news.push(n.clone()),
            RawRecord::HoldingRecord(h) => {
                self.holdings.entry(h.ticker.clone()).or_default().push(h.clone())
            }
        }
    }

    pub fn contains(&self, record: &RawRecord) -> bool {
        self.seen.contains(&Self::dedup_key(record))
    }

    pub fn daily_bars(&self, ticker: &str) -> impl Iterator<Item = &PriceBar> {
        self.prices
            .get(&(Frequency::Daily, ticker.to_string()))
            .into_iter()
            .flat_map(|m| m.values())
    }

    pub fn daily_bar(&self, ticker: &str, date: NaiveDate) -> Option<&PriceBar> {
        self.daily_bars(ticker).find(|b| b.timestamp.date() == date)
    }

    pub fn daily_close(&self, ticker: &str, date: NaiveDate) -> Option<f64> {
        self.daily_bar(ticker, date).map(|b| b.close)
    }

    /// Most recent daily close on or before `date`.
    pub fn last_close_on_or_before(&self, ticker: &str, date: NaiveDate) -> Option<(NaiveDate, f64)> {
        self.prices
            .get(&(Frequency::Daily, ticker.to_string()))?
            .range(..=date.and_hms_opt(23, 59, 59)?)
            .next_back()
            .map(|(ts, b)| (ts.date(), b.close))
    }

    /// Up to `n` most recent daily bars timestamped at or before `at`, oldest first.
    pub fn recent_daily_bars(&self, ticker: &str, at: NaiveDateTime, n: usize) -> Vec<&PriceBar> {
        let Some(series) = self.prices.get(&(Frequency::Daily, ticker.to_string())) else {
            return Vec::new();
        };
        let mut bars: Vec<&PriceBar> = series.range(..=at).rev().take(n).map(|(_, b)| b).collect();
        bars.reverse();
        bars
    }

    pub fn tickers(&self) -> BTreeSet<String> {
        self.prices
            .keys()
            .filter(|(f, _)| *f == Frequency::Daily)
            .map(|(_, t)| t.clone())
            .collect()
    }

    pub fn trading_dates(&self) -> BTreeSet<NaiveDate> {
        self.prices
            .iter()
            .filter(|((f, _), _)| *f == Frequency::Daily)
            .flat_map(|(_, m)| m.keys().map(|ts| ts.date()))
            .collect()
    }

    pub fn holdings_on(&self, ticker: &str, date: NaiveDate) -> Vec<&HoldingRecord> {
        self.holdings
            .get(ticker)
            .into_iter()
            .flatten()
            .filter(|h| h.timestamp.date() == date)
            .collect()
    }

    pub fn news(&self) -> &[NewsItem] {
        &self.news
    }

    pub fn minute_bar_count(&self) -> usize {
        self.prices
            .iter()
            .filter(|((f, _), _)| *f == Frequency::Minute)
            .map(|(_, m)| m.len())
            .sum()
    }
}

/// Materialized Agents' Cognition schema.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CognitionState {
    pub memories: BTreeMap<String, MemorySpace>,
    pub reflections: Vec<Stored<Reflection>>,
    pub debates: Vec<Stored<DebateMessage>>,
    immediate_keys: BTreeSet<(String, String, NaiveDate)>,
}

impl CognitionState {
    fn space(&mut self, agent_id: &str) -> &mut MemorySpace {
        self.memories
            .entry(agent_id.to_string())
            .or_insert_with(|| MemorySpace::new(agent_id))
    }

    fn apply(&mut self, id: u64, record: &CognitionRecord) -> Result<(), StoreError> {
        match record {
            CognitionRecord::Memory { event } => self.space(&event.agent_id).restore(event.clone()),
            CognitionRecord::MemoryUpdate { agent_id, states, .. } => {
                let space = self.space(agent_id);
                for s in states {
                    space.apply_state(s)?;
                }
            }
            CognitionRecord::MemoryTombstone { agent_id, ids, .. } => {
                let space = self.space(agent_id);
                for mid in ids {
                    space.tombstone(mid);
                }
            }
            CognitionRecord::Reflection { reflection, .. } => {
                if let Some(key) = immediate_key(reflection) {
                    self.immediate_keys.insert(key);
                }
                self.reflections.push(Stored {
                    id,
                    record: reflection.clone(),
                });
            }
            CognitionRecord::Debate { message, .. } => self.debates.push(Stored {
                id,
                record: message.clone(),
            }),
        }
        Ok(())
    }

    pub fn has_immediate_reflection(&self, agent_id: &str, ticker: &str, date: NaiveDate) -> bool {
        self.immediate_keys
            .contains(&(agent_id.to_string(), ticker.to_string(), date))
    }
}

fn immediate_key(r: &Reflection) -> Option<(String, String, NaiveDate)> {
    match (r.flag, &r.ticker) {
        (ReflectionFlag::Immediate, Some(t)) => {
            Some((r.agent_id.clone(), t.clone(), r.timestamp.date()))
        }
        _ => None,
    }
}

type WindowIndex = BTreeMap<(RecordKind, String), BTreeMap<(NaiveDateTime, u64), usize>>;

#[derive(Default)]
pub struct Store {
    dir: Option<PathBuf>,
    raw_writer: Option<LogWriter>,
    cognition_writer: Option<LogWriter>,
    raw: RawState,
    cognition: CognitionState,
    raw_log: Vec<Stored<RawRecord>>,
    cognition_log: Vec<Stored<CognitionRecord>>,
    windows: WindowIndex,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store")
            .field("dir", &self.dir)
            .field("raw_records", &self.raw_log.len())
            .field("cognition_records", &self.cognition_log.len())
            .finish()
    }
}

impl Store {
    /// A store with no backing files.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Replays existing logs in `dir` (creating it if needed) and appends to them.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut store = Self::load(dir)?;
        store.raw_writer = Some(LogWriter::open(&dir.join(RAW_LOG))?);
        store.cognition_writer = Some(LogWriter::open(&dir.join(COGNITION_LOG))?);
        store.dir = Some(dir.to_path_buf());
        Ok(store)
    }

    /// Read-only replay of the logs in `dir`. Missing logs are treated as empty.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref();
        let mut store = Self::in_memory();
        for line in read_log::<RawRecord>(&dir.join(RAW_LOG))? {
            store.replay_raw(line)?;
        }
        for line in read_log::<CognitionRecord>(&dir.join(COGNITION_LOG))? {
            store.replay_cognition(line)?;
        }
        Ok(store)
    }

    /// Replays cognition records only, for checkpoint comparisons.
    pub fn replay_cognition_log(path: impl AsRef<Path>) -> Result<CognitionState, StoreError> {
        let mut store = Self::in_memory();
        for line in read_log::<CognitionRecord>(path.as_ref())? {
            store.replay_cognition(line)?;
        }
        Ok(store.cognition)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn raw(&self) -> &RawState {
        &self.raw
    }

    pub fn cognition(&self) -> &CognitionState {
        &self.cognition
    }

    pub fn raw_records(&self) -> &[Stored<RawRecord>] {
        &self.raw_log
    }

    pub fn cognition_records(&self) -> &[Stored<CognitionRecord>] {
        &self.cognition_log
    }

    fn index(&mut self, kind: RecordKind, key: &str, ts: NaiveDateTime, id: u64, pos: usize) {
        self.windows
            .entry((kind, key.to_string()))
            .or_default()
            .insert((ts, id), pos);
    }

    fn replay_raw(&mut self, line: Stored<RawRecord>) -> Result<(), StoreError> {
        if let Some(last) = self.raw_log.last() {
            if line.id <= last.id {
                return Err(StoreError::SchemaViolation(format!(
                    "raw log ids not increasing at id {}",
                    line.id
                )));
            }
        }
        self.raw.apply(&line.record);
        let pos = self.raw_log.len();
        let (kind, ts) = (line.record.kind(), line.record.timestamp());
        let key = line.record.ticker().to_string();
        self.index(kind, &key, ts, line.id, pos);
        self.raw_log.push(line);
        Ok(())
    }

    fn replay_cognition(&mut self, line: Stored<CognitionRecord>) -> Result<(), StoreError> {
        if let Some(last) = self.cognition_log.last() {
            if line.id <= last.id {
                return Err(StoreError::SchemaViolation(format!(
                    "cognition log ids not increasing at id {}",
                    line.id
                )));
            }
        }
        self.cognition.apply(line.id, &line.record)?;
        self.push_cognition_line(line);
        Ok(())
    }

    fn push_cognition_line(&mut self, line: Stored<CognitionRecord>) {
        let pos = self.cognition_log.len();
        let (kind, ts) = (line.record.kind(), line.record.timestamp());
        let key = line.record.agent_id().to_string();
        self.index(kind, &key, ts, line.id, pos);
        self.cognition_log.push(line);
    }

    /// Validates, de-duplicates and appends a raw record.
    pub fn append_raw(&mut self, record: RawRecord) -> Result<u64, StoreError> {
        record.validate()?;
        if self.raw.contains(&record) {
            return Err(StoreError::Duplicate(RawState::dedup_key(&record)));
        }
        let id = self.raw_log.last().map_or(1, |s| s.id + 1);
        let line = Stored { id, record };
        if let Some(w) = self.raw_writer.as_mut() {
            w.append(&line)?;
        }
        self.replay_raw(line)?;
        Ok(id)
    }

    /// Appends a cognition record and folds it into the materialized state.
    pub fn append_cognition(&mut self, record: CognitionRecord) -> Result<u64, StoreError> {
        record.validate()?;
        let id = self.next_cognition_id();
        let line = Stored { id, record };
        self.cognition.apply(id, &line.record)?;
        self.write_cognition(line)?;
        Ok(id)
    }

    fn next_cognition_id(&self) -> u64 {
        self.cognition_log.last().map_or(1, |s| s.id + 1)
    }

    /// Writes a record whose effect has already been applied to the state.
    fn write_cognition(&mut self, line: Stored<CognitionRecord>) -> Result<(), StoreError> {
        if let Some(w) = self.cognition_writer.as_mut() {
            w.append(&line)?;
        }
        self.push_cognition_line(line);
        Ok(())
    }

    fn log_applied(&mut self, record: CognitionRecord) -> Result<u64, StoreError> {
        let id = self.next_cognition_id();
        self.write_cognition(Stored { id, record })?;
        Ok(id)
    }

    pub fn memory(&self, agent_id: &str) -> Option<&MemorySpace> {
        self.cognition.memories.get(agent_id)
    }

    pub fn insert_memory(
        &mut self,
        agent_id: &str,
        memory: NewMemory,
        config: &MemoryConfig,
    ) -> Result<MemoryEvent, StoreError> {
        let event = self.cognition.space(agent_id).insert(memory, config);
        self.log_applied(CognitionRecord::Memory {
            event: event.clone(),
        })?;
        Ok(event)
    }

    pub fn retrieve_top_k(
        &mut self,
        agent_id: &str,
        layer: LayerKind,
        prompt: &EmbeddingVector,
        k: usize,
        now: NaiveDateTime,
        config: &MemoryConfig,
    ) -> Result<Vec<ScoredMemory>, StoreError> {
        let hits = self
            .cognition
            .space(agent_id)
            .retrieve_top_k(layer, prompt, k, now, config)?;
        if !hits.is_empty() {
            self.log_applied(CognitionRecord::MemoryUpdate {
                agent_id: agent_id.to_string(),
                timestamp: now,
                states: hits.iter().map(|h| h.event.state()).collect(),
            })?;
        }
        Ok(hits)
    }

    /// Text-prompt variant of [`Store::retrieve_top_k`].
    #[allow(clippy::too_many_arguments)]
    pub fn retrieve_top_k_text(
        &mut self,
        agent_id: &str,
        layer: LayerKind,
        prompt_text: &str,
        k: usize,
        now: NaiveDateTime,
        config: &MemoryConfig,
        embedder: &dyn Embedder,
    ) -> Result<Vec<ScoredMemory>, StoreError> {
        let prompt = embedder.embed(prompt_text).map_err(MemoryError::from)?;
        self.retrieve_top_k(agent_id, layer, &prompt, k, now, config)
    }

    pub fn bump_access(
        &mut self,
        agent_id: &str,
        ids: &[MemoryId],
        at: NaiveDateTime,
    ) -> Result<(), StoreError> {
        let states = self.cognition.space(agent_id).bump_access(ids);
        if !states.is_empty() {
            self.log_applied(CognitionRecord::MemoryUpdate {
                agent_id: agent_id.to_string(),
                timestamp: at,
                states,
            })?;
        }
        Ok(())
    }

    pub fn maintenance_sweep(
        &mut self,
        agent_id: &str,
        now: NaiveDateTime,
        config: &MemoryConfig,
    ) -> Result<SweepReport, StoreError> {
        let space = self.cognition.space(agent_id);
        let report = space.maintenance_sweep(now, config)?;
        let states: Vec<_> = report
            .promoted
            .iter()
            .map(|t| &t.id)
            .chain(&report.pinned)
            .filter_map(|id| space.get(id).map(MemoryEvent::state))
            .collect();
        if !states.is_empty() {
            self.log_applied(CognitionRecord::MemoryUpdate {
                agent_id: agent_id.to_string(),
                timestamp: now,
                states,
            })?;
        }
        if !report.purged.is_empty() {
            self.log_applied(CognitionRecord::MemoryTombstone {
                agent_id: agent_id.to_string(),
                timestamp: now,
                ids: report.purged.clone(),
            })?;
        }
        Ok(report)
    }

    /// Exact top-n cosine search over one agent's layer.
    pub fn similarity_search(
        &self,
        agent_id: &str,
        layer: LayerKind,
        query: &EmbeddingVector,
        n: usize,
    ) -> Result<Vec<(MemoryEvent, f64)>, StoreError> {
        match self.memory(agent_id) {
            Some(space) => Ok(space.similarity_search(layer, query, n)?),
            None => Ok(Vec::new()),
        }
    }

    /// Records of `kind` for `key` (ticker for raw kinds, agent id for
    /// cognition kinds) with `from <= timestamp < to`, chronological.
    pub fn query_window(
        &self,
        kind: RecordKind,
        key: &str,
        from: NaiveDateTime,
        to: NaiveDateTime,
    ) -> Result<Vec<Stored<AnyRecord>>, StoreError> {
        if from > to {
            return Err(StoreError::InvalidRange { from, to });
        }
        let Some(series) = self.windows.get(&(kind, key.to_string())) else {
            return Ok(Vec::new());
        };
        Ok(series
            .range((from, 0)..(to, 0))
            .map(|(&(_, id), &pos)| Stored {
                id,
                record: if kind.is_raw() {
                    AnyRecord::Raw(self.raw_log[pos].record.clone())
                } else {
                    AnyRecord::Cognition(self.cognition_log[pos].record.clone())
                },
            })
            .collect())
    }
}
