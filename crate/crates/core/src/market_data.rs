//! File ingestion into the Raw Input schema.
//!
//! Prices: CSV `date,ticker,open,high,low,close,volume`.
//! Holdings: CSV `date,fund,ticker,shares,direction`.
//! News: JSON lines `{timestamp, ticker, headline, body}` plus an optional
//! `category` of `news`, `macro` or `strategy`; ticker `*` is market-wide.
//!
//! Date-only timestamps are stamped at the 16:00 close.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{assign_layer, TraderCharacter};
use crate::embedding::{Embedder, EmbeddingError};
use crate::memory::{MemoryOrigin, NewMemory};
use crate::store::{
    Direction, Frequency, HoldingRecord, NewsCategory, NewsItem, PriceBar, RawRecord, Store,
    StoreError,
};

pub const PRICE_HEADER: [&str; 7] = ["date", "ticker", "open", "high", "low", "close", "volume"];
pub const HOLDING_HEADER: [&str; 5] = ["date", "fund", "ticker", "shares", "direction"];
pub const MARKET_WIDE: &str = "*";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: expected header {expected:?}, found {found:?}")]
    Header {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}:{line}: {reason}")]
    Row {
        path: PathBuf,
        line: u64,
        reason: String,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectKind {
    Malformed,
    SchemaViolation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: u64,
    pub kind: RejectKind,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub duplicates: usize,
    pub rejected: Vec<Rejection>,
}

impl IngestReport {
    pub fn count(&self) -> usize {
        self.accepted
    }

    fn push(&mut self, line: u64, outcome: Result<u64, StoreError>) -> Result<(), IngestError> {
        match outcome {
            Ok(_) => self.accepted += 1,
            Err(StoreError::Duplicate(_)) => self.duplicates += 1,
            Err(StoreError::SchemaViolation(reason)) => self.rejected.push(Rejection {
                line,
                kind: RejectKind::SchemaViolation,
                reason,
            }),
            Err(e) => return Err(e.into()),
        }
        Ok(())
    }

    fn malformed(&mut self, line: u64, reason: impl Into<String>) {
        self.rejected.push(Rejection {
            line,
            kind: RejectKind::Malformed,
            reason: reason.into(),
        });
    }

    /// The first rejection as a row-level error, if any.
    pub fn first_error(&self, path: &Path) -> Option<IngestError> {
        self.rejected.first().map(|r| IngestError::Row {
            path: path.to_path_buf(),
            line: r.line,
            reason: r.reason.clone(),
        })
    }
}

/// ticker -> sector
pub type Universe = BTreeMap<String, String>;

pub fn close_time() -> NaiveTime {
    NaiveTime::from_hms_opt(16, 0, 0).expect("valid time")
}

/// `YYYY-MM-DD` (stamped at the close) or a full ISO-8601 local datetime.
pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime, String> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_time(close_time()));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t);
        }
    }
    Err(format!("unparseable timestamp {s:?}"))
}

fn open_csv<R: Read>(
    input: R,
    path: &Path,
    expected: &[&str],
) -> Result<csv::Reader<R>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let found: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if found != expected {
        return Err(IngestError::Header {
            path: path.to_path_buf(),
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(reader)
}

fn field<T: std::str::FromStr>(row: &csv::StringRecord, i: usize, name: &str) -> Result<T, String> {
    let raw = row.get(i).ok_or_else(|| format!("missing field {name}"))?;
    raw.parse()
        .map_err(|_| format!("field {name}: cannot parse {raw:?}"))
}

fn parse_price_row(row: &csv::StringRecord, frequency: Frequency) -> Result<PriceBar, String> {
    if row.len() != PRICE_HEADER.len() {
        return Err(format!("expected {} fields, found {}", PRICE_HEADER.len(), row.len()));
    }
    let ticker: String = field(row, 1, "ticker")?;
    if ticker.is_empty() {
        return Err("empty ticker".into());
    }
    Ok(PriceBar {
        ticker,
        timestamp: parse_timestamp(&row[0])?,
        frequency,
        open: field(row, 2, "open")?,
        high: field(row, 3, "high")?,
        low: field(row, 4, "low")?,
        close: field(row, 5, "close")?,
        volume: field(row, 6, "volume")?,
    })
}

pub fn ingest_prices(
    store: &mut Store,
    path: &Path,
    frequency: Frequency,
) -> Result<IngestReport, IngestError> {
    ingest_prices_from(store, File::open(path)?, path, frequency)
}

/// [`ingest_prices`] over any reader; `source` only labels errors.
pub fn ingest_prices_from(
    store: &mut Store,
    input: impl Read,
    source: &Path,
    frequency: Frequency,
) -> Result<IngestReport, IngestError> {
    let mut reader = open_csv(input, source, &PRICE_HEADER)?;
    let mut report = IngestReport::default();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        match parse_price_row(&row, frequency) {
            Ok(bar) => report.push(line, store.append_raw(RawRecord::PriceBar(bar)))?,
            Err(reason) => report.malformed(line, reason),
        }
    }
    Ok(report)
}

fn parse_holding_row(row: &csv::StringRecord) -> Result<HoldingRecord, String> {
    if row.len() != HOLDING_HEADER.len() {
        return Err(format!("expected {} fields, found {}", HOLDING_HEADER.len(), row.len()));
    }
    let direction = match row[4].to_ascii_lowercase().as_str() {
        "buy" => Direction::Buy,
        "sell" => Direction::Sell,
        other => return Err(format!("direction must be Buy or Sell, got {other:?}")),
    };
    Ok(HoldingRecord {
        timestamp: parse_timestamp(&row[0])?,
        fund: field(row, 1, "fund")?,
        ticker: field(row, 2, "ticker")?,
        shares_delta: field(row, 3, "shares")?,
        direction,
    })
}

pub fn ingest_holdings(store: &mut Store, path: &Path) -> Result<IngestReport, IngestError> {
    ingest_holdings_from(store, File::open(path)?, path)
}

pub fn ingest_holdings_from(
    store: &mut Store,
    input: impl Read,
    source: &Path,
) -> Result<IngestReport, IngestError> {
    let mut reader = open_csv(input, source, &HOLDING_HEADER)?;
    let mut report = IngestReport::default();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        match parse_holding_row(&row) {
            Ok(h) => report.push(line, store.append_raw(RawRecord::HoldingRecord(h)))?,
            Err(reason) => report.malformed(line, reason),
        }
    }
    Ok(report)
}

#[derive(Deserialize)]
struct NewsLine {
    timestamp: String,
    ticker: String,
    headline: String,
    body: String,
    #[serde(default)]
    category: NewsCategory,
}

/// Appends news items. Their memories are released later, once simulated
/// time reaches each item's timestamp; see [`news_memories`].
pub fn ingest_news(store: &mut Store, path: &Path) -> Result<IngestReport, IngestError> {
    ingest_news_from(store, File::open(path)?)
}

pub fn ingest_news_from(store: &mut Store, input: impl Read) -> Result<IngestReport, IngestError> {
    let reader = BufReader::new(input);
    let mut report = IngestReport::default();
    for (i, text) in reader.lines().enumerate() {
        let text = text?;
        let line = i as u64 + 1;
        if text.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<NewsLine>(&text)
            .map_err(|e| e.to_string())
            .and_then(|n| {
                Ok(NewsItem {
                    timestamp: parse_timestamp(&n.timestamp)?,
                    ticker: n.ticker,
                    headline: n.headline,
                    body: n.body,
                    category: n.category,
                })
            });
        match parsed {
            Ok(item) => report.push(line, store.append_raw(RawRecord::NewsItem(item)))?,
            Err(reason) => report.malformed(line, reason),
        }
    }
    Ok(report)
}

pub fn news_origin(category: NewsCategory) -> MemoryOrigin {
    match category {
        NewsCategory::News => MemoryOrigin::MarketNews,
        NewsCategory::Macro => MemoryOrigin::MacroIndicator,
        NewsCategory::Strategy => MemoryOrigin::StrategyDoc,
    }
}

/// Whether `character` follows news about `ticker`.
pub fn covers(character: &TraderCharacter, universe: &Universe, ticker: &str) -> bool {
    ticker == MARKET_WIDE
        || universe
            .get(ticker)
            .is_some_and(|sector| character.covers(sector))
}

/// The memory each covering agent gets from a news item.
pub fn news_memories(
    item: &NewsItem,
    agents: &[TraderCharacter],
    universe: &Universe,
    embedder: &dyn Embedder,
) -> Result<Vec<(String, NewMemory)>, EmbeddingError> {
    let covering: Vec<&TraderCharacter> = agents
        .iter()
        .filter(|c| covers(c, universe, &item.ticker))
        .collect();
    if covering.is_empty() {
        return Ok(Vec::new());
    }
    let text = if item.body.is_empty() {
        format!("{}: {}", item.ticker, item.headline)
    } else {
        format!("{}: {}. {}", item.ticker, item.headline, item.body)
    };
    let embedding = embedder.embed(&text)?;
    let origin = news_origin(item.category);
    Ok(covering
        .into_iter()
        .map(|c| {
            (
                c.agent_id.clone(),
                NewMemory {
                    layer: assign_layer(origin),
                    origin,
                    text: text.clone(),
                    embedding: embedding.clone(),
                    timestamp: item.timestamp,
                    ticker: (item.ticker != MARKET_WIDE).then(|| item.ticker.clone()),
                    source_ref: Some(format!("news:{}:{}", item.ticker, item.timestamp)),
                },
            )
        })
        .collect())
}
