use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::agent::{Reflection, ReflectionFlag};
use crate::debate::DebateMessage;
use crate::memory::{MemoryEvent, MemoryId, MemoryState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    Daily,
    Minute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Buy,
    Sell,
}

impl Direction {
    pub fn sign(self) -> i8 {
        match self {
            Direction::Buy => 1,
            Direction::Sell => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NewsCategory {
    #[default]
    News,
    Macro,
    Strategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub ticker: String,
    pub timestamp: NaiveDateTime,
    pub frequency: Frequency,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsItem {
    /// `*` marks market-wide items visible to every agent.
    pub ticker: String,
    pub timestamp: NaiveDateTime,
    pub headline: String,
    pub body: String,
    #[serde(default)]
    pub category: NewsCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldingRecord {
    pub ticker: String,
    pub timestamp: NaiveDateTime,
    pub fund: String,
    pub shares_delta: i64,
    pub direction: Direction,
}

/// Raw Input schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RawRecord {
    PriceBar(PriceBar),
    NewsItem(NewsItem),
    HoldingRecord(HoldingRecord),
}

impl RawRecord {
    pub fn kind(&self) -> RecordKind {
        match self {
            RawRecord::PriceBar(_) => RecordKind::PriceBar,
            RawRecord::NewsItem(_) => RecordKind::NewsItem,
            RawRecord::HoldingRecord(_) => RecordKind::HoldingRecord,
        }
    }

    pub fn ticker(&self) -> &str {
        match self {
            RawRecord::PriceBar(r) => &r.ticker,
            RawRecord::NewsItem(r) => &r.ticker,
            RawRecord::HoldingRecord(r) => &r.ticker,
        }
    }

    pub fn timestamp(&self) -> NaiveDateTime {
        match self {
            RawRecord::PriceBar(r) => r.timestamp,
            RawRecord::NewsItem(r) => r.timestamp,
            RawRecord::HoldingRecord(r) => r.timestamp,
        }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        let bad = |msg: String| Err(StoreError::SchemaViolation(msg));
        match self {
            RawRecord::PriceBar(b) => {
                let prices = [b.open, b.high, b.low, b.close];
                if prices.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
                    return bad(format!("{} {}: prices must be positive", b.ticker, b.timestamp));
                }
                let lo = b.open.min(b.close);
                let hi = b.open.max(b.close);
                if !(b.low <= lo && hi <= b.high) {
                    return bad(format!(
                        "{} {}: OHLC violates low <= min(open, close) <= max(open, close) <= high",
                        b.ticker, b.timestamp
                    ));
                }
            }
            RawRecord::HoldingRecord(h) => {
                if h.shares_delta == 0 {
                    return bad(format!("{} {}: shares delta must be non-zero", h.ticker, h.timestamp));
                }
                if h.shares_delta.signum() as i8 != h.direction.sign() {
                    return bad(format!(
                        "{} {}: direction {:?} disagrees with shares delta {}",
                        h.ticker, h.timestamp, h.direction, h.shares_delta
                    ));
                }
            }
            RawRecord::NewsItem(n) => {
                if n.ticker.is_empty() {
                    return bad("news item without ticker".into());
                }
            }
        }
        if self.ticker().is_empty() {
            return bad("empty ticker".into());
        }
        Ok(())
    }
}

/// Agents' Cognition schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CognitionRecord {
    /// A new memory event, with its full body.
    Memory { event: MemoryEvent },
    /// Changed mutable state for existing events of one agent.
    MemoryUpdate {
        agent_id: String,
        timestamp: NaiveDateTime,
        states: Vec<MemoryState>,
    },
    /// Purged events.
    MemoryTombstone {
        agent_id: String,
        timestamp: NaiveDateTime,
        ids: Vec<MemoryId>,
    },
    Reflection {
        reflection_flag: ReflectionFlag,
        reflection: Reflection,
    },
    Debate {
        receiver_id: String,
        message: DebateMessage,
    },
}

impl CognitionRecord {
    pub fn reflection(reflection: Reflection) -> Self {
        CognitionRecord::Reflection {
            reflection_flag: reflection.flag,
            reflection,
        }
    }

    pub fn debate(message: DebateMessage) -> Self {
        CognitionRecord::Debate {
            receiver_id: message.receiver_id.clone(),
            message,
        }
    }

    pub fn kind(&self) -> RecordKind {
        match self {
            CognitionRecord::Memory { .. } => RecordKind::Memory,
            CognitionRecord::MemoryUpdate { .. } => RecordKind::MemoryUpdate,
            CognitionRecord::MemoryTombstone { .. } => RecordKind::MemoryTombstone,
            CognitionRecord::Reflection { .. } => RecordKind::Reflection,
            CognitionRecord::Debate { .. } => RecordKind::Debate,
        }
    }

    /// The agent the record is indexed under; debate records index by receiver.
    pub fn agent_id(&self) -> &str {
        match self {
            CognitionRecord::Memory { event } => &event.agent_id,
            CognitionRecord::MemoryUpdate { agent_id, .. }
            | CognitionRecord::MemoryTombstone { agent_id, .. } => agent_id,
            CognitionRecord::Reflection { reflection, .. } => &reflection.agent_id,
            CognitionRecord::Debate { receiver_id, .. } => receiver_id,
        }
    }

    pub fn timestamp(&self) -> NaiveDateTime {
        match self {
            CognitionRecord::Memory { event } => event.timestamp,
            CognitionRecord::MemoryUpdate { timestamp, .. }
            | CognitionRecord::MemoryTombstone { timestamp, .. } => *timestamp,
            CognitionRecord::Reflection { reflection, .. } => reflection.timestamp,
            CognitionRecord::Debate { message, .. } => message.timestamp,
        }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        match self {
            CognitionRecord::Reflection {
                reflection_flag,
                reflection,
            } if *reflection_flag != reflection.flag => Err(StoreError::SchemaViolation(
                "reflection flag disagrees with reflection body".into(),
            )),
            CognitionRecord::Debate {
                receiver_id,
                message,
            } => {
                if *receiver_id != message.receiver_id {
                    return Err(StoreError::SchemaViolation(
                        "debate receiver tag disagrees with message".into(),
                    ));
                }
                if message.sender_id == message.receiver_id {
                    return Err(StoreError::SchemaViolation(
                        "debate message sent to its own sender".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    PriceBar,
    NewsItem,
    HoldingRecord,
    Memory,
    MemoryUpdate,
    MemoryTombstone,
    Reflection,
    Debate,
}

impl RecordKind {
    pub fn is_raw(self) -> bool {
        matches!(
            self,
            RecordKind::PriceBar | RecordKind::NewsItem | RecordKind::HoldingRecord
        )
    }
}

impl std::str::FromStr for RecordKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "price_bar" => RecordKind::PriceBar,
            "news_item" => RecordKind::NewsItem,
            "holding_record" => RecordKind::HoldingRecord,
            "memory" => RecordKind::Memory,
            "memory_update" => RecordKind::MemoryUpdate,
            "memory_tombstone" => RecordKind::MemoryTombstone,
            "reflection" => RecordKind::Reflection,
            "debate" => RecordKind::Debate,
            other => return Err(format!("unknown record kind {other:?}")),
        })
    }
}

/// One log line: `{"id": N, "record": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stored<T> {
    pub id: u64,
    pub record: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
#[allow(clippy::large_enum_variant)]
pub enum AnyRecord {
    Raw(RawRecord),
    Cognition(CognitionRecord),
}
