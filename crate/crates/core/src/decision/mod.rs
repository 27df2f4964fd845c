//! Pluggable decision cores and the context they decide on.

mod llm;
mod prompt;
mod rule;

pub use llm::{ChatMessage, ChatTransport, LlmConfig, LlmCore};
#[cfg(feature = "remote")]
pub use llm::HttpChatTransport;
pub use prompt::{render_prompt, PromptKind, MAX_MEMORY_CHARS};
pub use rule::{RuleBasedCore, RuleConfig};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Recommendation, Reflection, TradeAction, TraderCharacter};
use crate::debate::Package;
use crate::memory::{LayerKind, MemoryId, MemoryOrigin, ScoreBreakdown};
use crate::store::HoldingRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecisionError {
    #[error("insufficient history for {ticker}: {have} bars, need {need}")]
    InsufficientHistory {
        ticker: String,
        have: usize,
        need: usize,
    },
    #[error("decision core unavailable: {0}")]
    CoreUnavailable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Test,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Train => "train",
            Phase::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextMemory {
    pub id: MemoryId,
    pub origin: MemoryOrigin,
    pub timestamp: NaiveDateTime,
    pub text: String,
    pub score: ScoreBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMemories {
    pub layer: LayerKind,
    pub events: Vec<ContextMemory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketFacts {
    pub close: f64,
    /// Recent daily closes, oldest first, ending with the decision day.
    pub recent_closes: Vec<(NaiveDateTime, f64)>,
    /// Same-day fund records; always empty in the test phase.
    pub holdings: Vec<HoldingRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    Agree,
    Disagree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerFeedback {
    pub stance: Stance,
    /// The sender's own current action on the ticker.
    pub sender_action: TradeAction,
    pub text: String,
}

/// Feedback from a debate peer, as seen by its receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackItem {
    pub session_id: String,
    pub round: u32,
    pub sender_id: String,
    pub ticker: String,
    pub timestamp: NaiveDateTime,
    pub feedback: PeerFeedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionContext {
    pub character: TraderCharacter,
    pub phase: Phase,
    pub ticker: String,
    pub date: NaiveDate,
    pub timestamp: NaiveDateTime,
    pub k: usize,
    /// Short, Middle, Long, each with at most `k` events.
    pub memories: Vec<LayerMemories>,
    pub facts: MarketFacts,
    pub shares_held: u64,
    pub cash: f64,
    pub reflections: Vec<Reflection>,
    pub feedback: Vec<FeedbackItem>,
    /// Peer packages, filled in only while debating.
    #[serde(default)]
    pub peers: Vec<Package>,
}

impl DecisionContext {
    pub fn cited_ids(&self) -> Vec<MemoryId> {
        self.memories
            .iter()
            .flat_map(|l| l.events.iter().map(|e| e.id.clone()))
            .collect()
    }

    pub fn memory_count(&self) -> usize {
        self.memories.iter().map(|l| l.events.len()).sum()
    }

    /// Every timestamp carried by the context, labelled by source.
    pub fn dated_items(&self) -> Vec<(&'static str, NaiveDateTime)> {
        let mut out = Vec::new();
        for l in &self.memories {
            out.extend(l.events.iter().map(|e| ("memory", e.timestamp)));
        }
        out.extend(self.facts.recent_closes.iter().map(|(t, _)| ("close", *t)));
        out.extend(self.facts.holdings.iter().map(|h| ("holding", h.timestamp)));
        out.extend(self.reflections.iter().map(|r| ("reflection", r.timestamp)));
        out.extend(self.feedback.iter().map(|f| ("feedback", f.timestamp)));
        for p in &self.peers {
            out.push(("peer_reflection", p.reflection.timestamp));
            out.extend(p.memories.iter().map(|m| ("peer_memory", m.timestamp)));
        }
        out
    }
}

/// Maps contexts to one of the five recommendations.
pub trait DecisionCore: Send + Sync {
    fn name(&self) -> &str;

    fn decide(&self, ctx: &DecisionContext) -> Result<Recommendation, DecisionError>;

    /// Feedback from the owner of `ctx`, currently at `own`, on a peer's package.
    fn feedback(
        &self,
        ctx: &DecisionContext,
        own: TradeAction,
        peer: &Package,
    ) -> Result<PeerFeedback, DecisionError>;

    /// Re-decides after a debate round, given the latest feedback received.
    fn revise(
        &self,
        ctx: &DecisionContext,
        original: &Recommendation,
        received: &[FeedbackItem],
    ) -> Result<Recommendation, DecisionError>;
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::agent::RiskPreference;
    use chrono::Duration;

    pub fn context(closes: &[f64], risk: RiskPreference) -> DecisionContext {
        let date = NaiveDate::from_ymd_opt(2022, 6, 10).unwrap();
        let timestamp = date.and_hms_opt(16, 0, 0).unwrap();
        let n = closes.len() as i64;
        DecisionContext {
            character: TraderCharacter::new("a1", risk, ["tech"]),
            phase: Phase::Test,
            ticker: "AAA".into(),
            date,
            timestamp,
            k: 3,
            memories: LayerKind::ALL
                .iter()
                .map(|&layer| LayerMemories { layer, events: Vec::new() })
                .collect(),
            facts: MarketFacts {
                close: *closes.last().unwrap(),
                recent_closes: closes
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (timestamp - Duration::days(n - 1 - i as i64), *c))
                    .collect(),
                holdings: Vec::new(),
            },
            shares_held: 0,
            cash: 10_000.0,
            reflections: Vec::new(),
            feedback: Vec::new(),
            peers: Vec::new(),
        }
    }
}
