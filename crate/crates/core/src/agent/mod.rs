//! Trading agents: character profiles, layer assignment, trade execution,
//! portfolio accounting and reflections.

mod context;
mod portfolio;
mod reflection;

pub use context::{build_context, retrieval_prompt, ContextOptions};
pub use portfolio::{
    execute, ExecutionOutcome, NoTradeReason, PortfolioState, Position, Side, TradeExecution,
    TradeSizing,
};
pub use reflection::{
    extended_reflection, immediate_reflection, PeriodSpan, PositionOutcome, Reflection, ReflectionConfig,
    ReflectionFlag,
};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

use crate::memory::{LayerKind, MemoryError, MemoryOrigin};
use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("price must be positive, got {0}")]
    InvalidPrice(f64),
    #[error("missing market data for {ticker} on {date}")]
    MissingMarketData { ticker: String, date: NaiveDate },
    #[error("duplicate immediate reflection for {agent_id}/{ticker} on {date}")]
    DuplicateReflection {
        agent_id: String,
        ticker: String,
        date: NaiveDate,
    },
    #[error("no trading activity for {agent_id} between {start} and {end}")]
    NoActivity {
        agent_id: String,
        start: NaiveDate,
        end: NaiveDate,
    },
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// The five recommendations, weakest (sell hard) to strongest (buy hard).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TradeAction {
    SigDecrease,
    SlightDecrease,
    Hold,
    SlightIncrease,
    SigIncrease,
}

impl TradeAction {
    pub const ALL: [TradeAction; 5] = [
        TradeAction::SigDecrease,
        TradeAction::SlightDecrease,
        TradeAction::Hold,
        TradeAction::SlightIncrease,
        TradeAction::SigIncrease,
    ];

    /// Phrase used in prompts and expected verbatim from chat-completion cores.
    pub fn phrase(self) -> &'static str {
        match self {
            TradeAction::SigIncrease => "significantly increase position",
            TradeAction::SlightIncrease => "slightly increase position",
            TradeAction::Hold => "hold",
            TradeAction::SlightDecrease => "slightly decrease position",
            TradeAction::SigDecrease => "significantly decrease position",
        }
    }

    pub fn from_phrase(s: &str) -> Option<TradeAction> {
        let s = s.trim().trim_end_matches('.').to_ascii_lowercase();
        TradeAction::ALL.into_iter().find(|a| a.phrase() == s)
    }

    /// -1 for decreases, 0 for hold, +1 for increases.
    pub fn direction(self) -> i8 {
        match self {
            TradeAction::SigDecrease | TradeAction::SlightDecrease => -1,
            TradeAction::Hold => 0,
            TradeAction::SlightIncrease | TradeAction::SigIncrease => 1,
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    /// One step toward buying (`+1`) or selling (`-1`), saturating at the ends.
    pub fn notch(self, toward: i8) -> TradeAction {
        let i = self.index() as i64 + i64::from(toward.signum());
        TradeAction::ALL[i.clamp(0, 4) as usize]
    }
}

impl fmt::Display for TradeAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.phrase())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub action: TradeAction,
    pub rationale: String,
}

impl Recommendation {
    pub fn new(action: TradeAction, rationale: impl Into<String>) -> Self {
        Self {
            action,
            rationale: rationale.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskPreference {
    Seeking,
    Neutral,
    Averse,
}

impl fmt::Display for RiskPreference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RiskPreference::Seeking => "risk-seeking",
            RiskPreference::Neutral => "risk-neutral",
            RiskPreference::Averse => "risk-averse",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraderCharacter {
    pub agent_id: String,
    pub risk: RiskPreference,
    pub sectors: BTreeSet<String>,
}

impl TraderCharacter {
    pub fn new<I, S>(agent_id: impl Into<String>, risk: RiskPreference, sectors: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            agent_id: agent_id.into(),
            risk,
            sectors: sectors.into_iter().map(Into::into).collect(),
        }
    }

    pub fn covers(&self, sector: &str) -> bool {
        self.sectors.contains(sector)
    }
}

/// Which layer a freshly observed memory starts in.
pub fn assign_layer(origin: MemoryOrigin) -> LayerKind {
    match origin {
        MemoryOrigin::MacroIndicator => LayerKind::Long,
        MemoryOrigin::StrategyDoc | MemoryOrigin::ExtendedReflection => LayerKind::Middle,
        MemoryOrigin::MarketNews
        | MemoryOrigin::ImmediateReflection
        | MemoryOrigin::DebateFeedback
        | MemoryOrigin::TradeOutcome => LayerKind::Short,
    }
}

/// A trader: character plus book.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub character: TraderCharacter,
    pub initial_cash: f64,
    pub portfolio: PortfolioState,
    /// End-of-day portfolio values, one entry per trading day.
    pub valuations: Vec<(NaiveDate, f64)>,
}

impl Agent {
    pub fn new(character: TraderCharacter, initial_cash: f64) -> Self {
        Self {
            character,
            initial_cash,
            portfolio: PortfolioState::new(initial_cash),
            valuations: Vec::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.character.agent_id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_rules() {
        assert_eq!(assign_layer(MemoryOrigin::MacroIndicator), LayerKind::Long);
        assert_eq!(assign_layer(MemoryOrigin::StrategyDoc), LayerKind::Middle);
        assert_eq!(assign_layer(MemoryOrigin::MarketNews), LayerKind::Short);
        assert_eq!(assign_layer(MemoryOrigin::ImmediateReflection), LayerKind::Short);
        assert_eq!(assign_layer(MemoryOrigin::ExtendedReflection), LayerKind::Middle);
        assert_eq!(assign_layer(MemoryOrigin::DebateFeedback), LayerKind::Short);
    }

    #[test]
    fn notches_saturate() {
        assert_eq!(TradeAction::Hold.notch(1), TradeAction::SlightIncrease);
        assert_eq!(TradeAction::SlightIncrease.notch(-1), TradeAction::Hold);
        assert_eq!(TradeAction::SigIncrease.notch(1), TradeAction::SigIncrease);
        assert_eq!(TradeAction::SigDecrease.notch(-3), TradeAction::SigDecrease);
    }

    #[test]
    fn phrases_round_trip() {
        for a in TradeAction::ALL {
            assert_eq!(TradeAction::from_phrase(a.phrase()), Some(a));
        }
        assert_eq!(
            TradeAction::from_phrase("  Significantly Increase Position. "),
            Some(TradeAction::SigIncrease)
        );
        assert_eq!(TradeAction::from_phrase("buy everything"), None);
    }
}
