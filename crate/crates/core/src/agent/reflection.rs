use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{assign_layer, Agent, AgentError, ExecutionOutcome, Recommendation, Side};
use crate::decision::DecisionContext;
use crate::embedding::Embedder;
use crate::memory::{MemoryConfig, MemoryError, MemoryId, MemoryOrigin, NewMemory};
use crate::store::{CognitionRecord, Store};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectionFlag {
    Immediate,
    Extended,
}

/// Inclusive calendar span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodSpan {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl PeriodSpan {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflection {
    pub flag: ReflectionFlag,
    pub agent_id: String,
    pub timestamp: NaiveDateTime,
    /// Set on immediate reflections.
    pub ticker: Option<String>,
    /// Set on extended reflections.
    pub period: Option<PeriodSpan>,
    pub recommendation: Option<Recommendation>,
    pub rationale: String,
    pub trade_volume: u64,
    /// Total notional traded.
    pub trade_value: f64,
    pub realized_return: f64,
    /// Memories that were in the decision context.
    #[serde(default)]
    pub cited: Vec<MemoryId>,
}

/// The position carried into the decision day, before that day's trade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionOutcome {
    pub shares_held: u64,
    pub prev_close: Option<f64>,
    pub close: f64,
}

impl PositionOutcome {
    /// Price return on the carried position; zero without a position or history.
    pub fn daily_return(&self) -> f64 {
        match self.prev_close {
            Some(prev) if self.shares_held > 0 && prev > 0.0 => self.close / prev - 1.0,
            _ => 0.0,
        }
    }
}

/// Settings for reflection side effects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReflectionConfig {
    /// |daily position return| at or above this bumps the cited memories.
    pub significant_return: f64,
}

impl Default for ReflectionConfig {
    fn default() -> Self {
        Self {
            significant_return: 0.02,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn remember(
    store: &mut Store,
    agent_id: &str,
    origin: MemoryOrigin,
    text: String,
    timestamp: NaiveDateTime,
    ticker: Option<String>,
    source_ref: String,
    memory: &MemoryConfig,
    embedder: &dyn Embedder,
) -> Result<(), AgentError> {
    let embedding = embedder.embed(&text).map_err(MemoryError::from)?;
    store.insert_memory(
        agent_id,
        NewMemory {
            layer: assign_layer(origin),
            origin,
            text,
            embedding,
            timestamp,
            ticker,
            source_ref: Some(source_ref),
        },
        memory,
    )?;
    Ok(())
}

/// Daily per-ticker reflection at `at` (the execution time): stored with its
/// flag, remembered in the Short layer, and on a significant position move
/// every cited memory gets an extra access.
#[allow(clippy::too_many_arguments)]
pub fn immediate_reflection(
    store: &mut Store,
    ctx: &DecisionContext,
    decision: &Recommendation,
    outcome: &ExecutionOutcome,
    position: PositionOutcome,
    at: NaiveDateTime,
    config: &ReflectionConfig,
    memory: &MemoryConfig,
    embedder: &dyn Embedder,
) -> Result<Reflection, AgentError> {
    let agent_id = &ctx.character.agent_id;
    if store
        .cognition()
        .has_immediate_reflection(agent_id, &ctx.ticker, ctx.date)
    {
        return Err(AgentError::DuplicateReflection {
            agent_id: agent_id.clone(),
            ticker: ctx.ticker.clone(),
            date: ctx.date,
        });
    }
    let ret = position.daily_return();
    let (volume, value) = outcome
        .trade()
        .map_or((0, 0.0), |t| (t.shares, t.notional()));
    let traded = match outcome {
        ExecutionOutcome::Trade(t) => format!(
            "{} {} shares at {:.2}",
            match t.side {
                Side::Buy => "bought",
                Side::Sell => "sold",
            },
            t.shares,
            t.price
        ),
        ExecutionOutcome::NoTrade { reason } => format!("no trade ({reason:?})"),
    };
    let rationale = format!(
        "{} on {}: {}, {}; position return {:+.2}% on {} shares. {}",
        ctx.ticker,
        ctx.date,
        decision.action.phrase(),
        traded,
        ret * 100.0,
        position.shares_held,
        decision.rationale
    );
    let reflection = Reflection {
        flag: ReflectionFlag::Immediate,
        agent_id: agent_id.clone(),
        timestamp: at,
        ticker: Some(ctx.ticker.clone()),
        period: None,
        recommendation: Some(decision.clone()),
        rationale: rationale.clone(),
        trade_volume: volume,
        trade_value: value,
        realized_return: ret,
        cited: ctx.cited_ids(),
    };
    let id = store.append_cognition(CognitionRecord::reflection(reflection.clone()))?;
    remember(
        store,
        agent_id,
        MemoryOrigin::ImmediateReflection,
        rationale,
        at,
        Some(ctx.ticker.clone()),
        format!("reflection:{id}"),
        memory,
        embedder,
    )?;
    if ret.abs() >= config.significant_return && !reflection.cited.is_empty() {
        store.bump_access(agent_id, &reflection.cited, at)?;
    }
    Ok(reflection)
}

/// Weekly review over `period`: trading volume, turnover and the portfolio's
/// return across the span, remembered in the Middle layer.
pub fn extended_reflection(
    store: &mut Store,
    agent: &Agent,
    period: PeriodSpan,
    at: NaiveDateTime,
    memory: &MemoryConfig,
    embedder: &dyn Embedder,
) -> Result<Reflection, AgentError> {
    let days: Vec<(NaiveDate, f64)> = agent
        .valuations
        .iter()
        .copied()
        .filter(|(d, _)| period.contains(*d))
        .collect();
    let (Some(first), Some(last)) = (days.first(), days.last()) else {
        return Err(AgentError::NoActivity {
            agent_id: agent.id().to_string(),
            start: period.start,
            end: period.end,
        });
    };
    let base = agent
        .valuations
        .iter()
        .rev()
        .find(|(d, _)| *d < period.start)
        .map_or(agent.initial_cash, |(_, v)| *v);
    let ret = if base > 0.0 { last.1 / base - 1.0 } else { 0.0 };
    let trades: Vec<_> = agent
        .portfolio
        .ledger
        .iter()
        .filter(|t| period.contains(t.timestamp.date()))
        .collect();
    let volume: u64 = trades.iter().map(|t| t.shares).sum();
    let value: f64 = trades.iter().map(|t| t.notional()).sum();
    let buys = trades.iter().filter(|t| t.side == Side::Buy).count();
    let sells = trades.len() - buys;

    let mut prices = Vec::new();
    for ticker in agent.portfolio.positions.keys() {
        let closes: Vec<f64> = store
            .raw()
            .daily_bars(ticker)
            .filter(|b| period.contains(b.timestamp.date()) && b.timestamp <= at)
            .map(|b| b.close)
            .collect();
        if let (Some(a), Some(b)) = (closes.first(), closes.last()) {
            prices.push(format!("{ticker} {a:.2} to {b:.2}"));
        }
    }
    let assessment = if ret > 0.0 {
        "the book gained"
    } else if ret < 0.0 {
        "the book lost"
    } else {
        "the book was flat"
    };
    let rationale = format!(
        "Week {} to {}: {} trading days, {} trades ({} buys, {} sells), volume {} shares, turnover {:.2}; \
         value {:.2} to {:.2}, return {:+.2}%, {}. Held: {}.",
        period.start,
        period.end,
        days.len(),
        trades.len(),
        buys,
        sells,
        volume,
        value,
        first.1,
        last.1,
        ret * 100.0,
        assessment,
        if prices.is_empty() { "nothing".to_string() } else { prices.join(", ") }
    );
    let reflection = Reflection {
        flag: ReflectionFlag::Extended,
        agent_id: agent.id().to_string(),
        timestamp: at,
        ticker: None,
        period: Some(period),
        recommendation: None,
        rationale: rationale.clone(),
        trade_volume: volume,
        trade_value: value,
        realized_return: ret,
        cited: Vec::new(),
    };
    let id = store.append_cognition(CognitionRecord::reflection(reflection.clone()))?;
    remember(
        store,
        agent.id(),
        MemoryOrigin::ExtendedReflection,
        rationale,
        at,
        None,
        format!("reflection:{id}"),
        memory,
        embedder,
    )?;
    Ok(reflection)
}
