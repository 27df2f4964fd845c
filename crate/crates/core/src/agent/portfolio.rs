use std::collections::BTreeMap;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{AgentError, TradeAction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Buy,
    Sell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeExecution {
    pub timestamp: NaiveDateTime,
    pub ticker: String,
    pub side: Side,
    pub shares: u64,
    pub price: f64,
}

impl TradeExecution {
    pub fn notional(&self) -> f64 {
        self.shares as f64 * self.price
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoTradeReason {
    Hold,
    InsufficientCash,
    NoPosition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ExecutionOutcome {
    Trade(TradeExecution),
    NoTrade { reason: NoTradeReason },
}

impl ExecutionOutcome {
    pub fn trade(&self) -> Option<&TradeExecution> {
        match self {
            ExecutionOutcome::Trade(t) => Some(t),
            ExecutionOutcome::NoTrade { .. } => None,
        }
    }

    pub fn volume(&self) -> u64 {
        self.trade().map_or(0, |t| t.shares)
    }
}

/// Fractions behind the five predetermined trade values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TradeSizing {
    /// Fraction of cash spent (buys) or of shares sold (sells) on a significant move.
    pub significant: f64,
    pub slight: f64,
}

impl Default for TradeSizing {
    fn default() -> Self {
        Self {
            significant: 0.25,
            slight: 0.10,
        }
    }
}

impl TradeSizing {
    pub fn fraction(&self, action: TradeAction) -> f64 {
        match action {
            TradeAction::SigIncrease | TradeAction::SigDecrease => self.significant,
            TradeAction::SlightIncrease | TradeAction::SlightDecrease => self.slight,
            TradeAction::Hold => 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub shares: u64,
    /// Total cost of the shares currently held, at average cost.
    pub cost_basis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioState {
    pub cash: f64,
    pub positions: BTreeMap<String, Position>,
    pub ledger: Vec<TradeExecution>,
}

impl PortfolioState {
    pub fn new(cash: f64) -> Self {
        Self {
            cash,
            positions: BTreeMap::new(),
            ledger: Vec::new(),
        }
    }

    pub fn shares(&self, ticker: &str) -> u64 {
        self.positions.get(ticker).map_or(0, |p| p.shares)
    }

    /// Cash plus positions marked at `price_of`; tickers without a price are skipped.
    pub fn value_with(&self, mut price_of: impl FnMut(&str) -> Option<f64>) -> f64 {
        self.cash
            + self
                .positions
                .iter()
                .filter_map(|(t, p)| price_of(t).map(|px| p.shares as f64 * px))
                .sum::<f64>()
    }

    /// Books an execution. Callers guarantee affordability.
    pub fn apply(&mut self, trade: TradeExecution) {
        let notional = trade.notional();
        let position = self.positions.entry(trade.ticker.clone()).or_default();
        match trade.side {
            Side::Buy => {
                self.cash -= notional;
                position.shares += trade.shares;
                position.cost_basis += notional;
            }
            Side::Sell => {
                let avg = position.cost_basis / position.shares as f64;
                self.cash += notional;
                position.shares -= trade.shares;
                position.cost_basis = if position.shares == 0 {
                    0.0
                } else {
                    avg * position.shares as f64
                };
            }
        }
        if position.shares == 0 {
            self.positions.remove(&trade.ticker);
        }
        self.ledger.push(trade);
    }

    /// Rebuilds a portfolio from its starting cash and ledger.
    pub fn from_ledger(initial_cash: f64, ledger: &[TradeExecution]) -> Self {
        let mut p = PortfolioState::new(initial_cash);
        for t in ledger {
            p.apply(t.clone());
        }
        p
    }
}

/// Sizes and books the trade implied by `action` at `price`.
///
/// Buys spend a fraction of cash, floored to whole shares. Sells sell a
/// fraction of held shares, floored, but at least one share.
pub fn execute(
    action: TradeAction,
    portfolio: &mut PortfolioState,
    ticker: &str,
    price: f64,
    timestamp: NaiveDateTime,
    sizing: &TradeSizing,
) -> Result<ExecutionOutcome, AgentError> {
    if !(price > 0.0 && price.is_finite()) {
        return Err(AgentError::InvalidPrice(price));
    }
    let fraction = sizing.fraction(action);
    let (side, shares) = match action.direction() {
        0 => {
            return Ok(ExecutionOutcome::NoTrade {
                reason: NoTradeReason::Hold,
            })
        }
        1 => {
            let budget = portfolio.cash.max(0.0) * fraction;
            let shares = (budget / price).floor() as u64;
            if shares == 0 {
                return Ok(ExecutionOutcome::NoTrade {
                    reason: NoTradeReason::InsufficientCash,
                });
            }
            (Side::Buy, shares)
        }
        _ => {
            let held = portfolio.shares(ticker);
            if held == 0 {
                return Ok(ExecutionOutcome::NoTrade {
                    reason: NoTradeReason::NoPosition,
                });
            }
            let shares = ((held as f64 * fraction).floor() as u64).clamp(1, held);
            (Side::Sell, shares)
        }
    };
    let trade = TradeExecution {
        timestamp,
        ticker: ticker.to_string(),
        side,
        shares,
        price,
    };
    portfolio.apply(trade.clone());
    Ok(ExecutionOutcome::Trade(trade))
}
