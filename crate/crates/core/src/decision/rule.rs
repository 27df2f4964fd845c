use serde::{Deserialize, Serialize};

use super::{DecisionContext, DecisionCore, DecisionError, FeedbackItem, PeerFeedback, Phase, Stance};
use crate::agent::{Recommendation, RiskPreference, TradeAction};
use crate::debate::Package;

/// Momentum thresholds and risk multipliers for [`RuleBasedCore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConfig {
    pub window: usize,
    pub slight: f64,
    pub significant: f64,
    pub seeking_scale: f64,
    pub averse_scale: f64,
    pub fund_alignment: bool,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            window: 5,
            slight: 0.01,
            significant: 0.03,
            seeking_scale: 0.5,
            averse_scale: 1.5,
            fund_alignment: true,
        }
    }
}

impl RuleConfig {
    fn scale(&self, risk: RiskPreference) -> f64 {
        match risk {
            RiskPreference::Seeking => self.seeking_scale,
            RiskPreference::Neutral => 1.0,
            RiskPreference::Averse => self.averse_scale,
        }
    }

    /// Maps a momentum value to an action under `risk`'s scaled thresholds.
    pub fn classify(&self, momentum: f64, risk: RiskPreference) -> TradeAction {
        let s = self.scale(risk);
        let (slight, sig) = (self.slight * s, self.significant * s);
        if momentum >= sig {
            TradeAction::SigIncrease
        } else if momentum >= slight {
            TradeAction::SlightIncrease
        } else if momentum > -slight {
            TradeAction::Hold
        } else if momentum > -sig {
            TradeAction::SlightDecrease
        } else {
            TradeAction::SigDecrease
        }
    }
}

/// Deterministic momentum trader used for hermetic runs.
#[derive(Debug, Clone, Default)]
pub struct RuleBasedCore {
    pub config: RuleConfig,
}

impl RuleBasedCore {
    pub fn new(config: RuleConfig) -> Self {
        Self { config }
    }

    /// (close_t - close_{t-w}) / close_{t-w}
    pub fn momentum(&self, ctx: &DecisionContext) -> Result<f64, DecisionError> {
        let closes = &ctx.facts.recent_closes;
        let need = self.config.window + 1;
        if closes.len() < need {
            return Err(DecisionError::InsufficientHistory {
                ticker: ctx.ticker.clone(),
                have: closes.len(),
                need,
            });
        }
        let now = closes[closes.len() - 1].1;
        let then = closes[closes.len() - need].1;
        Ok((now - then) / then)
    }

    fn fund_direction(ctx: &DecisionContext) -> i8 {
        let net: i64 = ctx.facts.holdings.iter().map(|h| h.shares_delta).sum();
        net.signum() as i8
    }
}

/// Majority-notch revision: step one notch toward a direction whose peers
/// outnumber everyone else (self included) at least two to one.
pub(crate) fn majority_notch(own: TradeAction, peers: &[TradeAction]) -> TradeAction {
    for toward in [1i8, -1] {
        if own.direction() == toward {
            continue;
        }
        let with = peers.iter().filter(|a| a.direction() == toward).count();
        let against = 1 + peers.len() - with;
        if with > 0 && with >= 2 * against {
            return own.notch(toward);
        }
    }
    own
}

impl DecisionCore for RuleBasedCore {
    fn name(&self) -> &str {
        "rule"
    }

    fn decide(&self, ctx: &DecisionContext) -> Result<Recommendation, DecisionError> {
        let m = self.momentum(ctx)?;
        let mut action = self.config.classify(m, ctx.character.risk);
        let mut rationale = format!(
            "{}-session momentum {:+.2}% ({})",
            self.config.window,
            m * 100.0,
            ctx.character.risk
        );
        if self.config.fund_alignment && ctx.phase == Phase::Train {
            let fund = Self::fund_direction(ctx);
            if fund != 0 && action.direction() != fund {
                action = action.notch(fund);
                let side = if fund > 0 { "buying" } else { "selling" };
                rationale.push_str(&format!("; fund records net {side}, one notch toward the fund"));
            }
        }
        Ok(Recommendation::new(action, rationale))
    }

    fn feedback(
        &self,
        ctx: &DecisionContext,
        own: TradeAction,
        peer: &Package,
    ) -> Result<PeerFeedback, DecisionError> {
        let m = self.momentum(ctx)?;
        let stance = if own.direction() == peer.action.direction() {
            Stance::Agree
        } else {
            Stance::Disagree
        };
        let verb = match stance {
            Stance::Agree => "agree",
            Stance::Disagree => "disagree",
        };
        let text = format!(
            "{verb} with {} on {}: I would {}; {}-session momentum {:+.2}%",
            peer.action.phrase(),
            peer.ticker,
            own.phrase(),
            self.config.window,
            m * 100.0
        );
        Ok(PeerFeedback {
            stance,
            sender_action: own,
            text,
        })
    }

    fn revise(
        &self,
        _ctx: &DecisionContext,
        original: &Recommendation,
        received: &[FeedbackItem],
    ) -> Result<Recommendation, DecisionError> {
        let peers: Vec<TradeAction> = received.iter().map(|f| f.feedback.sender_action).collect();
        let revised = majority_notch(original.action, &peers);
        if revised == original.action {
            return Ok(original.clone());
        }
        Ok(Recommendation::new(
            revised,
            format!(
                "{}; revised one notch after being outnumbered in debate",
                original.rationale
            ),
        ))
    }
}
