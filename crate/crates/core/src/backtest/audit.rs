use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::decision::{DecisionContext, Phase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub agent_id: String,
    pub ticker: String,
    pub decision_time: NaiveDateTime,
    pub item: String,
    pub item_time: Option<NaiveDateTime>,
}

/// Checks every context handed to a core for data it should not see.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContextAuditor {
    pub contexts: usize,
    pub items: usize,
    pub holdings_in_test: usize,
    pub violations: Vec<Violation>,
}

impl ContextAuditor {
    pub fn inspect(&mut self, ctx: &DecisionContext) {
        self.contexts += 1;
        let violation = |item: &str, item_time| Violation {
            agent_id: ctx.character.agent_id.clone(),
            ticker: ctx.ticker.clone(),
            decision_time: ctx.timestamp,
            item: item.to_string(),
            item_time,
        };
        for (what, at) in ctx.dated_items() {
            self.items += 1;
            if at > ctx.timestamp || at.date() > ctx.date {
                self.violations.push(violation(what, Some(at)));
            }
        }
        if ctx.phase == Phase::Test && !ctx.facts.holdings.is_empty() {
            self.holdings_in_test += ctx.facts.holdings.len();
            self.violations.push(violation("holdings in test phase", None));
        }
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}
