use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{Agent, AgentError, ReflectionFlag, TraderCharacter};
use crate::decision::{ContextMemory, DecisionContext, FeedbackItem, LayerMemories, MarketFacts, Phase};
use crate::embedding::Embedder;
use crate::memory::{LayerKind, MemoryConfig, MemoryError};
use crate::store::{AnyRecord, CognitionRecord, RecordKind, Store};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextOptions {
    pub k: usize,
    /// Daily closes carried in the facts (momentum window + 1).
    pub history_bars: usize,
    /// Look-back for prior reflections and debate feedback.
    pub window_days: i64,
}

impl Default for ContextOptions {
    fn default() -> Self {
        Self {
            k: 5,
            history_bars: 6,
            window_days: 7,
        }
    }
}

/// Query text used to score relevancy for a decision.
pub fn retrieval_prompt(character: &TraderCharacter, ticker: &str, now: NaiveDateTime) -> String {
    format!(
        "{ticker} stock outlook on {} for a {} trader: news, earnings, price trend, reflections and peer feedback on {ticker}",
        now.date(),
        character.risk
    )
}

/// Gathers everything a core may see for one decision at `now`.
///
/// Retrieval counts as access, so this records memory updates in the store.
#[allow(clippy::too_many_arguments)]
pub fn build_context(
    store: &mut Store,
    agent: &Agent,
    ticker: &str,
    now: NaiveDateTime,
    phase: Phase,
    options: &ContextOptions,
    memory: &MemoryConfig,
    embedder: &dyn Embedder,
) -> Result<DecisionContext, AgentError> {
    let date = now.date();
    let close = store
        .raw()
        .daily_bar(ticker, date)
        .filter(|b| b.timestamp <= now)
        .map(|b| b.close)
        .ok_or_else(|| AgentError::MissingMarketData {
            ticker: ticker.to_string(),
            date,
        })?;
    let recent_closes = store
        .raw()
        .recent_daily_bars(ticker, now, options.history_bars)
        .into_iter()
        .map(|b| (b.timestamp, b.close))
        .collect();
    let holdings = match phase {
        Phase::Train => store
            .raw()
            .holdings_on(ticker, date)
            .into_iter()
            .filter(|h| h.timestamp <= now)
            .cloned()
            .collect(),
        Phase::Test => Vec::new(),
    };

    let agent_id = agent.id();
    let prompt = embedder
        .embed(&retrieval_prompt(&agent.character, ticker, now))
        .map_err(MemoryError::from)?;
    let mut memories = Vec::with_capacity(3);
    for layer in LayerKind::ALL {
        let hits = store.retrieve_top_k(agent_id, layer, &prompt, options.k, now, memory)?;
        memories.push(LayerMemories {
            layer,
            events: hits
                .into_iter()
                .map(|h| ContextMemory {
                    id: h.event.id,
                    origin: h.event.origin,
                    timestamp: h.event.timestamp,
                    text: h.event.text,
                    score: h.score,
                })
                .collect(),
        });
    }

    let (mut reflections, mut feedback) = (Vec::new(), Vec::new());
    if phase == Phase::Test {
        let from = now - Duration::days(options.window_days);
        // Inclusive of `now` so same-session feedback is visible.
        let to = now + Duration::seconds(1);
        for s in store.query_window(RecordKind::Reflection, agent_id, from, to)? {
            if let AnyRecord::Cognition(CognitionRecord::Reflection { reflection, .. }) = s.record {
                let relevant = reflection.flag == ReflectionFlag::Extended
                    || reflection.ticker.as_deref() == Some(ticker);
                if relevant {
                    reflections.push(reflection);
                }
            }
        }
        for s in store.query_window(RecordKind::Debate, agent_id, from, to)? {
            if let AnyRecord::Cognition(CognitionRecord::Debate { message, .. }) = s.record {
                if message.ticker == ticker {
                    feedback.push(FeedbackItem::from(&message));
                }
            }
        }
    }

    Ok(DecisionContext {
        character: agent.character.clone(),
        phase,
        ticker: ticker.to_string(),
        date,
        timestamp: now,
        k: options.k,
        memories,
        facts: MarketFacts {
            close,
            recent_closes,
            holdings,
        },
        shares_held: agent.portfolio.shares(ticker),
        cash: agent.portfolio.cash,
        reflections,
        feedback,
        peers: Vec::new(),
    })
}
