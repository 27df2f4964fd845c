//! Round-synchronous debates between agents sharing a ticker.
//!
//! Every round each participant sends every other participant its package
//! (top memories, immediate reflection, current action) together with its
//! feedback on the receiver's package. Messages are stored receiver-tagged
//! and each one becomes a Short-layer memory of its receiver.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Agent, Recommendation, Reflection, TradeAction};
use crate::decision::{DecisionContext, DecisionCore, FeedbackItem, PeerFeedback};
use crate::embedding::Embedder;
use crate::memory::{LayerKind, MemoryConfig, MemoryError, MemoryId, MemoryOrigin, NewMemory};
use crate::store::{CognitionRecord, Store, StoreError};

#[derive(Debug, Error)]
pub enum DebateError {
    #[error("session {session_id} already ran its {max} rounds")]
    RoundLimit { session_id: String, max: u32 },
    #[error("no decision core for agent {0}")]
    MissingCore(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DebateConfig {
    pub enabled: bool,
    pub max_rounds: u32,
}

impl Default for DebateConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            max_rounds: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedMemory {
    pub id: MemoryId,
    pub layer: LayerKind,
    pub timestamp: NaiveDateTime,
    pub text: String,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionSummary {
    pub timestamp: NaiveDateTime,
    pub action: TradeAction,
    pub trade_volume: u64,
    pub trade_value: f64,
    pub realized_return: f64,
}

impl ReflectionSummary {
    pub fn of(reflection: &Reflection, action: TradeAction) -> Self {
        Self {
            timestamp: reflection.timestamp,
            action,
            trade_volume: reflection.trade_volume,
            trade_value: reflection.trade_value,
            realized_return: reflection.realized_return,
        }
    }
}

/// What a participant presents to its peers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Package {
    pub sender_id: String,
    pub ticker: String,
    /// The sender's current action (its original decision, or its revision
    /// after an earlier round).
    pub action: TradeAction,
    pub memories: Vec<SharedMemory>,
    pub reflection: ReflectionSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebatePayload {
    pub package: Package,
    pub feedback: PeerFeedback,
    pub revised_action: Option<TradeAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebateMessage {
    pub session_id: String,
    pub round: u32,
    pub sender_id: String,
    pub receiver_id: String,
    pub ticker: String,
    pub timestamp: NaiveDateTime,
    pub payload: DebatePayload,
}

impl From<&DebateMessage> for FeedbackItem {
    fn from(m: &DebateMessage) -> Self {
        FeedbackItem {
            session_id: m.session_id.clone(),
            round: m.round,
            sender_id: m.sender_id.clone(),
            ticker: m.ticker.clone(),
            timestamp: m.timestamp,
            feedback: m.payload.feedback.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Participant {
    pub agent_id: String,
    pub context: DecisionContext,
    pub original: Recommendation,
    /// The immediate reflection shared with peers; during the test phase it
    /// describes the planned trade, since execution waits for the debate.
    pub reflection: ReflectionSummary,
    pub current: TradeAction,
    /// Feedback received in the most recent round.
    pub received: Vec<FeedbackItem>,
}

impl Participant {
    pub fn new(context: DecisionContext, original: Recommendation, reflection: ReflectionSummary) -> Self {
        Self {
            agent_id: context.character.agent_id.clone(),
            current: original.action,
            context,
            original,
            reflection,
            received: Vec::new(),
        }
    }

    fn package(&self) -> Package {
        Package {
            sender_id: self.agent_id.clone(),
            ticker: self.context.ticker.clone(),
            action: self.current,
            memories: self
                .context
                .memories
                .iter()
                .flat_map(|l| {
                    l.events.iter().map(|e| SharedMemory {
                        id: e.id.clone(),
                        layer: l.layer,
                        timestamp: e.timestamp,
                        text: e.text.clone(),
                        gamma: e.score.gamma,
                    })
                })
                .collect(),
            reflection: self.reflection.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DebateSession {
    pub session_id: String,
    pub date: NaiveDate,
    pub ticker: String,
    pub start: NaiveDateTime,
    pub max_rounds: u32,
    pub rounds_done: u32,
    pub participants: Vec<Participant>,
    pub transcript: Vec<DebateMessage>,
}

impl DebateSession {
    pub fn participant_ids(&self) -> Vec<&str> {
        self.participants.iter().map(|p| p.agent_id.as_str()).collect()
    }
}

/// Whether an agent takes part in the `ticker` debate on `date`: it holds the
/// ticker, traded it that day, or (when execution waits for the debate)
/// intends to trade it.
pub fn is_eligible(agent: &Agent, ticker: &str, date: NaiveDate, intends_trade: bool) -> bool {
    intends_trade
        || agent.portfolio.shares(ticker) > 0
        || agent
            .portfolio
            .ledger
            .iter()
            .any(|t| t.ticker == ticker && t.timestamp.date() == date)
}

/// Opens a session when at least two participants are eligible.
pub fn convene(
    date: NaiveDate,
    ticker: &str,
    start: NaiveDateTime,
    mut participants: Vec<Participant>,
    config: &DebateConfig,
) -> Option<DebateSession> {
    if participants.len() < 2 || config.max_rounds == 0 {
        return None;
    }
    participants.sort_by(|a, b| a.agent_id.cmp(&b.agent_id));
    Some(DebateSession {
        session_id: format!("{date}-{ticker}"),
        date,
        ticker: ticker.to_string(),
        start,
        max_rounds: config.max_rounds,
        rounds_done: 0,
        participants,
        transcript: Vec::new(),
    })
}

pub type Cores = BTreeMap<String, Arc<dyn DecisionCore>>;

fn core<'a>(cores: &'a Cores, agent_id: &str) -> Result<&'a Arc<dyn DecisionCore>, DebateError> {
    cores
        .get(agent_id)
        .ok_or_else(|| DebateError::MissingCore(agent_id.to_string()))
}

/// Runs one complete exchange and stores its messages.
pub fn exchange_round(
    session: &mut DebateSession,
    store: &mut Store,
    cores: &Cores,
    memory: &MemoryConfig,
    embedder: &dyn Embedder,
) -> Result<Vec<DebateMessage>, DebateError> {
    if session.rounds_done >= session.max_rounds {
        return Err(DebateError::RoundLimit {
            session_id: session.session_id.clone(),
            max: session.max_rounds,
        });
    }
    let round = session.rounds_done + 1;
    let timestamp = session.start + Duration::minutes(i64::from(round - 1));
    let packages: Vec<Package> = session.participants.iter().map(Participant::package).collect();

    let mut messages = Vec::new();
    for (si, sender) in session.participants.iter().enumerate() {
        let sender_core = core(cores, &sender.agent_id)?;
        let mut outgoing = Vec::new();
        let mut failed = None;
        for (ri, receiver) in session.participants.iter().enumerate() {
            if si == ri {
                continue;
            }
            match sender_core.feedback(&sender.context, sender.current, &packages[ri]) {
                Ok(feedback) => outgoing.push(DebateMessage {
                    session_id: session.session_id.clone(),
                    round,
                    sender_id: sender.agent_id.clone(),
                    receiver_id: receiver.agent_id.clone(),
                    ticker: session.ticker.clone(),
                    timestamp,
                    payload: DebatePayload {
                        package: packages[si].clone(),
                        feedback,
                        revised_action: (sender.current != sender.original.action)
                            .then_some(sender.current),
                    },
                }),
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        match failed {
            Some(e) => tracing::warn!(
                session = %session.session_id, round, agent = %sender.agent_id, error = %e,
                "participant abstains"
            ),
            None => messages.extend(outgoing),
        }
    }

    for m in &messages {
        store.append_cognition(CognitionRecord::debate(m.clone()))?;
        let text = format!(
            "Debate {} round {} on {}: {} says {}",
            m.session_id, m.round, m.ticker, m.sender_id, m.payload.feedback.text
        );
        let embedding = embedder.embed(&text).map_err(MemoryError::from)?;
        store.insert_memory(
            &m.receiver_id,
            NewMemory {
                layer: LayerKind::Short,
                origin: MemoryOrigin::DebateFeedback,
                text,
                embedding,
                timestamp,
                ticker: Some(m.ticker.clone()),
                source_ref: Some(m.session_id.clone()),
            },
            memory,
        )?;
    }

    for p in session.participants.iter_mut() {
        p.received = messages
            .iter()
            .filter(|m| m.receiver_id == p.agent_id)
            .map(FeedbackItem::from)
            .collect();
        match core(cores, &p.agent_id)?.revise(&p.context, &p.original, &p.received) {
            Ok(rec) => p.current = rec.action,
            Err(e) => tracing::warn!(agent = %p.agent_id, error = %e, "revision failed, keeping action"),
        }
    }
    session.rounds_done = round;
    session.transcript.extend(messages.iter().cloned());
    Ok(messages)
}

/// Each participant re-decides with the whole session's feedback in view.
pub fn finalize(
    session: &DebateSession,
    cores: &Cores,
) -> Result<BTreeMap<String, Recommendation>, DebateError> {
    let mut out = BTreeMap::new();
    for p in &session.participants {
        let mut ctx = p.context.clone();
        ctx.feedback.extend(
            session
                .transcript
                .iter()
                .filter(|m| m.receiver_id == p.agent_id)
                .map(FeedbackItem::from),
        );
        let revised = match core(cores, &p.agent_id)?.revise(&ctx, &p.original, &p.received) {
            Ok(rec) => rec,
            Err(e) => {
                tracing::warn!(agent = %p.agent_id, error = %e, "final revision failed, keeping original");
                p.original.clone()
            }
        };
        out.insert(p.agent_id.clone(), revised);
    }
    Ok(out)
}

/// Convenes, runs every round, and finalizes.
pub fn run_session(
    session: &mut DebateSession,
    store: &mut Store,
    cores: &Cores,
    memory: &MemoryConfig,
    embedder: &dyn Embedder,
) -> Result<BTreeMap<String, Recommendation>, DebateError> {
    while session.rounds_done < session.max_rounds {
        exchange_round(session, store, cores, memory, embedder)?;
    }
    finalize(session, cores)
}
