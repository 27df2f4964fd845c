//! Three-layer agent memory: scoring, retrieval and the daily maintenance
//! lifecycle (promotion, pinning, purging).

mod scoring;
mod space;

pub use scoring::{
    counter_bonus, importance_score, maintenance_score, min_max_normalize, ranking_score,
    recency_score, relevancy_score, score_cohort,
};
pub use space::{MemorySpace, NewMemory, ScoredMemory, SweepReport, Transition};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

use crate::embedding::{EmbeddingError, EmbeddingVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("invalid timestamp: {0}")]
    InvalidTimestamp(String),
    #[error("cannot normalize an empty candidate set")]
    EmptyCandidateSet,
    #[error("invalid memory configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown memory event {0}")]
    UnknownEvent(MemoryId),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Short,
    Middle,
    Long,
}

impl LayerKind {
    pub const ALL: [LayerKind; 3] = [LayerKind::Short, LayerKind::Middle, LayerKind::Long];

    /// The next longer-lived layer, if any.
    pub fn next(self) -> Option<LayerKind> {
        match self {
            LayerKind::Short => Some(LayerKind::Middle),
            LayerKind::Middle => Some(LayerKind::Long),
            LayerKind::Long => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Short => "short",
            LayerKind::Middle => "middle",
            LayerKind::Long => "long",
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LayerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "short" => Ok(LayerKind::Short),
            "middle" | "mid" => Ok(LayerKind::Middle),
            "long" => Ok(LayerKind::Long),
            other => Err(format!("unknown layer {other:?} (expected short, middle or long)")),
        }
    }
}

/// Where a memory came from; drives layer assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryOrigin {
    MarketNews,
    MacroIndicator,
    StrategyDoc,
    ImmediateReflection,
    ExtendedReflection,
    DebateFeedback,
    TradeOutcome,
}

/// Per-layer scoring constants. Thresholds live on the 0-100 ranking scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub stability_days: f64,
    pub importance_const: f64,
    pub weight_recency: f64,
    pub weight_relevancy: f64,
    pub weight_importance: f64,
    /// Promotion threshold for short and middle layers; pin threshold for the long layer.
    pub promotion_threshold: f64,
    pub purge_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryConfig {
    pub short: LayerParams,
    pub middle: LayerParams,
    pub long: LayerParams,
    pub bonus_per_access: f64,
    pub bonus_access_cap: u32,
    /// Relevancy assumed for events that were never retrieved.
    pub default_relevancy: f64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            short: LayerParams {
                stability_days: 3.0,
                importance_const: 0.3,
                weight_recency: 0.5,
                weight_relevancy: 0.3,
                weight_importance: 0.2,
                promotion_threshold: 40.0,
                purge_threshold: 20.0,
            },
            middle: LayerParams {
                stability_days: 90.0,
                importance_const: 0.6,
                weight_recency: 0.3,
                weight_relevancy: 0.4,
                weight_importance: 0.3,
                promotion_threshold: 60.0,
                purge_threshold: 20.0,
            },
            long: LayerParams {
                stability_days: 365.0,
                importance_const: 0.9,
                weight_recency: 0.2,
                weight_relevancy: 0.4,
                weight_importance: 0.4,
                promotion_threshold: 80.0,
                purge_threshold: 20.0,
            },
            bonus_per_access: 5.0,
            bonus_access_cap: 4,
            default_relevancy: 0.5,
        }
    }
}

impl MemoryConfig {
    pub fn layer(&self, layer: LayerKind) -> &LayerParams {
        match layer {
            LayerKind::Short => &self.short,
            LayerKind::Middle => &self.middle,
            LayerKind::Long => &self.long,
        }
    }

    /// Largest bonus an event can carry.
    pub fn max_bonus(&self) -> f64 {
        self.bonus_per_access * f64::from(self.bonus_access_cap)
    }

    pub fn validate(&self) -> Result<(), MemoryError> {
        let bad = |msg: String| Err(MemoryError::InvalidConfig(msg));
        for layer in LayerKind::ALL {
            let p = self.layer(layer);
            if !(p.stability_days > 0.0 && p.stability_days.is_finite()) {
                return bad(format!("{layer}: stability_days must be positive"));
            }
            if !(0.0..=1.0).contains(&p.importance_const) {
                return bad(format!("{layer}: importance_const must lie in [0,1]"));
            }
            let weights = [p.weight_recency, p.weight_relevancy, p.weight_importance];
            if weights.iter().any(|w| *w < 0.0) {
                return bad(format!("{layer}: weights must be non-negative"));
            }
            if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad(format!("{layer}: weights must sum to 1"));
            }
            if p.purge_threshold >= p.promotion_threshold {
                return bad(format!("{layer}: purge_threshold must be below promotion_threshold"));
            }
        }
        let (s, m, l) = (&self.short, &self.middle, &self.long);
        if !(s.stability_days < m.stability_days && m.stability_days < l.stability_days) {
            return bad("stability must increase short < middle < long".into());
        }
        if !(s.importance_const < m.importance_const && m.importance_const < l.importance_const) {
            return bad("importance constants must increase short < middle < long".into());
        }
        if !(0.0..=1.0).contains(&self.default_relevancy) {
            return bad("default_relevancy must lie in [0,1]".into());
        }
        if self.bonus_per_access < 0.0 || self.max_bonus() > 20.0 {
            return bad("counter bonus must lie in [0,20]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MemoryId(pub String);

impl fmt::Display for MemoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEvent {
    pub id: MemoryId,
    pub agent_id: String,
    pub layer: LayerKind,
    pub text: String,
    pub embedding: EmbeddingVector,
    pub timestamp: NaiveDateTime,
    /// Lifetime access count; never decreases.
    pub access_count: u32,
    /// Accesses since the event entered its current layer; feeds the counter bonus.
    pub layer_accesses: u32,
    pub last_relevancy: f64,
    pub origin: MemoryOrigin,
    pub pinned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ticker: Option<String>,
    /// Debate session or other provenance handle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub promoted_on: Option<NaiveDate>,
}

impl MemoryEvent {
    pub fn state(&self) -> MemoryState {
        MemoryState {
            id: self.id.clone(),
            layer: self.layer,
            access_count: self.access_count,
            layer_accesses: self.layer_accesses,
            last_relevancy: self.last_relevancy,
            pinned: self.pinned,
            promoted_on: self.promoted_on,
        }
    }

    pub fn apply_state(&mut self, state: &MemoryState) {
        self.layer = state.layer;
        self.access_count = state.access_count;
        self.layer_accesses = state.layer_accesses;
        self.last_relevancy = state.last_relevancy;
        self.pinned = state.pinned;
        self.promoted_on = state.promoted_on;
    }
}

/// The mutable part of a memory event, logged whenever it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryState {
    pub id: MemoryId,
    pub layer: LayerKind,
    pub access_count: u32,
    pub layer_accesses: u32,
    pub last_relevancy: f64,
    pub pinned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub promoted_on: Option<NaiveDate>,
}

/// Sub-scores behind one ranking score. `recency` and `relevancy` are the
/// cohort-normalized values; the `raw_*` fields keep the inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub recency: f64,
    pub relevancy: f64,
    pub importance: f64,
    pub bonus: f64,
    pub gamma: f64,
    pub raw_recency: f64,
    pub raw_relevancy: f64,
}
