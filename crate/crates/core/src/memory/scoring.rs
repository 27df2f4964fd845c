use chrono::NaiveDateTime;

use super::{LayerKind, MemoryConfig, MemoryError, MemoryEvent, ScoreBreakdown};
use crate::embedding::{cosine_similarity, EmbeddingVector};

/// Exponential forgetting curve `exp(-delta / stability)`.
pub fn recency_score(delta_days: f64, stability_days: f64) -> Result<f64, MemoryError> {
    if delta_days < 0.0 || delta_days.is_nan() {
        return Err(MemoryError::InvalidTimestamp(format!(
            "negative age of {delta_days} days"
        )));
    }
    if stability_days.is_nan() || stability_days <= 0.0 {
        return Err(MemoryError::InvalidConfig(format!(
            "stability_days must be positive, got {stability_days}"
        )));
    }
    Ok((-delta_days / stability_days).exp())
}

/// Cosine similarity between event and prompt embeddings, in [-1, 1].
pub fn relevancy_score(
    event_embedding: &EmbeddingVector,
    prompt_embedding: &EmbeddingVector,
) -> Result<f64, MemoryError> {
    Ok(cosine_similarity(
        event_embedding.as_slice(),
        prompt_embedding.as_slice(),
    )?)
}

pub fn importance_score(layer: LayerKind, config: &MemoryConfig) -> f64 {
    config.layer(layer).importance_const
}

/// Min-max scaling to [0,1]. A constant input maps to all ones.
pub fn min_max_normalize(values: &[f64]) -> Result<Vec<f64>, MemoryError> {
    let (min, max) = values
        .iter()
        .fold(None, |acc: Option<(f64, f64)>, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
        .ok_or(MemoryError::EmptyCandidateSet)?;
    let span = max - min;
    if span == 0.0 {
        return Ok(vec![1.0; values.len()]);
    }
    Ok(values
        .iter()
        .map(|v| ((v - min) / span).clamp(0.0, 1.0))
        .collect())
}

pub fn counter_bonus(layer_accesses: u32, config: &MemoryConfig) -> f64 {
    config.bonus_per_access * f64::from(layer_accesses.min(config.bonus_access_cap))
}

/// Age of an event relative to `now`, in fractional days.
pub(crate) fn delta_days(event: &MemoryEvent, now: NaiveDateTime) -> Result<f64, MemoryError> {
    if event.timestamp > now {
        return Err(MemoryError::InvalidTimestamp(format!(
            "event {} at {} postdates prompt time {now}",
            event.id, event.timestamp
        )));
    }
    Ok((now - event.timestamp).num_seconds() as f64 / 86_400.0)
}

fn combine(
    layer: LayerKind,
    recency: f64,
    relevancy: f64,
    bonus: f64,
    config: &MemoryConfig,
) -> f64 {
    let p = config.layer(layer);
    let importance = p.importance_const;
    100.0 * (p.weight_recency * recency + p.weight_relevancy * relevancy + p.weight_importance * importance)
        + bonus
}

/// Ranking scores for a single-layer cohort against a prompt.
///
/// Recency and clamped relevancy `(cos + 1) / 2` are min-max normalized across
/// the cohort before the weighted combination, so each output depends on the
/// whole cohort but not on its order.
pub fn score_cohort(
    cohort: &[MemoryEvent],
    prompt: &EmbeddingVector,
    now: NaiveDateTime,
    config: &MemoryConfig,
) -> Result<Vec<ScoreBreakdown>, MemoryError> {
    let Some(first) = cohort.first() else {
        return Ok(Vec::new());
    };
    let layer = first.layer;
    let stability = config.layer(layer).stability_days;

    let mut raw_recency = Vec::with_capacity(cohort.len());
    let mut raw_relevancy = Vec::with_capacity(cohort.len());
    for event in cohort {
        if event.layer != layer {
            return Err(MemoryError::InvalidConfig(format!(
                "cohort mixes layers {layer} and {}",
                event.layer
            )));
        }
        raw_recency.push(recency_score(delta_days(event, now)?, stability)?);
        raw_relevancy.push((relevancy_score(&event.embedding, prompt)? + 1.0) / 2.0);
    }
    let recency = min_max_normalize(&raw_recency)?;
    let relevancy = min_max_normalize(&raw_relevancy)?;
    let importance = importance_score(layer, config);

    Ok(cohort
        .iter()
        .enumerate()
        .map(|(i, event)| {
            let bonus = counter_bonus(event.layer_accesses, config);
            ScoreBreakdown {
                recency: recency[i],
                relevancy: relevancy[i],
                importance,
                bonus,
                gamma: combine(layer, recency[i], relevancy[i], bonus, config),
                raw_recency: raw_recency[i],
                raw_relevancy: raw_relevancy[i],
            }
        })
        .collect())
}

/// Ranking score of `cohort[index]`; records the clamped relevancy on the event.
pub fn ranking_score(
    cohort: &mut [MemoryEvent],
    index: usize,
    prompt: &EmbeddingVector,
    now: NaiveDateTime,
    config: &MemoryConfig,
) -> Result<ScoreBreakdown, MemoryError> {
    let scores = score_cohort(cohort, prompt, now, config)?;
    let breakdown = scores[index];
    cohort[index].last_relevancy = breakdown.raw_relevancy;
    Ok(breakdown)
}

/// Score used by the maintenance sweep. There is no prompt at sweep time, so
/// the relevancy input is the event's last observed relevancy, and both inputs
/// are taken on their absolute [0,1] scale rather than cohort-normalized.
pub fn maintenance_score(
    event: &MemoryEvent,
    now: NaiveDateTime,
    config: &MemoryConfig,
) -> Result<ScoreBreakdown, MemoryError> {
    let p = config.layer(event.layer);
    let recency = recency_score(delta_days(event, now)?, p.stability_days)?;
    let relevancy = event.last_relevancy.clamp(0.0, 1.0);
    let bonus = counter_bonus(event.layer_accesses, config);
    Ok(ScoreBreakdown {
        recency,
        relevancy,
        importance: p.importance_const,
        bonus,
        gamma: combine(event.layer, recency, relevancy, bonus, config),
        raw_recency: recency,
        raw_relevancy: relevancy,
    })
}
