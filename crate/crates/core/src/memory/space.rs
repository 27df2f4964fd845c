use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::scoring::{maintenance_score, score_cohort};
use super::{
    LayerKind, MemoryConfig, MemoryError, MemoryEvent, MemoryId, MemoryOrigin, MemoryState,
    ScoreBreakdown,
};
use crate::embedding::{cosine_similarity, EmbeddingVector};

/// Input for [`MemorySpace::insert`].
#[derive(Debug, Clone)]
pub struct NewMemory {
    pub layer: LayerKind,
    pub origin: MemoryOrigin,
    pub text: String,
    pub embedding: EmbeddingVector,
    pub timestamp: NaiveDateTime,
    pub ticker: Option<String>,
    pub source_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredMemory {
    pub event: MemoryEvent,
    pub score: ScoreBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub id: MemoryId,
    pub from: LayerKind,
    pub to: LayerKind,
    pub gamma: f64,
}

/// Outcome of one maintenance sweep. Serialized as one line of the sweep audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub date: NaiveDate,
    pub agent_id: String,
    pub promoted: Vec<Transition>,
    pub purged: Vec<MemoryId>,
    pub pinned: Vec<MemoryId>,
    pub retained: usize,
}

impl SweepReport {
    pub fn promoted_count(&self) -> usize {
        self.promoted.len()
    }

    pub fn purged_count(&self) -> usize {
        self.purged.len()
    }

    pub fn is_empty(&self) -> bool {
        self.promoted.is_empty() && self.purged.is_empty() && self.pinned.is_empty()
    }
}

/// Total retrieval order: gamma desc, timestamp desc, id asc.
pub(crate) fn retrieval_order(
    a: (&MemoryEvent, f64),
    b: (&MemoryEvent, f64),
) -> Ordering {
    b.1.total_cmp(&a.1)
        .then_with(|| b.0.timestamp.cmp(&a.0.timestamp))
        .then_with(|| a.0.id.cmp(&b.0.id))
}

/// One agent's memories across the three layers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MemorySpace {
    agent_id: String,
    events: BTreeMap<MemoryId, MemoryEvent>,
    purged: BTreeSet<MemoryId>,
    next_seq: u64,
}

impl MemorySpace {
    pub fn new(agent_id: impl Into<String>) -> Self {
        Self {
            agent_id: agent_id.into(),
            ..Self::default()
        }
    }

    pub fn agent_id(&self) -> &str {
        &self.agent_id
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn get(&self, id: &MemoryId) -> Option<&MemoryEvent> {
        self.events.get(id)
    }

    pub fn events(&self) -> impl Iterator<Item = &MemoryEvent> {
        self.events.values()
    }

    pub fn layer(&self, layer: LayerKind) -> impl Iterator<Item = &MemoryEvent> {
        self.events.values().filter(move |e| e.layer == layer)
    }

    pub fn layer_len(&self, layer: LayerKind) -> usize {
        self.layer(layer).count()
    }

    pub fn purged_ids(&self) -> &BTreeSet<MemoryId> {
        &self.purged
    }

    pub fn is_purged(&self, id: &MemoryId) -> bool {
        self.purged.contains(id)
    }

    fn next_id(&mut self) -> MemoryId {
        self.next_seq += 1;
        MemoryId(format!("{}-{:08}", self.agent_id, self.next_seq))
    }

    pub fn insert(&mut self, memory: NewMemory, config: &MemoryConfig) -> MemoryEvent {
        let id = self.next_id();
        let event = MemoryEvent {
            id: id.clone(),
            agent_id: self.agent_id.clone(),
            layer: memory.layer,
            text: memory.text,
            embedding: memory.embedding,
            timestamp: memory.timestamp,
            access_count: 0,
            layer_accesses: 0,
            last_relevancy: config.default_relevancy,
            origin: memory.origin,
            pinned: false,
            ticker: memory.ticker,
            source_ref: memory.source_ref,
            promoted_on: None,
        };
        self.events.insert(id, event.clone());
        event
    }

    /// Top-k events of `layer` by ranking score. Returned events have their
    /// access counters bumped and relevancy recorded; the returned copies
    /// reflect those updates.
    pub fn retrieve_top_k(
        &mut self,
        layer: LayerKind,
        prompt: &EmbeddingVector,
        k: usize,
        now: NaiveDateTime,
        config: &MemoryConfig,
    ) -> Result<Vec<ScoredMemory>, MemoryError> {
        let cohort: Vec<MemoryEvent> = self.layer(layer).cloned().collect();
        if cohort.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        let scores = score_cohort(&cohort, prompt, now, config)?;
        let mut ranked: Vec<(MemoryEvent, ScoreBreakdown)> = cohort.into_iter().zip(scores).collect();
        ranked.sort_by(|a, b| retrieval_order((&a.0, a.1.gamma), (&b.0, b.1.gamma)));
        ranked.truncate(k);

        Ok(ranked
            .into_iter()
            .map(|(event, score)| {
                let stored = self.events.get_mut(&event.id).expect("cohort member exists");
                stored.access_count += 1;
                stored.layer_accesses += 1;
                stored.last_relevancy = score.raw_relevancy;
                ScoredMemory {
                    event: stored.clone(),
                    score,
                }
            })
            .collect())
    }

    /// Scores the whole layer without side effects, in retrieval order.
    pub fn rank_layer(
        &self,
        layer: LayerKind,
        prompt: &EmbeddingVector,
        now: NaiveDateTime,
        config: &MemoryConfig,
    ) -> Result<Vec<ScoredMemory>, MemoryError> {
        let cohort: Vec<MemoryEvent> = self.layer(layer).cloned().collect();
        let scores = score_cohort(&cohort, prompt, now, config)?;
        let mut ranked: Vec<ScoredMemory> = cohort
            .into_iter()
            .zip(scores)
            .map(|(event, score)| ScoredMemory { event, score })
            .collect();
        ranked.sort_by(|a, b| retrieval_order((&a.event, a.score.gamma), (&b.event, b.score.gamma)));
        Ok(ranked)
    }

    /// Exact cosine search within one layer.
    pub fn similarity_search(
        &self,
        layer: LayerKind,
        query: &EmbeddingVector,
        n: usize,
    ) -> Result<Vec<(MemoryEvent, f64)>, MemoryError> {
        let mut hits = self
            .layer(layer)
            .map(|e| {
                cosine_similarity(e.embedding.as_slice(), query.as_slice()).map(|c| (e.clone(), c))
            })
            .collect::<Result<Vec<_>, _>>()?;
        hits.sort_by(|a, b| retrieval_order((&a.0, a.1), (&b.0, b.1)));
        hits.truncate(n);
        Ok(hits)
    }

    /// Add-counter boost for events cited by a significant trade outcome.
    pub fn bump_access(&mut self, ids: &[MemoryId]) -> Vec<MemoryState> {
        ids.iter()
            .filter_map(|id| {
                let e = self.events.get_mut(id)?;
                e.access_count += 1;
                e.layer_accesses += 1;
                Some(e.state())
            })
            .collect()
    }

    /// Daily maintenance: promote, pin, purge.
    ///
    /// Events already promoted on `now`'s date are left alone, which makes a
    /// repeated sweep on the same day a no-op.
    pub fn maintenance_sweep(
        &mut self,
        now: NaiveDateTime,
        config: &MemoryConfig,
    ) -> Result<SweepReport, MemoryError> {
        let today = now.date();
        let mut scored = Vec::with_capacity(self.events.len());
        for event in self.events.values() {
            if event.promoted_on == Some(today) {
                continue;
            }
            scored.push((event.id.clone(), maintenance_score(event, now, config)?.gamma));
        }

        let mut report = SweepReport {
            date: today,
            agent_id: self.agent_id.clone(),
            promoted: Vec::new(),
            purged: Vec::new(),
            pinned: Vec::new(),
            retained: 0,
        };
        for (id, gamma) in scored {
            let event = self.events.get_mut(&id).expect("scored event exists");
            let params = config.layer(event.layer);
            match event.layer.next() {
                Some(next) if gamma >= params.promotion_threshold => {
                    report.promoted.push(Transition {
                        id: id.clone(),
                        from: event.layer,
                        to: next,
                        gamma,
                    });
                    event.layer = next;
                    event.layer_accesses = 0;
                    event.promoted_on = Some(today);
                    continue;
                }
                None if gamma >= params.promotion_threshold && !event.pinned => {
                    event.pinned = true;
                    report.pinned.push(id.clone());
                    continue;
                }
                _ => {}
            }
            if gamma < params.purge_threshold && !event.pinned {
                self.events.remove(&id);
                self.purged.insert(id.clone());
                report.purged.push(id);
            }
        }
        report.retained = self.events.len() - report.promoted.len() - report.pinned.len();
        Ok(report)
    }

    // Replay hooks.

    fn observe_id(&mut self, id: &MemoryId) {
        if let Some(seq) = id.0.rsplit('-').next().and_then(|s| s.parse::<u64>().ok()) {
            self.next_seq = self.next_seq.max(seq);
        }
    }

    pub fn restore(&mut self, event: MemoryEvent) {
        self.observe_id(&event.id);
        self.events.insert(event.id.clone(), event);
    }

    pub fn apply_state(&mut self, state: &MemoryState) -> Result<(), MemoryError> {
        self.events
            .get_mut(&state.id)
            .ok_or_else(|| MemoryError::UnknownEvent(state.id.clone()))?
            .apply_state(state);
        Ok(())
    }

    pub fn tombstone(&mut self, id: &MemoryId) {
        self.observe_id(id);
        self.events.remove(id);
        self.purged.insert(id.clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{Embedder, HashingEmbedder};
    use chrono::Duration;

    fn t0() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2021, 3, 1).unwrap().and_hms_opt(17, 0, 0).unwrap()
    }

    fn add(space: &mut MemorySpace, layer: LayerKind, text: &str, age_days: i64) -> MemoryId {
        space
            .insert(NewMemory {
                layer,
                origin: MemoryOrigin::MarketNews,
                text: text.into(),
                embedding: HashingEmbedder::default().embed(text).unwrap(),
                timestamp: t0() - Duration::days(age_days),
                ticker: None,
                source_ref: None,
            }, &MemoryConfig::default())
            .id
    }

    #[test]
    fn empty_layer_retrieves_nothing() {
        let mut space = MemorySpace::new("a");
        let prompt = HashingEmbedder::default().embed("anything").unwrap();
        let got = space
            .retrieve_top_k(LayerKind::Short, &prompt, 5, t0(), &MemoryConfig::default())
            .unwrap();
        assert!(got.is_empty());
    }

    #[test]
    fn k_beyond_population_returns_all_and_bumps_counters() {
        let mut space = MemorySpace::new("a");
        for i in 0..3 {
            add(&mut space, LayerKind::Short, &format!("news item {i}"), i);
        }
        let prompt = HashingEmbedder::default().embed("news").unwrap();
        let got = space
            .retrieve_top_k(LayerKind::Short, &prompt, 10, t0(), &MemoryConfig::default())
            .unwrap();
        assert_eq!(got.len(), 3);
        assert!(got.windows(2).all(|w| w[0].score.gamma >= w[1].score.gamma));
        assert!(space.events().all(|e| e.access_count == 1));
    }

    #[test]
    fn ties_break_on_recency_then_id() {
        let mut space = MemorySpace::new("a");
        let a = add(&mut space, LayerKind::Middle, "same text", 1);
        let b = add(&mut space, LayerKind::Middle, "same text", 1);
        let c = add(&mut space, LayerKind::Middle, "same text", 0);
        let prompt = HashingEmbedder::default().embed("other").unwrap();
        let ranked = space
            .rank_layer(LayerKind::Middle, &prompt, t0(), &MemoryConfig::default())
            .unwrap();
        let ids: Vec<_> = ranked.iter().map(|s| s.event.id.clone()).collect();
        assert_eq!(ids, vec![c, a, b]);
    }

    #[test]
    fn similarity_search_finds_exact_match_first() {
        let mut space = MemorySpace::new("a");
        add(&mut space, LayerKind::Long, "oil supply shock", 3);
        let target = add(&mut space, LayerKind::Long, "chip demand surges", 2);
        add(&mut space, LayerKind::Long, "central bank holds", 1);
        let q = space.get(&target).unwrap().embedding.clone();
        let hits = space.similarity_search(LayerKind::Long, &q, 10).unwrap();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0].0.id, target);
        assert!((hits[0].1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fresh_short_event_is_promoted_at_default_weights() {
        let cfg = MemoryConfig::default();
        let mut space = MemorySpace::new("a");
        let id = add(&mut space, LayerKind::Short, "fresh news", 0);
        let report = space.maintenance_sweep(t0(), &cfg).unwrap();
        assert_eq!(report.promoted.len(), 1);
        assert_eq!(space.get(&id).unwrap().layer, LayerKind::Middle);
    }

    #[test]
    fn accessed_short_event_is_promoted_with_counter_reset() {
        let cfg = MemoryConfig::default();
        let mut space = MemorySpace::new("a");
        let id = add(&mut space, LayerKind::Short, "hot news", 0);
        space.bump_access(&[id.clone(), id.clone(), id.clone(), id.clone()]);
        let report = space.maintenance_sweep(t0(), &cfg).unwrap();
        assert_eq!(report.promoted[0].from, LayerKind::Short);
        assert_eq!(report.promoted[0].to, LayerKind::Middle);
        assert!((report.promoted[0].gamma - 91.0).abs() < 1e-9);
        let e = space.get(&id).unwrap();
        assert_eq!((e.layer_accesses, e.access_count), (0, 4));
    }

    #[test]
    fn stale_irrelevant_events_are_purged_and_stay_purged() {
        let cfg = MemoryConfig::default();
        let mut space = MemorySpace::new("a");
        let id = add(&mut space, LayerKind::Short, "old news", 30);
        let mut state = space.get(&id).unwrap().state();
        state.last_relevancy = 0.0;
        space.apply_state(&state).unwrap();
        // 100 * (0.5 e^-10 + 0 + 0.06) < 20
        let report = space.maintenance_sweep(t0(), &cfg).unwrap();
        assert_eq!(report.purged, vec![id.clone()]);
        assert!(space.get(&id).is_none());
        assert!(space.is_purged(&id));
        let next = add(&mut space, LayerKind::Short, "new", 0);
        assert_ne!(next, id);
    }

    #[test]
    fn stale_long_event_purges_under_low_importance_weight() {
        let mut cfg = MemoryConfig::default();
        cfg.long.weight_recency = 0.4;
        cfg.long.weight_relevancy = 0.4;
        cfg.long.weight_importance = 0.2;
        let mut space = MemorySpace::new("a");
        let id = add(&mut space, LayerKind::Long, "old macro", 3650);
        let mut state = space.get(&id).unwrap().state();
        state.last_relevancy = 0.0;
        space.apply_state(&state).unwrap();
        // 100 * (0.4 e^-10 + 0.2*0.9) = 18.0018...
        let report = space.maintenance_sweep(t0(), &cfg).unwrap();
        assert_eq!(report.purged, vec![id]);
    }

    #[test]
    fn long_events_are_pinned_and_then_exempt() {
        let cfg = MemoryConfig::default();
        let mut space = MemorySpace::new("a");
        let id = add(&mut space, LayerKind::Long, "core thesis", 0);
        space.bump_access(std::slice::from_ref(&id));
        // 100*(0.2 + 0.4*0.5 + 0.36) + 5 = 81
        let report = space.maintenance_sweep(t0(), &cfg).unwrap();
        assert_eq!(report.pinned, vec![id.clone()]);
        assert!(space.get(&id).unwrap().pinned);
        let later = t0() + Duration::days(20_000);
        let report = space.maintenance_sweep(later, &cfg).unwrap();
        assert!(report.purged.is_empty());
    }

    #[test]
    fn sweep_is_idempotent_within_a_day() {
        let cfg = MemoryConfig::default();
        let mut space = MemorySpace::new("a");
        for i in 0..20 {
            let id = add(&mut space, LayerKind::ALL[i % 3], &format!("event {i}"), (i * 7) as i64);
            let mut s = space.get(&id).unwrap().state();
            s.last_relevancy = (i as f64) / 20.0;
            space.apply_state(&s).unwrap();
        }
        let first = space.maintenance_sweep(t0(), &cfg).unwrap();
        assert!(!first.is_empty());
        let snapshot = space.clone();
        let second = space.maintenance_sweep(t0(), &cfg).unwrap();
        assert!(second.is_empty(), "{second:?}");
        assert_eq!(space, snapshot);
    }
}
