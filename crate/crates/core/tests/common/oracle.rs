use chrono::{Duration, NaiveDate, NaiveDateTime};
use layered_trading::embedding::EmbeddingVector;
use layered_trading::memory::{LayerKind, MemoryConfig, MemoryEvent, MemoryOrigin, MemorySpace, NewMemory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DIM: usize = 16;

pub fn now() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2023, 6, 1).unwrap().and_hms_opt(16, 0, 0).unwrap()
}

pub fn random_vector(rng: &mut ChaCha8Rng) -> EmbeddingVector {
    loop {
        let v: Vec<f64> = (0..DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let Ok(e) = EmbeddingVector::new(v) {
            return e;
        }
    }
}

/// A space with `n` events; timestamps and embeddings are drawn from small
/// pools so that exact ties occur.
pub fn random_space(rng: &mut ChaCha8Rng, n: usize, config: &MemoryConfig) -> MemorySpace {
    let pool: Vec<EmbeddingVector> = (0..rng.random_range(1..=8)).map(|_| random_vector(rng)).collect();
    let mut space = MemorySpace::new("agent");
    let mut ids = Vec::new();
    for _ in 0..n {
        let layer = LayerKind::ALL[rng.random_range(0..3)];
        let age_hours = if rng.random_bool(0.3) {
            24 * rng.random_range(0..5)
        } else {
            rng.random_range(0..24 * 400)
        };
        let e = space.insert(
            NewMemory {
                layer,
                origin: MemoryOrigin::MarketNews,
                text: "x".into(),
                embedding: pool[rng.random_range(0..pool.len())].clone(),
                timestamp: now() - Duration::hours(age_hours),
                ticker: None,
                source_ref: None,
            },
            config,
        );
        ids.push(e.id);
    }
    for _ in 0..rng.random_range(0..n.max(1)) {
        let id = ids[rng.random_range(0..ids.len())].clone();
        space.bump_access(&[id]);
    }
    space
}

pub fn cos(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let (a, b) = (a.as_slice(), b.as_slice());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn scale(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    v.iter().map(|x| if hi == lo { 1.0 } else { (x - lo) / (hi - lo) }).collect()
}

/// Full-sort oracle: every event of the layer scored, sorted, cut at k.
pub fn top_k(events: &[MemoryEvent], prompt: &EmbeddingVector, k: usize, config: &MemoryConfig) -> Vec<(String, f64)> {
    if events.is_empty() {
        return Vec::new();
    }
    let p = config.layer(events[0].layer);
    let rec: Vec<f64> = events
        .iter()
        .map(|e| (-((now() - e.timestamp).num_seconds() as f64 / 86_400.0) / p.stability_days).exp())
        .collect();
    let rel: Vec<f64> = events.iter().map(|e| (cos(&e.embedding, prompt) + 1.0) / 2.0).collect();
    let (rec, rel) = (scale(&rec), scale(&rel));
    let mut scored: Vec<(&MemoryEvent, f64)> = events
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let g = 100.0
                * (p.weight_recency * rec[i] + p.weight_relevancy * rel[i] + p.weight_importance * p.importance_const)
                + 5.0 * f64::from(e.layer_accesses.min(4));
            (e, g)
        })
        .collect();
    scored.sort_by(order);
    scored.into_iter().take(k).map(|(e, g)| (e.id.0.clone(), g)).collect()
}

/// Retrieval order on scored pairs: score desc, timestamp desc, id asc.
pub fn order(a: &(&MemoryEvent, f64), b: &(&MemoryEvent, f64)) -> std::cmp::Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap()
        .then(b.0.timestamp.cmp(&a.0.timestamp))
        .then(a.0.id.cmp(&b.0.id))
}

/// Runs `rounds` randomized stores through `retrieve_top_k` and the oracle;
/// returns the first mismatch.
pub fn check_stores(rounds: usize, seed: u64) -> Result<(), String> {
    let config = MemoryConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for round in 0..rounds {
        let n = rng.random_range(0..=1000);
        let mut space = random_space(&mut rng, n, &config);
        let prompt = random_vector(&mut rng);
        let k = rng.random_range(1..=50);
        for layer in LayerKind::ALL {
            let events: Vec<MemoryEvent> = space.layer(layer).cloned().collect();
            let expected = top_k(&events, &prompt, k, &config);
            let got = space
                .retrieve_top_k(layer, &prompt, k, now(), &config)
                .map_err(|e| e.to_string())?;
            let got: Vec<(String, f64)> = got.iter().map(|g| (g.event.id.0.clone(), g.score.gamma)).collect();
            if got.len() != expected.len()
                || got.iter().zip(&expected).any(|(g, o)| g.0 != o.0 || (g.1 - o.1).abs() > 1e-9)
            {
                return Err(format!("store {round}, layer {layer}, k {k}: {got:?} vs {expected:?}"));
            }
        }
    }
    Ok(())
}
