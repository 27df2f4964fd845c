//! Browser bindings: decay curves, memory ranking and a small seeded backtest.
//! Every export takes and returns JSON strings.

use std::io::Cursor;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use layered_trading::backtest::Simulation;
use layered_trading::embedding::{Embedder, HashingEmbedder};
use layered_trading::fixtures::{self, FixtureSpec};
use layered_trading::market_data::{ingest_holdings_from, ingest_news_from, ingest_prices_from};
use layered_trading::memory::{
    recency_score, LayerKind, MemoryConfig, MemoryOrigin, MemorySpace, NewMemory,
};
use layered_trading::store::{Frequency, Store};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

const EMBED_DIM: usize = 256;

#[derive(Debug, Serialize, PartialEq)]
pub struct DecayCurves {
    pub days: Vec<u32>,
    pub short: Vec<f64>,
    pub middle: Vec<f64>,
    pub long: Vec<f64>,
}

/// Recency over `0..=max_days` for each layer at the default stabilities.
pub fn decay_curves(max_days: u32) -> DecayCurves {
    let config = MemoryConfig::default();
    let curve = |layer| {
        let q = config.layer(layer).stability_days;
        (0..=max_days)
            .map(|d| recency_score(d as f64, q).expect("non-negative age"))
            .collect()
    };
    DecayCurves {
        days: (0..=max_days).collect(),
        short: curve(LayerKind::Short),
        middle: curve(LayerKind::Middle),
        long: curve(LayerKind::Long),
    }
}

#[derive(Debug, Deserialize)]
pub struct DemoMemory {
    pub text: String,
    pub age_days: f64,
    pub layer: LayerKind,
    #[serde(default)]
    pub accesses: u32,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct RankedRow {
    pub text: String,
    pub layer: LayerKind,
    pub age_days: f64,
    pub gamma: f64,
    pub recency: f64,
    pub relevancy: f64,
    pub importance: f64,
    pub bonus: f64,
}

fn demo_now() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2024, 1, 2)
        .and_then(|d| d.and_hms_opt(16, 0, 0))
        .expect("valid date")
}

/// Ranks each layer's memories against `prompt`, returning every layer's
/// top `k` in layer order.
pub fn rank_memories(memories: &[DemoMemory], prompt: &str, k: usize) -> Result<Vec<RankedRow>, String> {
    let config = MemoryConfig::default();
    let embedder = HashingEmbedder::new(EMBED_DIM);
    let now = demo_now();
    let mut space = MemorySpace::new("demo");
    for m in memories {
        if !(m.age_days.is_finite() && m.age_days >= 0.0) {
            return Err(format!("age_days must be non-negative, got {}", m.age_days));
        }
        let event = space.insert(
            NewMemory {
                layer: m.layer,
                origin: MemoryOrigin::MarketNews,
                text: m.text.clone(),
                embedding: embedder.embed(&m.text).map_err(|e| e.to_string())?,
                timestamp: now - Duration::seconds((m.age_days * 86_400.0).round() as i64),
                ticker: None,
                source_ref: None,
            },
            &config,
        );
        let ids = vec![event.id; m.accesses as usize];
        space.bump_access(&ids);
    }
    let query = embedder.embed(prompt).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for layer in LayerKind::ALL {
        let ranked = space.rank_layer(layer, &query, now, &config).map_err(|e| e.to_string())?;
        rows.extend(ranked.into_iter().take(k).map(|s| RankedRow {
            age_days: (now - s.event.timestamp).num_seconds() as f64 / 86_400.0,
            text: s.event.text,
            layer,
            gamma: s.score.gamma,
            recency: s.score.recency,
            relevancy: s.score.relevancy,
            importance: s.score.importance,
            bonus: s.score.bonus,
        }));
    }
    Ok(rows)
}

#[derive(Debug, Serialize, PartialEq)]
pub struct SimDay {
    pub date: NaiveDate,
    pub trades: usize,
    pub debates: usize,
    pub promoted: usize,
    pub purged: usize,
    pub value: f64,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct SimResult {
    pub days: Vec<SimDay>,
    pub agents: Vec<(String, f64, Option<f64>)>,
    pub cumulative_return: f64,
    pub sharpe: Option<f64>,
    pub memories: Vec<(String, usize, usize, usize)>,
}

/// Generates fixtures and runs a training backtest in memory.
pub fn simulate(days: usize, agents: usize, seed: u64) -> Result<SimResult, String> {
    if !(10..=250).contains(&days) || !(1..=6).contains(&agents) {
        return Err("days must be 10..=250 and agents 1..=6".into());
    }
    let spec = FixtureSpec::new(days, &["AAA", "BBB", "CCC", "DDD", "EEE"], seed);
    let files = fixtures::generate(&spec);
    let mut store = Store::in_memory();
    let err = |e: layered_trading::market_data::IngestError| e.to_string();
    let source = Path::new("fixtures");
    ingest_prices_from(&mut store, Cursor::new(&files.prices_csv), source, Frequency::Daily).map_err(err)?;
    ingest_holdings_from(&mut store, Cursor::new(&files.holdings_csv), source).map_err(err)?;
    ingest_news_from(&mut store, Cursor::new(&files.news_jsonl)).map_err(err)?;

    let mut config = spec.sample_config("demo", agents);
    config.data = Default::default();
    let mut sim = Simulation::with_store(config, store).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    while let Some(day) = sim.step().map_err(|e| e.to_string())? {
        out.push(SimDay {
            date: day.date,
            trades: day.trades,
            debates: day.sessions.len(),
            promoted: day.sweeps.iter().map(|s| s.promoted_count()).sum(),
            purged: day.sweeps.iter().map(|s| s.purged_count()).sum(),
            value: day.values.values().sum(),
        });
    }
    let report = sim.metrics().map_err(|e| e.to_string())?;
    let memories = sim
        .agents()
        .iter()
        .map(|a| {
            let space = sim.store().memory(a.id());
            let n = |l| space.map_or(0, |s| s.layer_len(l));
            (a.id().to_string(), n(LayerKind::Short), n(LayerKind::Middle), n(LayerKind::Long))
        })
        .collect();
    Ok(SimResult {
        days: out,
        agents: report
            .agents
            .iter()
            .map(|(id, m)| (id.clone(), m.cumulative_return, m.sharpe))
            .collect(),
        cumulative_return: report.aggregate.cumulative_return,
        sharpe: report.aggregate.sharpe,
        memories,
    })
}

fn to_js<T: Serialize>(value: Result<T, String>) -> Result<String, JsValue> {
    value
        .and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = decayCurves)]
pub fn decay_curves_js(max_days: u32) -> Result<String, JsValue> {
    to_js(Ok(decay_curves(max_days.min(730))))
}

#[wasm_bindgen(js_name = rankMemories)]
pub fn rank_memories_js(memories_json: &str, prompt: &str, k: usize) -> Result<String, JsValue> {
    let memories: Vec<DemoMemory> = serde_json::from_str(memories_json)
        .map_err(|e| JsValue::from_str(&format!("memories: {e}")))?;
    to_js(rank_memories(&memories, prompt, k))
}

#[wasm_bindgen(js_name = simulate)]
pub fn simulate_js(days: usize, agents: usize, seed: u32) -> Result<String, JsValue> {
    to_js(simulate(days, agents, seed.into()))
}
