mod common;

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use layered_trading::agent::{
    build_context, execute, immediate_reflection, Agent, ContextOptions, PositionOutcome, ReflectionConfig,
    ReflectionFlag, RiskPreference, TradeAction, TradeSizing, TraderCharacter,
};
use layered_trading::backtest::{portfolio_values, Simulation};
use layered_trading::decision::{DecisionCore, Phase, RuleBasedCore};
use layered_trading::embedding::{Embedder, HashingEmbedder};
use layered_trading::market_data::covers;
use layered_trading::memory::{LayerKind, MemoryConfig, MemoryOrigin, NewMemory};
use layered_trading::store::{Frequency, PriceBar, RawRecord, Store};

fn day(i: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, 5, 2).unwrap() + Duration::days(i)
}

fn close_at(i: i64) -> NaiveDateTime {
    day(i).and_hms_opt(16, 0, 0).unwrap()
}

fn store_with_prices(closes: &[f64]) -> Store {
    let mut store = Store::in_memory();
    for (i, c) in closes.iter().enumerate() {
        store
            .append_raw(RawRecord::PriceBar(PriceBar {
                ticker: "AAA".into(),
                timestamp: close_at(i as i64),
                frequency: Frequency::Daily,
                open: *c,
                high: *c,
                low: *c,
                close: *c,
                volume: 1,
            }))
            .unwrap();
    }
    store
}

fn cited_access(day_return: f64) -> (u32, u32) {
    let config = MemoryConfig::default();
    let embedder = HashingEmbedder::new(64);
    let last = 100.0 * (1.0 + day_return);
    let mut store = store_with_prices(&[100.0, 100.0, 100.0, 100.0, 100.0, 100.0, last]);
    let note = store
        .insert_memory(
            "a1",
            NewMemory {
                layer: LayerKind::Short,
                origin: MemoryOrigin::MarketNews,
                text: "AAA order book deepens".into(),
                embedding: embedder.embed("AAA order book deepens").unwrap(),
                timestamp: close_at(5),
                ticker: Some("AAA".into()),
                source_ref: None,
            },
            &config,
        )
        .unwrap();
    let mut agent = Agent::new(TraderCharacter::new("a1", RiskPreference::Neutral, ["tech"]), 1000.0);
    agent.portfolio.cash = 0.0;
    agent.portfolio.positions.insert("AAA".into(), layered_trading::agent::Position { shares: 10, cost_basis: 1000.0 });
    let ctx = build_context(
        &mut store,
        &agent,
        "AAA",
        close_at(6),
        Phase::Train,
        &ContextOptions::default(),
        &config,
        &embedder,
    )
    .unwrap();
    assert!(ctx.cited_ids().contains(&note.id));
    let before = store.memory("a1").unwrap().get(&note.id).unwrap().access_count;
    let rec = RuleBasedCore::default().decide(&ctx).unwrap();
    let outcome = execute(TradeAction::Hold, &mut agent.portfolio, "AAA", last, close_at(6), &TradeSizing::default()).unwrap();
    let r = immediate_reflection(
        &mut store,
        &ctx,
        &rec,
        &outcome,
        PositionOutcome { shares_held: 10, prev_close: Some(100.0), close: last },
        close_at(6),
        &ReflectionConfig::default(),
        &config,
        &embedder,
    )
    .unwrap();
    assert!((r.realized_return - day_return).abs() < 1e-12);
    let after = store.memory("a1").unwrap().get(&note.id).unwrap().access_count;
    (before, after)
}

#[test]
fn three_percent_gain_bumps_cited_memories() {
    let (before, after) = cited_access(0.03);
    assert_eq!(after, before + 1);
    let (before, after) = cited_access(0.01);
    assert_eq!(after, before);
}

#[test]
fn one_immediate_reflection_per_agent_ticker_day() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::fixture_config(dir.path(), 20, 3, 12, "count");
    let universe = config.universe.clone();
    let covered: BTreeMap<String, usize> = config
        .agents
        .iter()
        .map(|a| (a.id.clone(), universe.keys().filter(|t| covers(&a.character(), &universe, t)).count()))
        .collect();
    let mut sim = Simulation::with_store(config, Store::in_memory()).unwrap();
    sim.run().unwrap();
    // The rule core needs five prior sessions, so decisions start on day six.
    let decision_days = sim.dates().len() - 5;
    for (agent, tickers) in covered {
        let n = sim
            .store()
            .cognition()
            .reflections
            .iter()
            .filter(|r| r.record.agent_id == agent && r.record.flag == ReflectionFlag::Immediate)
            .count();
        assert_eq!(n, decision_days * tickers, "{agent}");
    }
}

#[test]
fn weekly_return_matches_ledger_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::fixture_config(dir.path(), 30, 3, 13, "weekly");
    let mut sim = Simulation::with_store(config, Store::in_memory()).unwrap();
    sim.run().unwrap();
    let dates = sim.dates().to_vec();
    let store = sim.store();
    let close = |t: &str, d: NaiveDate| store.raw().last_close_on_or_before(t, d).map(|(_, c)| c);
    let mut checked = 0;
    for a in sim.agents() {
        let values = portfolio_values(a.initial_cash, &a.portfolio.ledger, &close, &dates).unwrap();
        for r in store.cognition().reflections.iter().map(|r| &r.record) {
            if r.agent_id != a.id() || r.flag != ReflectionFlag::Extended {
                continue;
            }
            let period = r.period.unwrap();
            let end = dates.iter().rposition(|d| period.contains(*d)).unwrap();
            let base = dates
                .iter()
                .rposition(|d| *d < period.start)
                .map_or(a.initial_cash, |i| values[i]);
            let expected = values[end] / base - 1.0;
            assert!((r.realized_return - expected).abs() < 1e-9);
            let volume: u64 = a
                .portfolio
                .ledger
                .iter()
                .filter(|t| period.contains(t.timestamp.date()))
                .map(|t| t.shares)
                .sum();
            assert_eq!(r.trade_volume, volume);
            checked += 1;
        }
    }
    assert!(checked >= 3 * 5);
}

#[test]
fn contexts_rebuild_identically_from_a_replayed_store() {
    let dir = tempfile::tempdir().unwrap();
    let root = tempfile::tempdir().unwrap();
    let config = common::fixture_config(dir.path(), 15, 2, 2, "ctx");
    let mut sim = Simulation::open(config.clone(), root.path()).unwrap();
    sim.run().unwrap();
    let mut live = Store::load(root.path().join("ctx")).unwrap();
    let mut copy = Store::load(root.path().join("ctx")).unwrap();
    assert_eq!(live.cognition(), sim.store().cognition());
    let agent = &sim.agents()[0];
    let at = sim.dates().last().unwrap().and_hms_opt(16, 0, 0).unwrap() + Duration::days(1);
    let embedder = HashingEmbedder::new(256);
    let build = |s: &mut Store| {
        build_context(s, agent, "AAA", at, Phase::Test, &config.context_options(), &config.memory, &embedder)
            .map(|c| serde_json::to_string(&c).unwrap())
    };
    // No bar on the following day.
    let at_last = sim.dates().last().unwrap().and_hms_opt(23, 0, 0).unwrap();
    assert!(build(&mut live).is_err());
    let a = build_context(&mut live, agent, "AAA", at_last, Phase::Test, &config.context_options(), &config.memory, &embedder).unwrap();
    let b = build_context(&mut copy, agent, "AAA", at_last, Phase::Test, &config.context_options(), &config.memory, &embedder).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
