//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::{NaiveDate, NaiveDateTime};
use layered_trading::agent::{PortfolioState, Side, TradeExecution};
use layered_trading::backtest::{
    compute_metrics, Simulation, AUDIT_LOG, LEDGER_FILE,
};
use layered_trading::decision::Phase;
use layered_trading::embedding::EmbeddingVector;
use layered_trading::fixtures::FixtureSpec;
use layered_trading::memory::{
    maintenance_score, recency_score, relevancy_score, score_cohort, LayerKind, MemoryConfig,
    MemoryEvent, MemoryId, MemoryOrigin,
};
use layered_trading::store::{CognitionRecord, Store, COGNITION_LOG};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close_to(what: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{what}: {got} vs {want} (tol {tol})"))
}

fn lone_event(layer: LayerKind, at: NaiveDateTime, embedding: EmbeddingVector) -> MemoryEvent {
    MemoryEvent {
        id: MemoryId("a-00000001".into()),
        agent_id: "a".into(),
        layer,
        text: "x".into(),
        embedding,
        timestamp: at,
        access_count: 0,
        layer_accesses: 0,
        last_relevancy: 0.5,
        origin: MemoryOrigin::MarketNews,
        pinned: false,
        ticker: None,
        source_ref: None,
        promoted_on: None,
    }
}

fn scoring_exactness() -> Result<String, String> {
    let e1 = (-1f64).exp();
    close_to("recency(365, 365)", recency_score(365.0, 365.0).unwrap(), e1, 1e-9)?;
    close_to("recency(3, 3)", recency_score(3.0, 3.0).unwrap(), e1, 1e-9)?;
    let a = EmbeddingVector::new(vec![1.0, 2.0, 2.0]).unwrap();
    let b = EmbeddingVector::new(vec![2.0, 1.0, 2.0]).unwrap();
    close_to("relevancy", relevancy_score(&a, &b).unwrap(), 8.0 / 9.0, 1e-6)?;

    let mut config = MemoryConfig::default();
    let third = 1.0 / 3.0;
    config.long.weight_recency = third;
    config.long.weight_relevancy = third;
    config.long.weight_importance = third;
    let now = common::oracle::now();
    let event = lone_event(LayerKind::Long, now - chrono::Duration::days(40), a.clone());
    let gamma = score_cohort(&[event], &b, now, &config).unwrap()[0].gamma;
    close_to("lone-event gamma", gamma, 100.0 * (third + third + 0.9 * third), 1e-6)?;
    close_to("lone-event gamma", gamma, 96.667, 1e-3)?;
    Ok(format!("gamma {gamma:.6}"))
}

fn retrieval_oracle() -> Result<String, String> {
    common::oracle::check_stores(200, 7)?;
    Ok("200 stores".into())
}

/// Layer parameters under which events also leave the store within a
/// 90-day run; at the defaults the importance term keeps promoted events
/// above the purge floor for far longer.
fn churn_config() -> MemoryConfig {
    let mut m = MemoryConfig::default();
    m.middle.stability_days = 10.0;
    m.middle.weight_recency = 0.5;
    m.middle.weight_relevancy = 0.3;
    m.middle.weight_importance = 0.2;
    m.middle.purge_threshold = 40.0;
    m.long.stability_days = 30.0;
    m.long.purge_threshold = 60.0;
    m
}

fn lifecycle() -> Result<String, String> {
    let seed = ChaCha8Rng::seed_from_u64(90).random::<u64>();
    let (p0, x0) = lifecycle_run(seed, MemoryConfig::default())?;
    let (p1, x1) = lifecycle_run(seed, churn_config())?;
    ensure(p0 > 0 && p1 > 0 && x1 > 0, || {
        format!("vacuous run: promotions {p0}/{p1}, purges {x0}/{x1}")
    })?;
    Ok(format!("defaults: {p0} promotions, {x0} purges; churn: {p1} promotions, {x1} purges"))
}

/// Lifecycle observations over a 90-day simulated run; returns promotion
/// and purge counts.
fn lifecycle_run(seed: u64, memory: MemoryConfig) -> Result<(usize, usize), String> {
    let dir = tempfile::tempdir().unwrap();
    let mut config = common::fixture_config(dir.path(), 90, 3, seed, "lifecycle");
    config.memory = memory.clone();
    let mut sim = Simulation::with_store(config, Store::in_memory()).map_err(|e| e.to_string())?;
    let gammas: Arc<Mutex<(f64, f64, usize)>> = Arc::new(Mutex::new((f64::MAX, f64::MIN, 0)));
    let seen = gammas.clone();
    sim.set_context_observer(move |ctx| {
        let mut g = seen.lock().unwrap();
        for layer in &ctx.memories {
            for e in &layer.events {
                g.0 = g.0.min(e.score.gamma);
                g.1 = g.1.max(e.score.gamma);
                g.2 += 1;
            }
        }
    });
    let mut layer_of: HashMap<(String, MemoryId), LayerKind> = HashMap::new();
    let mut purged: BTreeSet<(String, MemoryId)> = BTreeSet::new();
    let (mut promotions, mut sweeps_scored) = (0, 0);
    while let Some(day) = sim.step().map_err(|e| e.to_string())? {
        for sweep in &day.sweeps {
            for t in &sweep.promoted {
                ensure(t.from.next() == Some(t.to), || format!("promotion {:?} -> {:?}", t.from, t.to))?;
                ensure((0.0..=120.0).contains(&t.gamma), || format!("sweep gamma {}", t.gamma))?;
                promotions += 1;
            }
            for id in &sweep.purged {
                purged.insert((sweep.agent_id.clone(), id.clone()));
            }
        }
        let now = day.date.and_hms_opt(17, 45, 0).unwrap();
        for (agent, space) in &sim.store().cognition().memories {
            let mut members: BTreeSet<&MemoryId> = BTreeSet::new();
            for layer in LayerKind::ALL {
                for e in space.layer(layer) {
                    ensure(members.insert(&e.id), || format!("{} is in two layers", e.id))?;
                    let key = (agent.clone(), e.id.clone());
                    ensure(!purged.contains(&key), || format!("purged {} came back", e.id))?;
                    if let Some(prev) = layer_of.insert(key, layer) {
                        ensure(prev <= layer, || format!("{} moved {prev:?} -> {layer:?}", e.id))?;
                    }
                    let g = maintenance_score(e, now, &memory).map_err(|e| e.to_string())?.gamma;
                    ensure((0.0..=120.0).contains(&g), || format!("maintenance gamma {g}"))?;
                    sweeps_scored += 1;
                }
            }
            ensure(space.purged_ids().iter().all(|id| space.get(id).is_none()), || "purged id still live".into())?;
        }
    }
    let (lo, hi, n) = *gammas.lock().unwrap();
    ensure(n > 0 && lo >= 0.0 && hi <= 120.0, || format!("retrieval gamma range [{lo}, {hi}]"))?;
    ensure(sweeps_scored > 0 && sim.dates().len() == 90, || "short run".into())?;
    Ok((promotions, purged.len()))
}

fn decay_ordering() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10_000 {
        let d: f64 = rng.random_range(0.0..5000.0);
        let (s, m, l) = (
            recency_score(d, 3.0).unwrap(),
            recency_score(d, 90.0).unwrap(),
            recency_score(d, 365.0).unwrap(),
        );
        ensure(s <= m && m <= l, || format!("delta {d}: {s} {m} {l}"))?;
    }
    Ok("10000 deltas".into())
}

fn accounting_identity() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let config = common::fixture_config(dir.path(), 60, 3, 60, "books");
    let mut sim = Simulation::with_store(config, Store::in_memory()).map_err(|e| e.to_string())?;
    let mut days = 0;
    while sim.step().map_err(|e| e.to_string())?.is_some() {
        days += 1;
        for a in sim.agents() {
            ensure(a.portfolio.cash >= 0.0, || format!("{} cash {}", a.id(), a.portfolio.cash))?;
        }
    }
    let mut trades = 0;
    for a in sim.agents() {
        // Independent replay of the ledger: signed share and cash deltas.
        let mut cash = a.initial_cash;
        let mut shares: BTreeMap<&str, i64> = BTreeMap::new();
        for t in &a.portfolio.ledger {
            let s = shares.entry(&t.ticker).or_default();
            match t.side {
                Side::Buy => {
                    cash -= t.notional();
                    *s += t.shares as i64;
                }
                Side::Sell => {
                    cash += t.notional();
                    *s -= t.shares as i64;
                }
            }
            ensure(cash >= -1e-9 && *s >= 0, || format!("{} went negative at {}", a.id(), t.timestamp))?;
        }
        close_to("cash", a.portfolio.cash, cash, 1e-6)?;
        shares.retain(|_, s| *s != 0);
        let live: BTreeMap<&str, i64> = a
            .portfolio
            .positions
            .iter()
            .map(|(t, p)| (t.as_str(), p.shares as i64))
            .filter(|(_, s)| *s != 0)
            .collect();
        ensure(live == shares, || format!("{} positions {live:?} vs {shares:?}", a.id()))?;
        ensure(PortfolioState::from_ledger(a.initial_cash, &a.portfolio.ledger) == a.portfolio, || {
            format!("{} rebuilt book differs", a.id())
        })?;
        trades += a.portfolio.ledger.len();
    }
    Ok(format!("{days} days, {trades} trades"))
}

fn debate_conservation() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let config = common::fixture_config(dir.path(), 30, 5, 66, "debates");
    let rounds = config.debate.max_rounds;
    let mut sim = Simulation::with_store(config, Store::in_memory()).map_err(|e| e.to_string())?;
    let mut sessions = Vec::new();
    while let Some(day) = sim.step().map_err(|e| e.to_string())? {
        sessions.extend(day.sessions);
    }
    let mut stored: HashMap<&str, usize> = HashMap::new();
    // (session, receiver, round) -> short-layer feedback events added
    let mut growth: HashMap<(&str, &str, u32), usize> = HashMap::new();
    for r in sim.store().cognition_records() {
        match &r.record {
            CognitionRecord::Debate { receiver_id, message } => {
                ensure(receiver_id == &message.receiver_id && message.sender_id != message.receiver_id, || {
                    format!("bad debate tag on record {}", r.id)
                })?;
                *stored.entry(&message.session_id).or_default() += 1;
            }
            CognitionRecord::Memory { event } if event.origin == MemoryOrigin::DebateFeedback => {
                ensure(event.layer == LayerKind::Short, || format!("{} not short", event.id))?;
                let session = event.source_ref.as_deref().unwrap_or("");
                let round = (event.timestamp.time() - chrono::NaiveTime::from_hms_opt(16, 30, 0).unwrap()).num_minutes() as u32 + 1;
                *growth.entry((session, &event.agent_id, round)).or_default() += 1;
            }
            _ => {}
        }
    }
    let mut big = 0;
    for s in &sessions {
        let n = s.participants.len();
        let want = rounds as usize * n * (n - 1);
        let got = stored.get(s.session_id.as_str()).copied().unwrap_or(0);
        ensure(got == want, || format!("{}: {got} messages, want {want}", s.session_id))?;
        for p in &s.participants {
            for r in 1..=rounds {
                let g = growth.get(&(s.session_id.as_str(), p.as_str(), r)).copied().unwrap_or(0);
                ensure(g == n - 1, || format!("{} {p} round {r}: short grew {g}", s.session_id))?;
            }
        }
        big += usize::from(n > 2);
    }
    ensure(!sessions.is_empty() && big > 0, || "no multi-party sessions".into())?;
    Ok(format!("{} sessions ({big} with 3+ participants)", sessions.len()))
}

fn no_lookahead() -> Result<String, String> {
    let data = tempfile::tempdir().unwrap();
    let root = tempfile::tempdir().unwrap();
    let days = FixtureSpec::new(60, &common::TICKERS, 70).trading_days();
    let mut train = common::fixture_config(data.path(), 60, 3, 70, "train");
    train.end = Some(days[39]);
    let mut sim = Simulation::open(train.clone(), root.path()).map_err(|e| e.to_string())?;
    sim.run().map_err(|e| e.to_string())?;
    let train_audit = sim.auditor().clone();
    drop(sim);
    let mut test = train;
    test.run_id = "test".into();
    test.phase = Phase::Test;
    test.start = Some(days[40]);
    test.end = None;
    test.inherit_from = Some("train".into());
    let mut sim = Simulation::open(test, root.path()).map_err(|e| e.to_string())?;
    sim.run().map_err(|e| e.to_string())?;
    let test_audit = sim.auditor();
    for (phase, a) in [("train", &train_audit), ("test", test_audit)] {
        ensure(a.is_clean(), || format!("{phase}: {:?}", a.violations.first()))?;
        ensure(a.contexts > 0, || format!("{phase}: no contexts audited"))?;
    }
    ensure(test_audit.holdings_in_test == 0, || "holdings in test contexts".into())?;
    Ok(format!(
        "{} contexts, {} dated items",
        train_audit.contexts + test_audit.contexts,
        train_audit.items + test_audit.items
    ))
}

fn run_to(root: &Path, data: &Path) -> Result<(), String> {
    let config = common::fixture_config(data, 40, 3, 88, "replay");
    Simulation::open(config, root)
        .and_then(|mut s| s.run())
        .map(|_| ())
        .map_err(|e| e.to_string())
}

fn replay_determinism() -> Result<String, String> {
    let data = tempfile::tempdir().unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let t0 = Instant::now();
    run_to(a.path(), data.path())?;
    let single = t0.elapsed();
    let t1 = Instant::now();
    run_to(b.path(), data.path())?;
    let mut compared = 0;
    for file in [LEDGER_FILE, COGNITION_LOG, AUDIT_LOG, "report.csv", "report.json"] {
        let x = std::fs::read(a.path().join("replay").join(file)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.path().join("replay").join(file)).map_err(|e| e.to_string())?;
        ensure(x == y, || format!("{file} differs"))?;
        compared += x.len();
    }
    let check = t1.elapsed();
    ensure(check < single * 2, || format!("replay check {check:?} vs single run {single:?}"))?;
    Ok(format!("{compared} bytes identical; single run {single:.2?}, replay check {check:.2?}"))
}

fn metrics_correctness() -> Result<String, String> {
    let d0 = NaiveDate::from_ymd_opt(2022, 1, 3).unwrap();
    let span: Vec<NaiveDate> = (0..11).map(|i| d0 + chrono::Duration::days(i)).collect();
    let buy = TradeExecution {
        timestamp: d0.and_hms_opt(16, 0, 0).unwrap(),
        ticker: "AAA".into(),
        side: Side::Buy,
        shares: 1,
        price: 100.0,
    };
    let rising = |_: &str, d: NaiveDate| Some(100.0 + (d - d0).num_days() as f64);
    let m = compute_metrics(100.0, &[buy], &rising, &span).map_err(|e| e.to_string())?;
    close_to("buy-and-hold cumulative", m.cumulative_return, 0.10, 1e-9)?;
    let flat = compute_metrics(1000.0, &[], &|_, _| Some(50.0), &span).map_err(|e| e.to_string())?;
    ensure(flat.volatility == 0.0 && flat.sharpe.is_none(), || format!("flat: {flat:?}"))?;

    // Ten simulated days against a spreadsheet-style recomputation.
    let dir = tempfile::tempdir().unwrap();
    let config = common::fixture_config(dir.path(), 10, 3, 10, "ten");
    let mut config = config;
    config.core = layered_trading::backtest::CoreSpec::Rule(layered_trading::decision::RuleConfig {
        window: 2,
        ..Default::default()
    });
    let mut sim = Simulation::with_store(config, Store::in_memory()).map_err(|e| e.to_string())?;
    let report = sim.run().map_err(|e| e.to_string())?.metrics;
    let dates = sim.dates().to_vec();
    let mut trades = 0;
    for a in sim.agents() {
        let mut cash = a.initial_cash;
        let mut held: BTreeMap<String, f64> = BTreeMap::new();
        let mut values = Vec::new();
        for d in &dates {
            for t in a.portfolio.ledger.iter().filter(|t| t.timestamp.date() == *d) {
                let sign = if t.side == Side::Buy { 1.0 } else { -1.0 };
                cash -= sign * t.shares as f64 * t.price;
                *held.entry(t.ticker.clone()).or_default() += sign * t.shares as f64;
            }
            let mut v = cash;
            for (ticker, s) in &held {
                let px = sim.store().raw().daily_close(ticker, *d).ok_or("gap in fixture prices")?;
                v += s * px;
            }
            values.push(v);
        }
        let r: Vec<f64> = values.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
        let n = r.len() as f64;
        let mean = r.iter().sum::<f64>() / n;
        let sd = (r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        let m = &report.agents[a.id()];
        close_to("cumulative", m.cumulative_return, values[values.len() - 1] / values[0] - 1.0, 1e-9)?;
        close_to("volatility", m.volatility, sd * 252f64.sqrt(), 1e-9)?;
        match m.sharpe {
            Some(s) => close_to("sharpe", s, mean / sd * 252f64.sqrt(), 1e-9)?,
            None => ensure(sd == 0.0, || "sharpe missing with non-zero std".into())?,
        }
        close_to("final value", m.final_value, values[values.len() - 1], 1e-9)?;
        trades += a.portfolio.ledger.len();
    }
    ensure(trades > 0, || "ten-day fixture never traded".into())?;
    Ok(format!("ten-day fixture with {trades} trades"))
}

fn persistence_round_trip() -> Result<String, String> {
    let data = tempfile::tempdir().unwrap();
    let root = tempfile::tempdir().unwrap();
    let config = common::fixture_config(data.path(), 60, 3, 100, "persist");
    let mut sim = Simulation::open(config, root.path()).map_err(|e| e.to_string())?;
    let log = root.path().join("persist").join(COGNITION_LOG);
    let mut checkpoints = 0;
    let mut day = 0;
    while sim.step().map_err(|e| e.to_string())?.is_some() {
        day += 1;
        if day % 10 == 0 {
            let replayed = Store::replay_cognition_log(&log).map_err(|e| e.to_string())?;
            ensure(&replayed == sim.store().cognition(), || format!("replay differs at day {day}"))?;
            checkpoints += 1;
        }
    }
    Ok(format!("{checkpoints} checkpoints, {} records", sim.store().cognition_records().len()))
}

fn main() {
    let criteria: [(&str, Check, Duration); 10] = [
        ("scoring exactness", scoring_exactness, Duration::from_secs(1)),
        ("retrieval oracle equivalence", retrieval_oracle, Duration::from_secs(30)),
        ("lifecycle state machine", lifecycle, Duration::from_secs(60)),
        ("layer decay ordering", decay_ordering, Duration::from_secs(1)),
        ("accounting identity", accounting_identity, Duration::from_secs(60)),
        ("debate conservation", debate_conservation, Duration::from_secs(30)),
        ("no-lookahead audit", no_lookahead, Duration::from_secs(30)),
        ("replay determinism", replay_determinism, Duration::MAX),
        ("metrics correctness", metrics_correctness, Duration::from_secs(1)),
        ("persistence round-trip", persistence_round_trip, Duration::from_secs(30)),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > limit => Err(format!("{detail}; took {elapsed:.2?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{elapsed:.2?}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{elapsed:.2?}]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
