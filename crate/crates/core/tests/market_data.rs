mod common;

use std::path::Path;

use layered_trading::agent::{RiskPreference, TraderCharacter};
use layered_trading::backtest::Simulation;
use layered_trading::embedding::HashingEmbedder;
use layered_trading::market_data::{
    covers, ingest_holdings, ingest_news, ingest_prices, news_memories, RejectKind, Universe,
};
use layered_trading::store::{Frequency, Store};

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const PRICES: &str = "date,ticker,open,high,low,close,volume
2022-01-03,AAA,10,11,9,10.5,100
2022-01-04,AAA,10.5,11,10,10.8,120
2022-01-05,AAA,10.8,10.9,10.1,10.2,90
2022-01-03,BBB,50,51,49,50.5,10
2022-01-04,BBB,50.5,52,50,51.5,12
";

#[test]
fn valid_prices_are_counted_and_reingest_adds_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "p.csv", PRICES);
    let mut store = Store::in_memory();
    let first = ingest_prices(&mut store, &p, Frequency::Daily).unwrap();
    assert_eq!(first.count(), 5);
    let again = ingest_prices(&mut store, &p, Frequency::Daily).unwrap();
    assert_eq!((again.count(), again.duplicates), (0, 5));
    assert_eq!(store.raw_records().len(), 5);
}

#[test]
fn bad_rows_are_rejected_individually() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{PRICES}2022-01-06,AAA,10,9,11,10,5\n2022-01-07,AAA,ten,11,9,10,5\n2022-01-10,AAA,10,11,9,10.1,7\n");
    let p = write(dir.path(), "p.csv", &body);
    let mut store = Store::in_memory();
    let r = ingest_prices(&mut store, &p, Frequency::Daily).unwrap();
    assert_eq!(r.count(), 6);
    let kinds: Vec<(u64, RejectKind)> = r.rejected.iter().map(|x| (x.line, x.kind)).collect();
    assert_eq!(kinds, vec![(7, RejectKind::SchemaViolation), (8, RejectKind::Malformed)]);
    assert!(r.first_error(&p).unwrap().to_string().contains(":7:"));
}

#[test]
fn wrong_header_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "p.csv", "day,ticker,open,high,low,close,volume\n");
    assert!(ingest_prices(&mut Store::in_memory(), &p, Frequency::Daily).is_err());
}

#[test]
fn holding_direction_must_match_sign() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "h.csv",
        "date,fund,ticker,shares,direction\n2022-01-03,F,AAA,100,Buy\n2022-01-03,F,BBB,100,Sell\n2022-01-03,F,CCC,-5,Sell\n2022-01-04,F,AAA,0,Buy\n2022-01-04,F,AAA,7,Hold\n",
    );
    let r = ingest_holdings(&mut Store::in_memory(), &p).unwrap();
    // Valid rows per a direct reading of the file: sign agrees, delta non-zero.
    assert_eq!(r.count(), 2);
    assert_eq!(r.rejected.len(), 3);
}

#[test]
fn news_lines_and_missing_fields() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "n.jsonl",
        r#"{"timestamp":"2022-01-03T09:00:00","ticker":"AAA","headline":"a","body":"x"}
{"timestamp":"2022-01-03T10:00:00","ticker":"BBB","headline":"b","body":"y"}
{"timestamp":"2022-01-03","ticker":"*","headline":"c","body":"z","category":"macro"}
{"timestamp":"2022-01-03T11:00:00","ticker":"AAA","body":"no headline"}
"#,
    );
    let mut store = Store::in_memory();
    let r = ingest_news(&mut store, &p).unwrap();
    assert_eq!(r.count(), 3);
    assert_eq!(r.rejected[0].line, 4);
    assert!(store.cognition().memories.is_empty());
}

#[test]
fn out_of_scope_items_make_no_memory() {
    let universe: Universe = [("AAA", "tech"), ("BBB", "energy")]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    let tech = TraderCharacter::new("t", RiskPreference::Neutral, ["tech"]);
    let energy = TraderCharacter::new("e", RiskPreference::Neutral, ["energy"]);
    assert!(covers(&tech, &universe, "AAA") && !covers(&tech, &universe, "BBB"));
    assert!(covers(&energy, &universe, "*"));
    let item = layered_trading::store::NewsItem {
        ticker: "BBB".into(),
        timestamp: chrono::NaiveDate::from_ymd_opt(2022, 1, 3).unwrap().and_hms_opt(9, 0, 0).unwrap(),
        headline: "h".into(),
        body: "b".into(),
        category: Default::default(),
    };
    let got = news_memories(&item, &[tech, energy], &universe, &HashingEmbedder::new(32)).unwrap();
    assert_eq!(got.iter().map(|(a, _)| a.as_str()).collect::<Vec<_>>(), vec!["e"]);
}

#[test]
fn released_news_memories_equal_covering_agent_count() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::fixture_config(dir.path(), 25, 3, 8, "news");
    let characters: Vec<TraderCharacter> = config.agents.iter().map(|a| a.character()).collect();
    let universe = config.universe.clone();
    let mut sim = Simulation::with_store(config, Store::in_memory()).unwrap();
    let last = *sim.dates().last().unwrap();
    let cutoff = last.and_hms_opt(16, 0, 0).unwrap();
    let expected: usize = sim
        .store()
        .raw()
        .news()
        .iter()
        .filter(|n| n.timestamp <= cutoff)
        .map(|n| characters.iter().filter(|c| covers(c, &universe, &n.ticker)).count())
        .sum();
    let mut released = 0;
    while let Some(day) = sim.step().unwrap() {
        released += day.news_released;
    }
    assert!(expected > 0);
    assert_eq!(released, expected);
}
