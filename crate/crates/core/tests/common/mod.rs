#![allow(dead_code)]

pub mod oracle;

use std::path::{Path, PathBuf};

use layered_trading::backtest::RunConfig;
use layered_trading::fixtures::{generate, FixtureSpec};

pub const TICKERS: [&str; 5] = ["AAA", "BBB", "CCC", "DDD", "EEE"];

/// Writes seeded fixtures into `dir` and returns a config over them with data
/// paths resolved.
pub fn fixture_config(dir: &Path, days: usize, agents: usize, seed: u64, run_id: &str) -> RunConfig {
    let spec = FixtureSpec::new(days, &TICKERS, seed);
    generate(&spec).write_to(dir).unwrap();
    let mut config = spec.sample_config(run_id, agents);
    let resolve = |p: &mut Option<PathBuf>| {
        if let Some(p) = p.as_mut() {
            *p = dir.join(&*p);
        }
    };
    resolve(&mut config.data.prices);
    resolve(&mut config.data.holdings);
    resolve(&mut config.data.news);
    config
}
