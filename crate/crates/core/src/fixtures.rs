//! Seeded synthetic market: geometric-Brownian price paths, fund records
//! and headlines loosely tied to each session's move.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::agent::RiskPreference;
use crate::backtest::{AgentSpec, DataPaths, RunConfig};
use crate::decision::Phase;
use crate::market_data::{Universe, HOLDING_HEADER, MARKET_WIDE, PRICE_HEADER};

pub const SECTORS: [&str; 3] = ["tech", "energy", "health"];
pub const PRICES_FILE: &str = "prices.csv";
pub const HOLDINGS_FILE: &str = "holdings.csv";
pub const NEWS_FILE: &str = "news.jsonl";

const FUNDS: [&str; 3] = ["ARKK", "ARKW", "ARKG"];
const TICK: f64 = 10_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub start: NaiveDate,
    pub days: usize,
    pub tickers: Vec<String>,
    pub seed: u64,
}

impl FixtureSpec {
    pub fn new(days: usize, tickers: &[&str], seed: u64) -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2022, 1, 3).expect("valid date"),
            days,
            tickers: tickers.iter().map(|t| t.to_string()).collect(),
            seed,
        }
    }

    /// Sector of each ticker, assigned round-robin.
    pub fn universe(&self) -> Universe {
        self.tickers
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), SECTORS[i % SECTORS.len()].to_string()))
            .collect()
    }

    pub fn trading_days(&self) -> Vec<NaiveDate> {
        let mut out = Vec::with_capacity(self.days);
        let mut d = self.start;
        while out.len() < self.days {
            if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                out.push(d);
            }
            d += Duration::days(1);
        }
        out
    }

    /// A runnable config over these fixtures: `agents` traders with cycling
    /// risk preferences, each covering two adjacent sectors so that tickers
    /// are shared. Data paths are relative to the fixture directory.
    pub fn sample_config(&self, run_id: &str, agents: usize) -> RunConfig {
        let risks = [RiskPreference::Seeking, RiskPreference::Neutral, RiskPreference::Averse];
        let n_sectors = SECTORS.len().min(self.tickers.len()).max(1);
        let roster = (0..agents)
            .map(|i| AgentSpec {
                id: format!("agent-{}", i + 1),
                risk: risks[i % risks.len()],
                sectors: (0..2.min(n_sectors))
                    .map(|j| SECTORS[(i + j) % n_sectors].to_string())
                    .collect(),
                initial_cash: 100_000.0,
            })
            .collect();
        RunConfig {
            run_id: run_id.to_string(),
            phase: Phase::Train,
            start: None,
            end: None,
            data: DataPaths {
                prices: Some(PRICES_FILE.into()),
                minute_prices: None,
                holdings: Some(HOLDINGS_FILE.into()),
                news: Some(NEWS_FILE.into()),
            },
            universe: self.universe(),
            agents: roster,
            k: 5,
            memory: Default::default(),
            sizing: Default::default(),
            reflection: Default::default(),
            debate: Default::default(),
            core: Default::default(),
            embedding: Default::default(),
            period_days: 7,
            seed: self.seed,
            inherit_from: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureFiles {
    pub prices_csv: String,
    pub holdings_csv: String,
    pub news_jsonl: String,
}

#[derive(Serialize)]
struct NewsOut<'a> {
    timestamp: String,
    ticker: &'a str,
    headline: String,
    body: String,
    category: &'a str,
}

fn ticks(price: f64) -> i64 {
    (price * TICK).round().max(1.0) as i64
}

fn fmt_ticks(t: i64) -> String {
    format!("{}.{:04}", t / TICK as i64, t % TICK as i64)
}

const UP: [&str; 4] = [
    "{t} climbs as demand outlook improves",
    "{t} beats quarterly expectations",
    "Analysts raise price targets on {t}",
    "{t} wins a large new contract",
];
const DOWN: [&str; 4] = [
    "{t} slides after weak guidance",
    "{t} faces mounting supply pressure",
    "Analysts cut price targets on {t}",
    "Regulators open an inquiry into {t}",
];
const MACRO: [&str; 3] = [
    "Central bank holds interest rates steady",
    "Inflation data comes in hotter than expected",
    "Jobs report shows a cooling labor market",
];

pub fn generate(spec: &FixtureSpec) -> FixtureFiles {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let universe = spec.universe();
    let days = spec.trading_days();
    let dt: f64 = 1.0 / 252.0;

    struct Series {
        ticker: String,
        mu: f64,
        sigma: f64,
        close: i64,
    }
    let mut paths: Vec<Series> = spec
        .tickers
        .iter()
        .map(|t| Series {
            ticker: t.clone(),
            mu: rng.random_range(-0.2..0.3),
            sigma: rng.random_range(0.2..0.5),
            close: ticks(rng.random_range(20.0..300.0)),
        })
        .collect();

    let mut prices = PRICE_HEADER.join(",") + "\n";
    let mut holdings = HOLDING_HEADER.join(",") + "\n";
    let mut news: BTreeMap<(String, String, String), String> = BTreeMap::new();
    let mut push_news = |ts: String, ticker: &str, headline: String, body: String, category: &str| {
        let key = (ts.clone(), ticker.to_string(), headline.clone());
        let line = serde_json::to_string(&NewsOut {
            timestamp: ts,
            ticker,
            headline,
            body,
            category,
        })
        .expect("serializable");
        news.insert(key, line);
    };

    for (i, day) in days.iter().enumerate() {
        if i % 20 == 0 {
            for sector in SECTORS {
                push_news(
                    format!("{day}T08:00:00"),
                    MARKET_WIDE,
                    format!("Quarterly strategy: weigh {sector} exposure by trend strength"),
                    format!("Desk guidance for the {sector} book: add on sustained strength, trim on breakdowns."),
                    "strategy",
                );
            }
        }
        if i % 5 == 0 {
            let h = MACRO[rng.random_range(0..MACRO.len())];
            push_news(format!("{day}T08:30:00"), MARKET_WIDE, h.to_string(), String::new(), "macro");
        }
        for p in paths.iter_mut() {
            let prev = p.close as f64 / TICK;
            let z: f64 = StandardNormal.sample(&mut rng);
            let close = prev * ((p.mu - 0.5 * p.sigma * p.sigma) * dt + p.sigma * dt.sqrt() * z).exp();
            let gap: f64 = StandardNormal.sample(&mut rng);
            let open = ticks(prev * (1.0 + 0.003 * gap));
            let close_t = ticks(close);
            let hi = ticks((open.max(close_t) as f64 / TICK) * (1.0 + rng.random_range(0.0..0.01)));
            let lo = ticks((open.min(close_t) as f64 / TICK) * (1.0 - rng.random_range(0.0..0.01)));
            let volume: u64 = rng.random_range(100_000..5_000_000);
            let _ = writeln!(
                prices,
                "{day},{},{},{},{},{},{volume}",
                p.ticker,
                fmt_ticks(open),
                fmt_ticks(hi.max(open.max(close_t))),
                fmt_ticks(lo.min(open.min(close_t))),
                fmt_ticks(close_t)
            );
            let up = close_t >= p.close;
            p.close = close_t;

            if rng.random_bool(0.4) {
                // Headlines agree with the session's move most of the time.
                let bullish = if rng.random_bool(0.7) { up } else { !up };
                let pool = if bullish { &UP } else { &DOWN };
                let headline = pool[rng.random_range(0..pool.len())].replace("{t}", &p.ticker);
                let minute = rng.random_range(0..300);
                let ts = day.and_hms_opt(9, 30, 0).expect("valid time") + Duration::minutes(minute);
                let sector = &universe[&p.ticker];
                push_news(
                    ts.format("%Y-%m-%dT%H:%M:%S").to_string(),
                    &p.ticker,
                    headline,
                    format!("{} is followed by the {sector} desk.", p.ticker),
                    "news",
                );
            }
            if rng.random_bool(0.25) {
                let fund = FUNDS[rng.random_range(0..FUNDS.len())];
                let buy = if rng.random_bool(0.65) { up } else { !up };
                let size: i64 = rng.random_range(100..5_000);
                let (shares, dir) = if buy { (size, "Buy") } else { (-size, "Sell") };
                let _ = writeln!(holdings, "{day},{fund},{},{shares},{dir}", p.ticker);
            }
        }
    }

    let mut news_jsonl = String::new();
    for line in news.values() {
        news_jsonl.push_str(line);
        news_jsonl.push('\n');
    }
    FixtureFiles {
        prices_csv: prices,
        holdings_csv: holdings,
        news_jsonl,
    }
}

impl FixtureFiles {
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(PRICES_FILE), &self.prices_csv)?;
        std::fs::write(dir.join(HOLDINGS_FILE), &self.holdings_csv)?;
        std::fs::write(dir.join(NEWS_FILE), &self.news_jsonl)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        let spec = FixtureSpec::new(30, &["AAA", "BBB", "CCC"], 7);
        assert_eq!(generate(&spec), generate(&spec));
        let other = FixtureSpec { seed: 8, ..spec.clone() };
        assert_ne!(generate(&spec).prices_csv, generate(&other).prices_csv);
    }

    #[test]
    fn skips_weekends() {
        let spec = FixtureSpec::new(10, &["AAA"], 1);
        let days = spec.trading_days();
        assert_eq!(days.len(), 10);
        assert!(days.iter().all(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)));
        assert_eq!(generate(&spec).prices_csv.lines().count(), 11);
    }
}
