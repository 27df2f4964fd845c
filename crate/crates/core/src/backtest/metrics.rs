use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::BacktestError;
use crate::agent::{PortfolioState, TradeExecution};
use crate::decision::Phase;

pub const TRADING_DAYS: f64 = 252.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub start_value: f64,
    pub final_value: f64,
    pub cumulative_return: f64,
    pub volatility: f64,
    /// `None` when the return series has zero variance.
    pub sharpe: Option<f64>,
    pub trade_count: usize,
    pub days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub run_id: String,
    pub config_hash: String,
    pub phase: Phase,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub agents: BTreeMap<String, Metrics>,
    pub aggregate: Metrics,
}

/// Daily portfolio values over `span`, marking positions at each day's
/// close (carried forward over gaps). Trades count on their own date.
pub fn portfolio_values(
    initial_cash: f64,
    ledger: &[TradeExecution],
    close: &dyn Fn(&str, NaiveDate) -> Option<f64>,
    span: &[NaiveDate],
) -> Result<Vec<f64>, BacktestError> {
    let mut trades: Vec<&TradeExecution> = ledger.iter().collect();
    trades.sort_by_key(|t| t.timestamp);
    let mut book = PortfolioState::new(initial_cash);
    let mut next = 0;
    let mut values = Vec::with_capacity(span.len());
    for &day in span {
        while next < trades.len() && trades[next].timestamp.date() <= day {
            book.apply(trades[next].clone());
            next += 1;
        }
        let mut value = book.cash;
        for (ticker, pos) in &book.positions {
            let px = close(ticker, day).ok_or_else(|| BacktestError::MissingPrice {
                ticker: ticker.clone(),
                date: day,
            })?;
            value += pos.shares as f64 * px;
        }
        values.push(value);
    }
    Ok(values)
}

/// Cumulative return, annualized volatility (sample std) and Sharpe (rf = 0).
pub fn metrics_from_values(values: &[f64], trade_count: usize) -> Metrics {
    let start_value = values.first().copied().unwrap_or(0.0);
    let final_value = values.last().copied().unwrap_or(0.0);
    let returns: Vec<f64> = values.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    let n = returns.len() as f64;
    let (volatility, sharpe) = if returns.len() < 2 {
        (0.0, None)
    } else {
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt();
        let sharpe = (std > 0.0).then(|| mean / std * TRADING_DAYS.sqrt());
        (std * TRADING_DAYS.sqrt(), sharpe)
    };
    Metrics {
        start_value,
        final_value,
        cumulative_return: if start_value > 0.0 {
            final_value / start_value - 1.0
        } else {
            0.0
        },
        volatility,
        sharpe,
        trade_count,
        days: values.len(),
    }
}

pub fn compute_metrics(
    initial_cash: f64,
    ledger: &[TradeExecution],
    close: &dyn Fn(&str, NaiveDate) -> Option<f64>,
    span: &[NaiveDate],
) -> Result<Metrics, BacktestError> {
    let in_span = |t: &&TradeExecution| span.first().is_some_and(|s| t.timestamp.date() >= *s)
        && span.last().is_some_and(|e| t.timestamp.date() <= *e);
    let values = portfolio_values(initial_cash, ledger, close, span)?;
    Ok(metrics_from_values(&values, ledger.iter().filter(in_span).count()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format {other:?} (csv or json)")),
        }
    }
}

const CSV_HEADER: [&str; 11] = [
    "run_id",
    "config_hash",
    "phase",
    "agent",
    "days",
    "start_value",
    "final_value",
    "cumulative_return",
    "volatility",
    "sharpe",
    "trade_count",
];

pub fn report_csv(report: &MetricsReport) -> Result<String, BacktestError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    let rows = report
        .agents
        .iter()
        .map(|(id, m)| (id.as_str(), m))
        .chain(std::iter::once(("aggregate", &report.aggregate)));
    for (agent, m) in rows {
        w.write_record([
            report.run_id.clone(),
            report.config_hash.clone(),
            report.phase.to_string(),
            agent.to_string(),
            m.days.to_string(),
            m.start_value.to_string(),
            m.final_value.to_string(),
            m.cumulative_return.to_string(),
            m.volatility.to_string(),
            m.sharpe.map_or(String::new(), |s| s.to_string()),
            m.trade_count.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| BacktestError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `report.csv` or `report.json` into `dir`.
pub fn emit_report(
    report: &MetricsReport,
    dir: &Path,
    format: ReportFormat,
) -> Result<PathBuf, BacktestError> {
    let (name, body) = match format {
        ReportFormat::Csv => ("report.csv", report_csv(report)?),
        ReportFormat::Json => ("report.json", serde_json::to_string_pretty(report)? + "\n"),
    };
    let path = dir.join(name);
    std::fs::write(&path, body)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::Side;
    use approx::assert_abs_diff_eq;

    fn days(n: usize) -> Vec<NaiveDate> {
        let d0 = NaiveDate::from_ymd_opt(2022, 1, 3).unwrap();
        (0..n).map(|i| d0 + chrono::Duration::days(i as i64)).collect()
    }

    #[test]
    fn flat_prices_without_trades() {
        let m = compute_metrics(1000.0, &[], &|_, _| Some(50.0), &days(10)).unwrap();
        assert_eq!(m.cumulative_return, 0.0);
        assert_eq!(m.volatility, 0.0);
        assert_eq!(m.sharpe, None);
    }

    #[test]
    fn buy_and_hold_ten_percent() {
        let span = days(11);
        let buy = TradeExecution {
            timestamp: span[0].and_hms_opt(16, 0, 0).unwrap(),
            ticker: "AAA".into(),
            side: Side::Buy,
            shares: 1,
            price: 100.0,
        };
        let d0 = span[0];
        let close = move |_: &str, d: NaiveDate| Some(100.0 + (d - d0).num_days() as f64);
        let m = compute_metrics(100.0, &[buy], &close, &span).unwrap();
        assert_abs_diff_eq!(m.cumulative_return, 0.10, epsilon = 1e-9);
        assert_eq!(m.trade_count, 1);
    }

    #[test]
    fn alternating_returns() {
        // v: 100, 101, 99.99, 100.9899, ...; arithmetic mean of ±1% is 0,
        // the compounded path drifts down by 0.01% per two-day cycle.
        let mut v = vec![100.0];
        for i in 0..20 {
            let r = if i % 2 == 0 { 0.01 } else { -0.01 };
            v.push(v[i] * (1.0 + r));
        }
        let m = metrics_from_values(&v, 0);
        assert_abs_diff_eq!(m.cumulative_return, 0.9999f64.powi(10) - 1.0, epsilon = 1e-12);
        assert!(m.cumulative_return < 0.0);
        assert_abs_diff_eq!(m.volatility, 0.01 * (20.0f64 / 19.0).sqrt() * 252f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn missing_price_for_a_held_ticker_is_an_error() {
        let span = days(2);
        let buy = TradeExecution {
            timestamp: span[0].and_hms_opt(16, 0, 0).unwrap(),
            ticker: "AAA".into(),
            side: Side::Buy,
            shares: 1,
            price: 10.0,
        };
        assert!(matches!(
            compute_metrics(100.0, &[buy], &|_, _| None, &span),
            Err(BacktestError::MissingPrice { .. })
        ));
    }
}
