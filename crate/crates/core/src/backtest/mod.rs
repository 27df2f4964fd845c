//! Day-stepped simulation runs, run configuration, metrics and reports.

mod audit;
mod config;
mod metrics;
mod sim;

pub use audit::{ContextAuditor, Violation};
pub use config::{AgentSpec, CoreSpec, DataPaths, EmbeddingSpec, RunConfig};
pub use metrics::{
    compute_metrics, emit_report, metrics_from_values, portfolio_values, report_csv, Metrics,
    MetricsReport, ReportFormat, TRADING_DAYS,
};
pub use sim::{
    build_embedder, DayReport, DecisionRecord, Gap, IngestSummary, RunSummary, SessionSummary, Simulation,
    AUDIT_LOG, CONFIG_FILE, DEBATE_TIME, DECISION_TIME, EXTENDED_TIME, LEDGER_FILE, SWEEP_TIME,
    TEST_EXECUTION_TIME,
};

use chrono::NaiveDate;
use thiserror::Error;

use crate::agent::AgentError;
use crate::debate::DebateError;
use crate::decision::DecisionError;
use crate::embedding::EmbeddingError;
use crate::market_data::IngestError;
use crate::memory::MemoryError;
use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("config: {0}")]
    Config(String),
    #[error("no close for {ticker} on or before {date}")]
    MissingPrice { ticker: String, date: NaiveDate },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Decision(#[from] DecisionError),
    #[error(transparent)]
    Debate(#[from] DebateError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
