//! Layered-memory trading agents with debate, on an append-only store.

pub mod agent;
pub mod debate;
pub mod decision;
pub mod embedding;
pub mod memory;
pub mod store;
pub mod fixtures;
pub mod market_data;
pub mod backtest;
