use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::BacktestError;
use crate::agent::{ContextOptions, ReflectionConfig, RiskPreference, TradeSizing, TraderCharacter};
use crate::debate::DebateConfig;
use crate::decision::{LlmConfig, Phase, RuleConfig};
use crate::market_data::Universe;
use crate::memory::MemoryConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: String,
    pub risk: RiskPreference,
    pub sectors: Vec<String>,
    pub initial_cash: f64,
}

impl AgentSpec {
    pub fn character(&self) -> TraderCharacter {
        TraderCharacter::new(self.id.clone(), self.risk, self.sectors.iter().cloned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoreSpec {
    Rule(RuleConfig),
    Llm(LlmConfig),
}

impl Default for CoreSpec {
    fn default() -> Self {
        CoreSpec::Rule(RuleConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingSpec {
    Hashing { dimension: usize },
    Http {
        endpoint: String,
        dimension: usize,
        timeout_secs: u64,
    },
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec::Hashing { dimension: 256 }
    }
}

/// Input files, resolved relative to the config file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataPaths {
    pub prices: Option<PathBuf>,
    pub minute_prices: Option<PathBuf>,
    pub holdings: Option<PathBuf>,
    pub news: Option<PathBuf>,
}

impl DataPaths {
    fn resolve(&mut self, base: &Path) {
        for p in [&mut self.prices, &mut self.minute_prices, &mut self.holdings, &mut self.news]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

fn default_k() -> usize {
    5
}

fn default_period() -> i64 {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: String,
    #[serde(default = "default_phase")]
    pub phase: Phase,
    /// First and last decision dates; default to the whole price history.
    #[serde(default)]
    pub start: Option<NaiveDate>,
    #[serde(default)]
    pub end: Option<NaiveDate>,
    #[serde(default)]
    pub data: DataPaths,
    pub universe: Universe,
    pub agents: Vec<AgentSpec>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub memory: MemoryConfig,
    #[serde(default)]
    pub sizing: TradeSizing,
    #[serde(default)]
    pub reflection: ReflectionConfig,
    #[serde(default)]
    pub debate: DebateConfig,
    #[serde(default)]
    pub core: CoreSpec,
    #[serde(default)]
    pub embedding: EmbeddingSpec,
    /// Days per extended-reflection period, counted from the first decision date.
    #[serde(default = "default_period")]
    pub period_days: i64,
    #[serde(default)]
    pub seed: u64,
    /// Run id (under the same runs directory) whose final memory this run starts from.
    #[serde(default)]
    pub inherit_from: Option<String>,
}

fn default_phase() -> Phase {
    Phase::Train
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, BacktestError> {
        let config: RunConfig = serde_json::from_str(text)
            .map_err(|e| BacktestError::Config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; data paths are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self, BacktestError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BacktestError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)?;
        config
            .data
            .resolve(path.parent().unwrap_or_else(|| Path::new(".")));
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), BacktestError> {
        let bad = |m: String| Err(BacktestError::Config(m));
        let id_ok = !self.run_id.is_empty()
            && self
                .run_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
            && !self.run_id.starts_with('.');
        if !id_ok {
            return bad(format!("run_id {:?} must be a non-empty [A-Za-z0-9._-] name", self.run_id));
        }
        if self.agents.is_empty() {
            return bad("agent roster is empty".into());
        }
        let mut ids = BTreeSet::new();
        let sectors: BTreeSet<&String> = self.universe.values().collect();
        for a in &self.agents {
            if !ids.insert(&a.id) {
                return bad(format!("duplicate agent id {}", a.id));
            }
            if a.sectors.is_empty() {
                return bad(format!("agent {} has no sectors", a.id));
            }
            if let Some(s) = a.sectors.iter().find(|s| !sectors.contains(s)) {
                return bad(format!("agent {} covers sector {s} with no tickers", a.id));
            }
            if !(a.initial_cash.is_finite() && a.initial_cash >= 0.0) {
                return bad(format!("agent {} initial cash must be non-negative", a.id));
            }
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if let (Some(s), Some(e)) = (self.start, self.end) {
            if s > e {
                return bad(format!("start {s} is after end {e}"));
            }
        }
        if self.period_days < 1 {
            return bad("period_days must be positive".into());
        }
        for f in [self.sizing.significant, self.sizing.slight] {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("trade sizing fraction {f} outside [0, 1]"));
            }
        }
        if self.inherit_from.is_some() && self.phase == Phase::Train {
            return bad("inherit_from is only meaningful for the test phase".into());
        }
        self.memory
            .validate()
            .map_err(|e| BacktestError::Config(e.to_string()))
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn context_options(&self) -> ContextOptions {
        let window = match &self.core {
            CoreSpec::Rule(r) => r.window,
            CoreSpec::Llm(_) => RuleConfig::default().window,
        };
        ContextOptions {
            k: self.k,
            history_bars: window + 1,
            window_days: 7,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_with_core(core: &str) -> String {
        format!(
            r#"{{"run_id":"r","universe":{{"AAA":"tech"}},
            "agents":[{{"id":"a","risk":"neutral","sectors":["tech"],"initial_cash":1000}}],
            "core":{core}}}"#
        )
    }

    #[test]
    fn llm_core_names_the_credential_variable() {
        let c = RunConfig::from_json(&config_with_core(r#"{"kind":"llm","api_key_env":"MY_KEY"}"#)).unwrap();
        match c.core {
            CoreSpec::Llm(l) => assert_eq!(l.api_key_env, "MY_KEY"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn a_literal_credential_in_the_config_is_rejected() {
        let err = RunConfig::from_json(&config_with_core(r#"{"kind":"llm","api_key":"sk-123"}"#)).unwrap_err();
        assert!(err.to_string().contains("api_key"), "{err}");
    }

    #[test]
    fn hash_changes_with_content() {
        let a = RunConfig::from_json(&config_with_core(r#"{"kind":"rule"}"#)).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.k = 9;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
