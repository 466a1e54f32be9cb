//! JSON scenario configuration.
//!
//! See `docs/config-schema.md` for the field reference.

use crate::error::{Error, Result};
use crate::inference::LocalLevels;
use crate::logrank::SimTest;
use crate::model::{RsesParams, TwoGroupModel};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

fn default_alpha() -> f64 {
    0.05
}

fn default_beta() -> f64 {
    0.2
}

fn default_ratio() -> f64 {
    1.0
}

fn default_runs() -> u64 {
    10_000
}

fn default_seed() -> u64 {
    1
}

/// One two-group model and optional per-scenario overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub experimental: RsesParams,
    pub control: RsesParams,
    /// Control-group sizes; overrides the top-level list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
}

impl Scenario {
    pub fn model(&self) -> TwoGroupModel {
        TwoGroupModel::new(self.experimental, self.control)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Allocation ratio `n_E / n_C`.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    /// Explicit local levels; replaces the equal split of `alpha`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_levels: Option<LocalLevels>,
    /// Control-group sizes for `oc` and `simulate`.
    #[serde(default)]
    pub sizes: Vec<u64>,
    #[serde(default = "default_runs")]
    pub runs: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Tests applied by `simulate`; empty means all four.
    #[serde(default)]
    pub tests: Vec<SimTest>,
    /// Cap on `n_C` for the exact sample-size scan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_n: Option<u64>,
    pub scenarios: Vec<Scenario>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Checks everything that can be checked before computation starts.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(config_err(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(config_err(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if self.runs == 0 {
            return Err(config_err("runs must be at least 1"));
        }
        if let Some(l) = self.local_levels {
            LocalLevels::custom(l.response, l.theta1, l.theta0)
                .map_err(|e| config_err(e.to_string()))?;
        }
        if self.scenarios.is_empty() {
            return Err(config_err("no scenarios given"));
        }
        for s in &self.scenarios {
            let r = self.ratio_for(s);
            if !(r > 0.0 && r.is_finite()) {
                return Err(config_err(format!("scenario '{}': ratio must be positive", s.name)));
            }
            if self.sizes_for(s).contains(&0) {
                return Err(config_err(format!("scenario '{}': sizes must be at least 1", s.name)));
            }
        }
        Ok(())
    }

    pub fn levels(&self) -> Result<LocalLevels> {
        match self.local_levels {
            Some(l) => LocalLevels::custom(l.response, l.theta1, l.theta0),
            None => LocalLevels::equal(self.alpha),
        }
    }

    pub fn sizes_for<'a>(&'a self, s: &'a Scenario) -> &'a [u64] {
        s.sizes.as_deref().unwrap_or(&self.sizes)
    }

    pub fn ratio_for(&self, s: &Scenario) -> f64 {
        s.ratio.unwrap_or(self.ratio)
    }

    /// Experimental size paired with control size `n_c`.
    pub fn n_e_for(&self, s: &Scenario, n_c: u64) -> u64 {
        ((self.ratio_for(s) * n_c as f64 - 1e-9).ceil() as u64).max(1)
    }

    pub fn sim_tests(&self) -> Vec<SimTest> {
        if self.tests.is_empty() {
            SimTest::ALL.to_vec()
        } else {
            self.tests.clone()
        }
    }
}
