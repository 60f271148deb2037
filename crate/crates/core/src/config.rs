//! Run configuration loaded from TOML.
//!
//! ```toml
//! seed = 7
//! out = "results"
//! format = "csv"          # or "tsv"
//! policy = "dpp"          # dpp | always-odn | always-hybrid | reinforce
//! # reinforce_params = "policy.fgmlp"   # skip training and load weights
//!
//! [controller]
//! v = 90.0
//! w1 = 3.64
//!
//! [scenario]
//! horizon = 3000
//! [scenario.latency]
//! profile = "cpu"
//!
//! [reinforce]
//! episodes = 200
//! ```
//!
//! Every table is optional and unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::error::{Error, Result};
use crate::policies::PolicyKind;
use crate::sim::{ScenarioConfig, TrainingConfig};

/// Delimiter of tabular outputs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Tsv,
}

impl OutputFormat {
    pub fn delimiter(self) -> u8 {
        match self {
            OutputFormat::Csv => b',',
            OutputFormat::Tsv => b'\t',
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Tsv => "tsv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub format: OutputFormat,
    /// Policy used by `simulate`; `compare` always runs all four.
    pub policy: PolicyKind,
    /// Pre-trained weights for the learned policy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reinforce_params: Option<PathBuf>,
    pub controller: ControllerConfig,
    pub scenario: ScenarioConfig,
    pub reinforce: TrainingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            format: OutputFormat::default(),
            policy: PolicyKind::Dpp,
            reinforce_params: None,
            controller: ControllerConfig::default(),
            scenario: ScenarioConfig::default(),
            reinforce: TrainingConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses and validates; `origin` names the source in messages.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        cfg.validate()
            .map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.controller.validate()?;
        self.scenario.validate()?;
        self.reinforce.validate()
    }
}
