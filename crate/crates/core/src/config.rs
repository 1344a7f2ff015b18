//! Simulation configuration and its JSON form.

use serde::{Deserialize, Serialize};

use crate::accessibility::ChurnConfig;
use crate::dataparts::PartitionConfig;
use crate::diagnostics::WtildeMode;
use crate::error::{invalid, Error, Result};
use crate::mobility::MobilityConfig;
use crate::workload::ProblemConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaSchedule {
    #[default]
    Constant,
    /// `eta / (1 + t)`
    Decay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub rounds: usize,
    pub eta: f64,
    pub eta_schedule: EtaSchedule,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub mobility: MobilityConfig,
    pub churn: ChurnConfig,
    pub partition: PartitionConfig,
    pub problem: ProblemConfig,
    pub seed: u64,
    pub offline_training: bool,
    /// Weight multiplier for a rejoining node's stale model; 1 disables it.
    pub deemphasis: f64,
    pub wtilde_mode: WtildeMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 14,
            rounds: 50,
            eta: 0.1,
            eta_schedule: EtaSchedule::Constant,
            local_epochs: 2,
            batch_size: 128,
            mobility: MobilityConfig::default(),
            churn: ChurnConfig::default(),
            partition: PartitionConfig::default(),
            problem: ProblemConfig::default(),
            seed: 0,
            offline_training: true,
            deemphasis: 1.0,
            wtilde_mode: WtildeMode::Literal,
        }
    }
}

/// Failure to turn JSON text into a valid [`SimConfig`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Invalid(#[from] Error),
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n", "must be >= 1"));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds", "must be >= 1"));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(invalid(
                "eta",
                format!("must be finite and > 0 (got {})", self.eta),
            ));
        }
        if self.local_epochs == 0 {
            return Err(invalid("local_epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.deemphasis) {
            return Err(invalid(
                "deemphasis",
                format!("must lie in [0, 1] (got {})", self.deemphasis),
            ));
        }
        self.mobility.validate()?;
        self.churn.validate()?;
        self.partition.validate()?;
        self.problem.validate()?;
        if self.problem.samples < self.n {
            return Err(invalid("problem.samples", "must be >= n"));
        }
        Ok(())
    }

    /// Learning rate used in round `t`.
    pub fn eta_at(&self, t: usize) -> f64 {
        match self.eta_schedule {
            EtaSchedule::Constant => self.eta,
            EtaSchedule::Decay => self.eta / (1.0 + t as f64),
        }
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, ConfigError> {
        let cfg: SimConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
