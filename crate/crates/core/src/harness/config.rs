use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_csv, Dataset, SyntheticConfig};
use crate::error::{Error, Result};
use crate::scheduler::{SchedulerConfig, StdConvention, ThresholdMode};

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Strategy {
    /// Plain summed cross-entropy on every sample.
    CrossEntropy,
    /// Adaptive threshold weighted by the model certainty `θ`.
    Acl,
    /// Adaptive threshold with a constant `α` in place of `θ`.
    AclFixedAlpha(f64),
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::CrossEntropy => write!(f, "cross_entropy"),
            Strategy::Acl => write!(f, "acl"),
            Strategy::AclFixedAlpha(a) => write!(f, "acl_fixed_alpha({a})"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "cross_entropy" | "ce" => return Ok(Strategy::CrossEntropy),
            "acl" => return Ok(Strategy::Acl),
            _ => {}
        }
        s.strip_prefix("acl_fixed_alpha(")
            .and_then(|rest| rest.strip_suffix(')'))
            .and_then(|a| a.trim().parse::<f64>().ok())
            .filter(|a| a.is_finite())
            .map(Strategy::AclFixedAlpha)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown strategy {s:?}; expected cross_entropy, acl or acl_fixed_alpha(<alpha>)"
                ))
            })
    }
}

impl TryFrom<String> for Strategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.to_string()
    }
}

/// Which labels held-out samples are scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalLabels {
    /// Clean labels when every sample has one, observed labels otherwise.
    #[default]
    Auto,
    Observed,
    Clean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic(SyntheticConfig),
    Csv(PathBuf),
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic(SyntheticConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub strategy: Strategy,
    /// Capacity of both scheduler queues.
    pub queue_length: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub lr: f64,
    pub lr_power: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub hidden: Vec<usize>,
    pub std_convention: StdConvention,
    /// Balance classes in each training fold by duplicating the minority class.
    pub oversample: bool,
    /// Z-score features with training-fold statistics.
    pub standardize: bool,
    pub eval_labels: EvalLabels,
    pub folds: usize,
    /// One full cross-validation per seed.
    pub seeds: Vec<u64>,
    /// For synthetic data, draw a fresh dataset per run seed
    /// (dataset seed = synthetic seed + run seed).
    pub reseed_data: bool,
    pub dataset: DatasetSpec,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Acl,
            queue_length: 32,
            batch_size: 16,
            epochs: 50,
            warmup_epochs: 3,
            lr: 0.001,
            lr_power: 0.9,
            momentum: 0.9,
            weight_decay: 0.0,
            hidden: vec![32, 32],
            std_convention: StdConvention::Population,
            oversample: true,
            standardize: true,
            eval_labels: EvalLabels::Auto,
            folds: 5,
            seeds: vec![0],
            reseed_data: true,
            dataset: DatasetSpec::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.strategy != Strategy::CrossEntropy {
            if self.queue_length == 0 || !self.queue_length.is_multiple_of(self.batch_size) {
                return Err(Error::Config(format!(
                    "queue_length {} must be a positive multiple of batch_size {}",
                    self.queue_length, self.batch_size
                )));
            }
            if self.warmup_epochs > self.epochs {
                return Err(Error::Config(format!(
                    "warmup_epochs {} exceeds epochs {}",
                    self.warmup_epochs, self.epochs
                )));
            }
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config("lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if let DatasetSpec::Synthetic(s) = &self.dataset {
            s.validate()?;
        }
        Ok(())
    }

    /// Scheduler settings implied by the strategy.
    pub fn scheduler_config(&self) -> SchedulerConfig {
        let (mode, masking) = match self.strategy {
            Strategy::CrossEntropy => (ThresholdMode::Certainty, false),
            Strategy::Acl => (ThresholdMode::Certainty, true),
            Strategy::AclFixedAlpha(a) => (ThresholdMode::FixedAlpha(a), true),
        };
        // the baseline only observes, so its queue needs no batch alignment
        let queue_length = if masking {
            self.queue_length
        } else {
            self.queue_length.max(1).div_ceil(self.batch_size) * self.batch_size
        };
        SchedulerConfig {
            queue_length,
            batch_size: self.batch_size,
            warmup_epochs: self.warmup_epochs,
            mode,
            std: self.std_convention,
            masking,
        }
    }

    /// Loads (or generates) the dataset used by run seed `seed`.
    pub fn load_dataset(&self, seed: u64) -> Result<Dataset> {
        match &self.dataset {
            DatasetSpec::Synthetic(s) => {
                let mut s = s.clone();
                if self.reseed_data {
                    s.seed = s.seed.wrapping_add(seed);
                }
                generate_synthetic(&s)
            }
            DatasetSpec::Csv(path) => load_csv(path),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Reads a synthetic dataset description (TOML `key = value` lines).
pub fn synthetic_config_from_file(path: impl AsRef<Path>) -> Result<SyntheticConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg: SyntheticConfig = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_strings() {
        for s in [
            Strategy::CrossEntropy,
            Strategy::Acl,
            Strategy::AclFixedAlpha(1.5),
        ] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("ce".parse::<Strategy>().unwrap(), Strategy::CrossEntropy);
        assert!("acl_fixed_alpha(x)".parse::<Strategy>().is_err());
        assert!("adam".parse::<Strategy>().is_err());
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = ExperimentConfig {
            strategy: Strategy::AclFixedAlpha(2.0),
            seeds: vec![1, 2, 3],
            ..ExperimentConfig::default()
        };
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);

        let csv =
            ExperimentConfig::from_toml_str("strategy = \"acl\"\n[dataset]\ncsv = \"x.csv\"\n")
                .unwrap();
        assert_eq!(csv.dataset, DatasetSpec::Csv("x.csv".into()));
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn queue_must_align_with_batch_for_acl_only() {
        let mut cfg = ExperimentConfig {
            queue_length: 20,
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.strategy = Strategy::CrossEntropy;
        cfg.validate().unwrap();
        assert_eq!(cfg.scheduler_config().queue_length, 32);
    }

    #[test]
    fn warmup_cannot_exceed_epochs() {
        let cfg = ExperimentConfig {
            warmup_epochs: 60,
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
