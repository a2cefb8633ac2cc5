//! JSON run configuration.
//!
//! ```json
//! {
//!   "n_learners": 100, "model_dim": 4, "sigma": 2, "prime": 1020431,
//!   "rounds": 6, "k_policy": 10, "weights": "uniform", "theta_max": 51.02,
//!   "seed": 1, "schedule": "random:87"
//! }
//! ```
//!
//! `schedule` is either a generator (`complete`, `star`, `line`, `ring`,
//! `random:<avg_degree>`) or a path, relative to the config file, to a JSON
//! schedule (`*.json`) or an edge-list file used for every round.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::PrimeModulus;
use crate::fixed_point::Precision;
use crate::protocol::{ConstantTrainer, KPolicy, ProtocolConfig, SyntheticTrainer, Trainer};
use crate::topology::{parse_edge_list, TopologyKind, TopologySchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoWord {
    #[serde(rename = "auto")]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UniformWord {
    #[serde(rename = "uniform")]
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KSpec {
    Auto(AutoWord),
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsSpec {
    Uniform(UniformWord),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_learners: usize,
    pub model_dim: usize,
    pub sigma: u32,
    pub prime: u64,
    pub rounds: usize,
    pub k_policy: KSpec,
    pub weights: WeightsSpec,
    pub theta_max: f64,
    pub seed: u64,
    pub schedule: String,
    /// Initial models are drawn uniformly from `[-initial_scale, initial_scale]`;
    /// defaults to `theta_max / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_scale: Option<f64>,
    /// Per-round training noise; 0 keeps models fixed.
    #[serde(default)]
    pub trainer_noise: f64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)?;
        let cfg = Self::from_json(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Validated protocol parameters.
    pub fn protocol_config(&self) -> Result<ProtocolConfig> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be positive".into()));
        }
        let weights = match &self.weights {
            WeightsSpec::Uniform(_) => vec![1.0 / self.n_learners.max(1) as f64; self.n_learners],
            WeightsSpec::Explicit(w) => w.clone(),
        };
        let cfg = ProtocolConfig {
            n_learners: self.n_learners,
            model_dim: self.model_dim,
            precision: Precision::new(self.sigma).map_err(|e| Error::Config(e.to_string()))?,
            prime: PrimeModulus::new(self.prime).map_err(|e| Error::Config(e.to_string()))?,
            rounds: self.rounds,
            k_policy: match self.k_policy {
                KSpec::Auto(_) => KPolicy::Auto,
                KSpec::Fixed(k) => KPolicy::Fixed(k),
            },
            weights,
            theta_max: self.theta_max,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resolves `schedule` against `base_dir`.
    pub fn schedule(&self, base_dir: &Path) -> Result<TopologySchedule> {
        if let Ok(kind) = self.schedule.parse::<TopologyKind>() {
            return Ok(TopologySchedule::Generated {
                kind,
                n: self.n_learners,
                seed: self.seed,
            });
        }
        let path = base_dir.join(&self.schedule);
        let text = std::fs::read_to_string(&path).map_err(|e| {
            Error::Config(format!("schedule {:?} is neither a generator nor a readable file: {e}", self.schedule))
        })?;
        if path.extension().is_some_and(|e| e == "json") {
            TopologySchedule::from_json(&text, self.n_learners)
        } else {
            let g = parse_edge_list(&text, Some(self.n_learners))?;
            Ok(TopologySchedule::Explicit(vec![g; self.rounds]))
        }
    }

    pub fn initial_scale(&self) -> f64 {
        self.initial_scale.unwrap_or(self.theta_max / 2.0)
    }

    pub fn trainer(&self) -> Box<dyn Trainer> {
        if self.trainer_noise > 0.0 {
            Box::new(SyntheticTrainer {
                noise: self.trainer_noise,
                theta_max: self.theta_max,
            })
        } else {
            Box::new(ConstantTrainer)
        }
    }
}
