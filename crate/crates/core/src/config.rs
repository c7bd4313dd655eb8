//! Run configuration: a TOML file with `[model]`, `[train]` and
//! `[experiment]` sections. Unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::Grid;
use crate::model::{Architecture, OperatorInit};
use crate::{Error, Result};

/// Environment variable that overrides `train.thread_count`.
pub const THREADS_ENV: &str = "DEEPGREEN_THREADS";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub experiment: ExperimentConfig,
}

/// Architecture knobs. Unset values follow the dataset: dense coders with a
/// 20-dimensional latent space in 1D, convolutional with 200 in 2D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub latent: Option<usize>,
    pub width: Option<usize>,
    pub depth: usize,
    pub resnet: Option<bool>,
    pub operator_init: OperatorInit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { latent: None, width: None, depth: 2, resnet: None, operator_init: OperatorInit::Identity }
    }
}

impl ModelConfig {
    pub fn architecture(&self, grid: &Grid) -> Architecture {
        let mut a = if grid.dim() == 1 {
            Architecture::dense(grid.n(), self.latent.unwrap_or(20))
        } else {
            Architecture::conv(grid.n(), self.latent.unwrap_or(200))
        };
        if grid.dim() == 1 {
            a.width = self.width.unwrap_or(grid.n());
            a.depth = self.depth;
        }
        if let Some(r) = self.resnet {
            a.resnet = r;
        }
        a.operator_init = self.operator_init;
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs_ae_only: usize,
    pub epochs_full_initial: usize,
    pub epochs_full_final: usize,
    pub batch_size: usize,
    pub n_candidates: usize,
    pub lr_low: f64,
    pub lr_high: f64,
    /// Draw candidate rates log-uniformly instead of uniformly.
    pub lr_log_uniform: bool,
    /// Use this rate for every candidate instead of drawing.
    pub lr: Option<f64>,
    pub l2: f64,
    pub seed: u64,
    pub thread_count: usize,
    /// Keep at most this many training samples.
    pub train_subsample: Option<usize>,
    /// Keep at most this many validation samples.
    pub val_subsample: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_ae_only: 75,
            epochs_full_initial: 250,
            epochs_full_final: 2500,
            batch_size: 64,
            n_candidates: 20,
            lr_low: 1e-5,
            lr_high: 1e-2,
            lr_log_uniform: false,
            lr: None,
            l2: 1e-6,
            seed: 0,
            thread_count: 1,
            train_subsample: None,
            val_subsample: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.n_candidates == 0 {
            return bad("n_candidates must be at least 1");
        }
        if !(self.lr_low > 0.0 && self.lr_low < self.lr_high) {
            return bad("need 0 < lr_low < lr_high");
        }
        if let Some(lr) = self.lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad("lr must be positive");
            }
        }
        if !(self.l2 >= 0.0) {
            return bad("l2 must be non-negative");
        }
        if self.thread_count == 0 {
            return bad("thread_count must be at least 1");
        }
        Ok(())
    }
}

/// Settings shared by the ablation studies. Epoch counts here replace the
/// `[train]` ones and a single candidate is trained per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub epochs_ae_only: usize,
    pub epochs_full: usize,
    pub lr: f64,
    /// Independent seeds for the latent variability study.
    pub runs: usize,
    /// Models per arm in the skip-connection ablation.
    pub per_arm: usize,
    /// Training sample (within the training split) encoded in the latent
    /// variability study.
    pub probe_sample: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { epochs_ae_only: 75, epochs_full: 400, lr: 1e-3, runs: 5, per_arm: 3, probe_sample: 0 }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `DEEPGREEN_THREADS` if set.
    pub fn with_env(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(THREADS_ENV) {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
            if n == 0 {
                return Err(Error::Config(format!("{THREADS_ENV} must be at least 1")));
            }
            self.train.thread_count = n;
        }
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// SHA-256 over a canonical rendering of the settings that determine a run.
/// Thread count is left out since results do not depend on it.
pub fn config_hash(train: &TrainConfig, arch: &Architecture) -> [u8; 32] {
    let mut h = Sha256::new();
    let train = TrainConfig { thread_count: 1, ..train.clone() };
    h.update(toml::to_string(&train).expect("train config serializes"));
    h.update(toml::to_string(arch).expect("architecture serializes"));
    h.finalize().into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
