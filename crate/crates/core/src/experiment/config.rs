//! Flat, typed experiment configuration read from TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::DemapperConfig;
use crate::channel::ChannelKind;
use crate::constellation::Constellation;
use crate::denoiser::{EmbeddingPlacement, TrainConfig};
use crate::diffusion::{VarianceSchedule, DEFAULT_BETA_MAX, DEFAULT_BETA_MIN, DEFAULT_T_STEPS};
use crate::shaping::DEFAULT_SHAPING_SAMPLES;
use crate::{Error, Result};

pub const DEFAULT_16QAM: &str = include_str!("../../configs/default_16qam.toml");
pub const DEFAULT_64QAM: &str = include_str!("../../configs/default_64qam.toml");

/// Transmitter/receiver pairing evaluated at a sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// DDPM shaping at the transmitter, DDPM reconstruction at the receiver.
    Ddpm,
    /// Equiprobable symbols, DDPM reconstruction at the receiver.
    Uniform,
    /// Equiprobable symbols, neural demapper at the receiver.
    Dnn,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Ddpm, Scheme::Uniform, Scheme::Dnn];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Ddpm => "ddpm",
            Scheme::Uniform => "uniform",
            Scheme::Dnn => "dnn",
        }
    }

    /// Whether the receiver runs the reverse chain.
    pub fn uses_denoiser(self) -> bool {
        !matches!(self, Scheme::Dnn)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub modulation_order: usize,
    pub t_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub seed: u64,

    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub draws_per_point: usize,
    pub hidden_width: usize,
    pub embedding_placement: EmbeddingPlacement,

    /// Reverse-chain samples used to estimate the shaped distribution.
    pub n_samples: usize,
    pub transmit_power: f64,

    pub snr_db: Vec<f64>,
    pub symbols_per_point: usize,
    pub channels: Vec<ChannelKind>,
    pub schemes: Vec<Scheme>,

    pub demapper_hidden_width: usize,
    pub demapper_iterations: usize,
    pub demapper_batch_size: usize,
    pub demapper_learning_rate: f64,

    /// Not part of the config hash: it does not influence any number.
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let demapper = DemapperConfig::default();
        Self {
            modulation_order: 16,
            t_steps: DEFAULT_T_STEPS,
            beta_min: DEFAULT_BETA_MIN,
            beta_max: DEFAULT_BETA_MAX,
            seed: 0,
            epochs: train.epochs,
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            adam_beta1: train.adam_beta1,
            adam_beta2: train.adam_beta2,
            adam_eps: train.adam_eps,
            draws_per_point: train.draws_per_point,
            hidden_width: train.hidden_width,
            embedding_placement: train.embedding_placement,
            n_samples: DEFAULT_SHAPING_SAMPLES,
            transmit_power: 1.0,
            snr_db: (0..8).map(|k| -25.0 + 5.0 * k as f64).collect(),
            symbols_per_point: 100_000,
            channels: vec![ChannelKind::Awgn, ChannelKind::Laplacian],
            schemes: Scheme::ALL.to_vec(),
            demapper_hidden_width: demapper.hidden_width,
            demapper_iterations: demapper.iterations,
            demapper_batch_size: demapper.batch_size,
            demapper_learning_rate: demapper.learning_rate,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// One of the shipped configurations, by name.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "default_16qam" => Self::from_toml_str(DEFAULT_16QAM),
            "default_64qam" => Self::from_toml_str(DEFAULT_64QAM),
            _ => Err(Error::InvalidConfig(format!("no builtin config named {name:?}"))),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises to TOML")
    }

    /// First 16 hex digits of SHA-256 over the canonical TOML form,
    /// with `output_dir` blanked.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = PathBuf::new();
        let digest = Sha256::digest(canon.to_toml_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Every failure is reported as [`Error::InvalidConfig`].
    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|e| match e {
            Error::InvalidConfig(_) => e,
            other => Error::InvalidConfig(other.to_string()),
        })
    }

    fn check(&self) -> Result<()> {
        self.constellation()?;
        self.schedule()?;
        self.train_config().validate()?;
        self.demapper_config().validate()?;
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.n_samples == 0 {
            return bad("n_samples must be at least 1");
        }
        if !(self.transmit_power > 0.0 && self.transmit_power.is_finite()) {
            return bad("transmit_power must be positive");
        }
        if self.snr_db.is_empty() {
            return bad("snr_db list is empty");
        }
        if self.snr_db.iter().any(|s| s.is_nan()) {
            return bad("snr_db contains NaN");
        }
        if self.symbols_per_point == 0 {
            return bad("symbols_per_point must be at least 1");
        }
        if self.channels.is_empty() {
            return bad("channels list is empty");
        }
        if self.schemes.is_empty() {
            return bad("schemes list is empty");
        }
        Ok(())
    }

    pub fn constellation(&self) -> Result<Constellation> {
        Constellation::qam(self.modulation_order)
    }

    pub fn schedule(&self) -> Result<VarianceSchedule> {
        VarianceSchedule::linear(self.t_steps, self.beta_min, self.beta_max)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            draws_per_point: self.draws_per_point,
            hidden_width: self.hidden_width,
            embedding_placement: self.embedding_placement,
            seed: self.seed,
        }
    }

    /// Demapper settings; the seed is supplied per sweep point.
    pub fn demapper_config(&self) -> DemapperConfig {
        DemapperConfig {
            hidden_width: self.demapper_hidden_width,
            iterations: self.demapper_iterations,
            batch_size: self.demapper_batch_size,
            learning_rate: self.demapper_learning_rate,
            seed: self.seed,
        }
    }
}
