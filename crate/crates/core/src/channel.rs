//! Memoryless additive-noise channels parameterised by SNR.
//!
//! With transmit power `P` and SNR `snr_db`, the complex noise power is
//! `delta^2 = P * 10^(-snr_db / 10)`, split evenly over I and Q. Laplacian
//! noise uses the same per-coordinate variance.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::batch::SymbolBatch;
use crate::shaping::noise_power_from_snr;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Awgn,
    Laplacian,
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Laplacian => "laplacian",
        })
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "awgn" => Ok(ChannelKind::Awgn),
            "laplacian" => Ok(ChannelKind::Laplacian),
            other => Err(Error::InvalidConfig(format!("unknown channel '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    /// `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub transmit_power: f64,
}

impl ChannelSpec {
    pub fn new(kind: ChannelKind, snr_db: f64, transmit_power: f64) -> Result<Self> {
        let spec = Self { kind, snr_db, transmit_power };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.transmit_power > 0.0 && self.transmit_power.is_finite()) {
            return Err(Error::InvalidConfig("transmit power must be positive".into()));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::InvalidConfig(format!("invalid SNR {}", self.snr_db)));
        }
        Ok(())
    }

    /// Complex noise power `delta^2`.
    pub fn noise_power(&self) -> f64 {
        noise_power_from_snr(self.snr_db, self.transmit_power)
    }

    pub fn per_coordinate_variance(&self) -> f64 {
        self.noise_power() / 2.0
    }

    fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let var = self.per_coordinate_variance();
        match self.kind {
            ChannelKind::Awgn => var.sqrt() * rng.sample::<f64, _>(StandardNormal),
            ChannelKind::Laplacian => {
                // 2 b^2 = var
                let b = (var / 2.0).sqrt();
                let e: f64 = rng.sample(Exp1);
                if rng.random::<bool>() {
                    b * e
                } else {
                    -b * e
                }
            }
        }
    }
}

/// `y = x + n` with i.i.d. per-coordinate noise.
pub fn transmit<R: Rng + ?Sized>(x: &SymbolBatch, spec: &ChannelSpec, rng: &mut R) -> Result<SymbolBatch> {
    spec.validate()?;
    if spec.noise_power() == 0.0 {
        return Ok(x.clone());
    }
    let mut y = x.as_array().clone();
    y.mapv_inplace(|v| v + spec.sample_noise(rng));
    Ok(SymbolBatch::from_array_unchecked(y))
}
