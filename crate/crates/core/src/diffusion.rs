//! Forward and reverse DDPM arithmetic on batches of 2-D points.
//!
//! Time steps are 1-based (`1..=T`) throughout. All functions are pure: noise
//! enters only through explicit arguments.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::batch::SymbolBatch;
use crate::{Error, Result};

pub const DEFAULT_T_STEPS: usize = 100;
pub const DEFAULT_BETA_MIN: f64 = 1e-4;
/// Kept small so that `alpha_bar[T]` stays near 0.9: the receiver starts the
/// full reverse chain from the raw channel output, and a schedule that ends
/// in mostly-noise territory makes that chain resample rather than denoise.
pub const DEFAULT_BETA_MAX: f64 = 2e-3;

/// Precomputed per-step tables of a variance schedule.
///
/// - `beta[t]`: forward noise variance of step `t`
/// - `alpha[t] = 1 - beta[t]`
/// - `alpha_bar[t] = prod_{i <= t} alpha[i]`
/// - `beta_tilde[t] = (1 - alpha_bar[t-1]) / (1 - alpha_bar[t]) * beta[t]`, with
///   `alpha_bar[0] = 1`
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceSchedule {
    beta: Vec<f64>,
    #[serde(skip)]
    alpha: Vec<f64>,
    #[serde(skip)]
    alpha_bar: Vec<f64>,
    #[serde(skip)]
    beta_tilde: Vec<f64>,
}

impl<'de> Deserialize<'de> for VarianceSchedule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            beta: Vec<f64>,
        }
        let raw = Raw::deserialize(d)?;
        Self::from_betas(raw.beta).map_err(serde::de::Error::custom)
    }
}

impl VarianceSchedule {
    /// Linear schedule from `beta_min` at `t = 1` to `beta_max` at `t = T`.
    pub fn linear(t_steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if t_steps == 0 {
            return Err(Error::InvalidSchedule("t_steps must be at least 1".into()));
        }
        if !(beta_min > 0.0 && beta_max < 1.0 && beta_min <= beta_max) {
            return Err(Error::InvalidSchedule(format!(
                "need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
            )));
        }
        let beta = if t_steps == 1 {
            vec![beta_min]
        } else {
            let span = (t_steps - 1) as f64;
            (0..t_steps).map(|k| beta_min + (beta_max - beta_min) * k as f64 / span).collect()
        };
        Self::from_betas(beta)
    }

    /// Builds the tables from an explicit, strictly increasing `beta` sequence in `(0, 1)`.
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidSchedule("empty beta sequence".into()));
        }
        if let Some(b) = beta.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::InvalidSchedule(format!("beta {b} outside (0, 1)")));
        }
        if let Some(w) = beta.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSchedule(format!(
                "beta must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        let beta_tilde = (0..beta.len())
            .map(|k| {
                let prev = if k == 0 { 1.0 } else { alpha_bar[k - 1] };
                (1.0 - prev) / (1.0 - alpha_bar[k]) * beta[k]
            })
            .collect();
        Ok(Self { beta, alpha, alpha_bar, beta_tilde })
    }

    pub fn t_steps(&self) -> usize {
        self.beta.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// `alpha_bar[t]`, with `alpha_bar(0) == 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn beta_tilde(&self, t: usize) -> f64 {
        self.beta_tilde[t - 1]
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.t_steps() {
            return Err(Error::TimeStepOutOfRange { t, t_steps: self.t_steps() });
        }
        Ok(())
    }

    /// Coefficients `(1/sqrt(alpha_t), (1 - alpha_t)/sqrt(1 - alpha_bar_t), sqrt(1 - alpha_t))`.
    pub(crate) fn reverse_coefficients(&self, t: usize) -> (f64, f64, f64) {
        let a = self.alpha(t);
        (1.0 / a.sqrt(), (1.0 - a) / (1.0 - self.alpha_bar(t)).sqrt(), (1.0 - a).sqrt())
    }
}

fn lincomb(a: &SymbolBatch, ka: f64, b: &SymbolBatch, kb: f64) -> SymbolBatch {
    let mut out = Array2::zeros(a.as_array().raw_dim());
    Zip::from(&mut out).and(a.as_array()).and(b.as_array()).for_each(|o, &x, &y| *o = ka * x + kb * y);
    SymbolBatch::from_array_unchecked(out)
}

/// Closed-form forward diffusion: `sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps`.
pub fn diffuse_to(
    x0: &SymbolBatch,
    t: usize,
    eps: &SymbolBatch,
    sched: &VarianceSchedule,
) -> Result<SymbolBatch> {
    sched.check_step(t)?;
    x0.ensure_same_shape(eps, "diffuse_to")?;
    let ab = sched.alpha_bar(t);
    Ok(lincomb(x0, ab.sqrt(), eps, (1.0 - ab).sqrt()))
}

/// One forward step: `sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) eps`.
pub fn forward_step(
    x_prev: &SymbolBatch,
    t: usize,
    eps: &SymbolBatch,
    sched: &VarianceSchedule,
) -> Result<SymbolBatch> {
    sched.check_step(t)?;
    x_prev.ensure_same_shape(eps, "forward_step")?;
    let b = sched.beta(t);
    Ok(lincomb(x_prev, (1.0 - b).sqrt(), eps, b.sqrt()))
}

/// Mean and variance of `q(x_{t-1} | x_t, x_0)`.
pub fn posterior_params(
    x0: &SymbolBatch,
    xt: &SymbolBatch,
    t: usize,
    sched: &VarianceSchedule,
) -> Result<(SymbolBatch, f64)> {
    sched.check_step(t)?;
    x0.ensure_same_shape(xt, "posterior_params")?;
    let ab = sched.alpha_bar(t);
    let ab_prev = sched.alpha_bar(t - 1);
    let k_xt = sched.alpha(t).sqrt() * (1.0 - ab_prev) / (1.0 - ab);
    let k_x0 = ab_prev.sqrt() * sched.beta(t) / (1.0 - ab);
    Ok((lincomb(xt, k_xt, x0, k_x0), sched.beta_tilde(t)))
}

/// Estimate of `x_0` from `x_t` and a noise estimate; exact inverse of [`diffuse_to`].
pub fn predict_x0(
    xt: &SymbolBatch,
    eps_hat: &SymbolBatch,
    t: usize,
    sched: &VarianceSchedule,
) -> Result<SymbolBatch> {
    sched.check_step(t)?;
    xt.ensure_same_shape(eps_hat, "predict_x0")?;
    let ab = sched.alpha_bar(t);
    let inv = 1.0 / ab.sqrt();
    Ok(lincomb(xt, inv, eps_hat, -inv * (1.0 - ab).sqrt()))
}

/// One ancestral reverse step
/// `x_{t-1} = (x_t - (1 - alpha_t)/sqrt(1 - alpha_bar_t) eps_hat)/sqrt(alpha_t) + sqrt(1 - alpha_t) z`.
///
/// `z` must be all zeros at `t = 1`.
pub fn reverse_step(
    xt: &SymbolBatch,
    eps_hat: &SymbolBatch,
    z: &SymbolBatch,
    t: usize,
    sched: &VarianceSchedule,
) -> Result<SymbolBatch> {
    sched.check_step(t)?;
    xt.ensure_same_shape(eps_hat, "reverse_step")?;
    xt.ensure_same_shape(z, "reverse_step")?;
    if t == 1 && z.as_array().iter().any(|v| *v != 0.0) {
        return Err(Error::NonzeroFinalNoise);
    }
    let mut x = xt.as_array().clone();
    reverse_step_in_place(&mut x, eps_hat.as_array(), Some(z.as_array()), t, sched);
    Ok(SymbolBatch::from_array_unchecked(x))
}

/// In-place reverse step used by the samplers; `z = None` means no noise.
pub(crate) fn reverse_step_in_place(
    x: &mut Array2<f64>,
    eps_hat: &Array2<f64>,
    z: Option<&Array2<f64>>,
    t: usize,
    sched: &VarianceSchedule,
) {
    let (inv_sqrt_alpha, eps_coef, sigma) = sched.reverse_coefficients(t);
    match z {
        Some(z) => Zip::from(x).and(eps_hat).and(z).for_each(|x, &e, &z| {
            *x = inv_sqrt_alpha * (*x - eps_coef * e) + sigma * z;
        }),
        None => Zip::from(x).and(eps_hat).for_each(|x, &e| {
            *x = inv_sqrt_alpha * (*x - eps_coef * e);
        }),
    }
}

/// Batch mean of the squared L2 distance between true and predicted noise.
pub fn loss_target(eps: &SymbolBatch, eps_hat: &SymbolBatch) -> Result<f64> {
    eps.ensure_same_shape(eps_hat, "loss_target")?;
    let sum: f64 = eps.as_array().iter().zip(eps_hat.as_array().iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / eps.len() as f64)
}
