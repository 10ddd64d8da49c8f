use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DenoiserParams, EmbeddingPlacement, Steps, DEFAULT_HIDDEN_WIDTH};
use crate::batch::SymbolBatch;
use crate::constellation::Constellation;
use crate::diffusion::VarianceSchedule;
use crate::optim::{Adam, AdamConfig};
use crate::rng::SeedStream;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Samples per constellation point that make up one epoch.
    pub draws_per_point: usize,
    pub hidden_width: usize,
    pub embedding_placement: EmbeddingPlacement,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            learning_rate: 1e-3,
            batch_size: 64,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            draws_per_point: 64,
            hidden_width: DEFAULT_HIDDEN_WIDTH,
            embedding_placement: EmbeddingPlacement::EveryHidden,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.draws_per_point == 0 {
            return bad("draws_per_point must be at least 1");
        }
        if self.hidden_width == 0 {
            return bad("hidden_width must be at least 1");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam moment decay rates must lie in [0, 1)");
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad("adam_eps must be positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    /// Optimiser steps per epoch: `ceil(M * draws_per_point / batch_size)`.
    pub fn steps_per_epoch(&self, order: usize) -> usize {
        (order * self.draws_per_point).div_ceil(self.batch_size)
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub params: DenoiserParams,
    /// Batch loss before each optimiser step.
    pub losses: Vec<f64>,
}

/// Noise-prediction training with Adam.
///
/// Every step draws `batch_size` points uniformly from the constellation, an
/// independent step `t ~ Unif{1..T}` and noise `eps ~ N(0, I)` per sample,
/// forms `x_t` in closed form and takes one Adam step on the batch loss.
pub fn train(c: &Constellation, sched: &VarianceSchedule, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    if c.order() == 0 {
        return Err(Error::InvalidConfig("empty constellation".into()));
    }
    let mut rng = SeedStream::from_seed(cfg.seed).child("train").rng();
    let t_steps = sched.t_steps();
    let mut params = DenoiserParams::init(t_steps, cfg.hidden_width, cfg.embedding_placement, &mut rng);
    let mut opt = Adam::new(cfg.adam(), params.zeros_like());

    let total = cfg.epochs * cfg.steps_per_epoch(c.order());
    let n = cfg.batch_size;
    let mut losses = Vec::with_capacity(total);
    let mut xt = Array2::zeros((n, 2));
    let mut eps = Array2::zeros((n, 2));
    let mut ts = vec![0usize; n];
    for _ in 0..total {
        for r in 0..n {
            let p = c.point(rng.random_range(0..c.order()));
            let t = rng.random_range(1..=t_steps);
            let ab = sched.alpha_bar(t);
            let (e0, e1): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            ts[r] = t;
            eps[[r, 0]] = e0;
            eps[[r, 1]] = e1;
            xt[[r, 0]] = ab.sqrt() * p.i + (1.0 - ab).sqrt() * e0;
            xt[[r, 1]] = ab.sqrt() * p.q + (1.0 - ab).sqrt() * e1;
        }
        let x = SymbolBatch::from_array_unchecked(xt.clone());
        let e = SymbolBatch::from_array_unchecked(eps.clone());
        let (loss, grads) = params.backward(&x, Steps::PerRow(&ts), &e)?;
        losses.push(loss);
        opt.update(&mut params, &grads);
    }
    Ok(Trained { params, losses })
}
