//! Comparison systems: uniform shaping and a neural demapper trained with
//! cross-entropy on channel outputs of uniformly transmitted symbols.

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::batch::SymbolBatch;
use crate::channel::{transmit, ChannelSpec};
use crate::constellation::{Constellation, ShapingDistribution};
use crate::denoiser::Dense;
use crate::optim::{Adam, AdamConfig, ParamSlices};
use crate::rng::SeedStream;
use crate::{Error, Result};

/// Equiprobable symbols (the shaping block switched off).
pub fn uniform_shaping(c: &Constellation) -> ShapingDistribution {
    ShapingDistribution::uniform(c.order())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemapperConfig {
    pub hidden_width: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for DemapperConfig {
    fn default() -> Self {
        Self { hidden_width: 64, iterations: 5000, batch_size: 256, learning_rate: 1e-3, seed: 0 }
    }
}

impl DemapperConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 || self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "demapper width, iterations and batch size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("demapper learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// `2 -> H -> H -> M` ReLU network with a softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct DemapperParams {
    layers: Vec<Dense>,
}

impl DemapperParams {
    pub fn init<R: Rng + ?Sized>(order: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            layers: vec![
                Dense::init(2, hidden, rng),
                Dense::init(hidden, hidden, rng),
                Dense::init(hidden, order, rng),
            ],
        }
    }

    pub fn zeros(order: usize, hidden: usize) -> Self {
        Self {
            layers: vec![Dense::zeros(2, hidden), Dense::zeros(hidden, hidden), Dense::zeros(hidden, order)],
        }
    }

    pub fn order(&self) -> usize {
        self.layers[2].outputs()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    fn hidden(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
        let h1 = self.layers[0].apply(x).mapv_into(|v| v.max(0.0));
        let h2 = self.layers[1].apply(h1.view()).mapv_into(|v| v.max(0.0));
        (h1, h2)
    }

    fn logits(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let (_, h2) = self.hidden(x);
        self.layers[2].apply(h2.view())
    }

    /// Softmax posteriors `p(s | y)`, one row per sample.
    pub fn posteriors(&self, y: &SymbolBatch) -> Array2<f64> {
        let mut z = self.logits(y.view());
        softmax_rows(&mut z);
        z
    }

    /// Mean cross-entropy (nats) and its gradient.
    fn backward(&self, y: ArrayView2<'_, f64>, labels: &[usize]) -> (f64, DemapperParams) {
        let n = labels.len() as f64;
        let (h1, h2) = self.hidden(y);
        let mut p = self.layers[2].apply(h2.view());
        softmax_rows(&mut p);
        let loss =
            labels.iter().enumerate().map(|(r, &k)| -p[[r, k]].max(f64::MIN_POSITIVE).ln()).sum::<f64>() / n;
        let mut d = p;
        for (r, &k) in labels.iter().enumerate() {
            d[[r, k]] -= 1.0;
        }
        d /= n;

        let mut g = DemapperParams::zeros(self.order(), self.layers[0].outputs());
        g.layers[2].w = d.t().dot(&h2);
        g.layers[2].b = d.sum_axis(Axis(0));
        let mut d2 = d.dot(&self.layers[2].w);
        Zip::from(&mut d2).and(&h2).for_each(|d, &h| {
            if h <= 0.0 {
                *d = 0.0
            }
        });
        g.layers[1].w = d2.t().dot(&h1);
        g.layers[1].b = d2.sum_axis(Axis(0));
        let mut d1 = d2.dot(&self.layers[1].w);
        Zip::from(&mut d1).and(&h1).for_each(|d, &h| {
            if h <= 0.0 {
                *d = 0.0
            }
        });
        g.layers[0].w = d1.t().dot(&y);
        g.layers[0].b = d1.sum_axis(Axis(0));
        (loss, g)
    }
}

impl ParamSlices for DemapperParams {
    fn slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| [l.w.as_slice().unwrap(), l.b.as_slice().unwrap()]).collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.w.as_slice_mut().unwrap(), l.b.as_slice_mut().unwrap()])
            .collect()
    }
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row /= total;
    }
}

#[derive(Debug, Clone)]
pub struct TrainedDemapper {
    pub params: DemapperParams,
    pub losses: Vec<f64>,
}

pub fn train_dnn_demapper(
    c: &Constellation,
    channel: &ChannelSpec,
    cfg: &DemapperConfig,
) -> Result<TrainedDemapper> {
    let stream = SeedStream::from_seed(cfg.seed).child("demapper");
    train_dnn_demapper_with_stream(c, channel, cfg, &stream)
}

/// Adam on cross-entropy; each iteration sends a fresh uniform batch through `channel`.
pub fn train_dnn_demapper_with_stream(
    c: &Constellation,
    channel: &ChannelSpec,
    cfg: &DemapperConfig,
    stream: &SeedStream,
) -> Result<TrainedDemapper> {
    cfg.validate()?;
    channel.validate()?;
    let mut rng = stream.rng();
    let mut params = DemapperParams::init(c.order(), cfg.hidden_width, &mut rng);
    let adam = AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() };
    let mut opt = Adam::new(adam, DemapperParams::zeros(c.order(), cfg.hidden_width));
    let uniform = uniform_shaping(c);
    let mut losses = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let (x, labels) = uniform.sample(c, cfg.batch_size, &mut rng)?;
        let y = transmit(&x, channel, &mut rng)?;
        let (loss, grads) = params.backward(y.view(), &labels);
        losses.push(loss);
        opt.update(&mut params, &grads);
    }
    Ok(TrainedDemapper { params, losses })
}

/// Hard decisions: argmax of the posterior, ties to the lowest index.
pub fn demap(params: &DemapperParams, y: &SymbolBatch) -> Vec<usize> {
    argmax_rows(&params.posteriors(y))
}

pub fn argmax_rows(p: &Array2<f64>) -> Vec<usize> {
    p.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelKind;
    use crate::metrics::{entropy_bits, tv_distance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_baseline() {
        let c = Constellation::qam(16).unwrap();
        let u = uniform_shaping(&c);
        assert!(u.probs().iter().all(|p| *p == 0.0625));
        assert!((entropy_bits(&u) - 4.0).abs() < 1e-12);
        assert_eq!(tv_distance(&u, &u).unwrap(), 0.0);
    }

    #[test]
    fn argmax_examples() {
        let p = Array2::from_shape_vec((2, 4), vec![0.1, 0.7, 0.1, 0.1, 0.25, 0.25, 0.25, 0.25]).unwrap();
        assert_eq!(argmax_rows(&p), vec![1, 0]);
    }

    #[test]
    fn zero_demapper_is_uniform() {
        let d = DemapperParams::zeros(16, 8);
        let y = SymbolBatch::from_rows(&[[3.0, -1.0], [0.2, 0.1]]).unwrap();
        let p = d.posteriors(&y);
        assert!(p.iter().all(|v| (v - 1.0 / 16.0).abs() < 1e-15));
        assert_eq!(demap(&d, &y), vec![0, 0]);
    }

    #[test]
    fn rows_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = DemapperParams::init(4, 8, &mut rng);
        let y = SymbolBatch::from_rows(&[[0.3, -0.2], [1.0, 0.9], [-0.5, 0.0]]).unwrap();
        let p = d.posteriors(&y);
        for r in 0..3 {
            let one = d.posteriors(&SymbolBatch::from_points(&[y.point(r)]).unwrap());
            for k in 0..4 {
                assert!((one[[0, k]] - p[[r, k]]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = DemapperParams::init(4, 5, &mut rng);
        let y = SymbolBatch::from_rows(&[[0.3, -0.2], [1.0, 0.9], [-0.5, 0.1], [0.7, -1.1]]).unwrap();
        let labels = [0, 3, 1, 2];
        let (_, g) = d.backward(y.view(), &labels);
        let h = 1e-6;
        for (s, gs) in g.slices().iter().enumerate() {
            for k in 0..gs.len() {
                let mut up = d.clone();
                up.slices_mut()[s][k] += h;
                let mut down = d.clone();
                down.slices_mut()[s][k] -= h;
                let fd = (up.backward(y.view(), &labels).0 - down.backward(y.view(), &labels).0) / (2.0 * h);
                let rel = (fd - gs[k]).abs() / fd.abs().max(gs[k].abs()).max(1e-6);
                assert!(rel < 1e-4, "slice {s} k {k}: {fd} vs {}", gs[k]);
            }
        }
    }

    #[test]
    fn short_training_is_reproducible_and_reduces_loss() {
        let c = Constellation::qam(4).unwrap();
        let ch = ChannelSpec::new(ChannelKind::Awgn, 5.0, 1.0).unwrap();
        let cfg = DemapperConfig { iterations: 300, hidden_width: 16, seed: 3, ..Default::default() };
        let a = train_dnn_demapper(&c, &ch, &cfg).unwrap();
        let b = train_dnn_demapper(&c, &ch, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        let head: f64 = a.losses[..50].iter().sum::<f64>() / 50.0;
        let tail: f64 = a.losses[250..].iter().sum::<f64>() / 50.0;
        assert!(tail < head);
        let bad = DemapperConfig { iterations: 0, ..cfg };
        assert!(train_dnn_demapper(&c, &ch, &bad).is_err());
    }
}
