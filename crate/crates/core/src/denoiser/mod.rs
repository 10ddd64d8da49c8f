//! The noise-prediction network: a 3-hidden-layer softplus MLP whose hidden
//! activations are multiplied elementwise by a learned per-step embedding.
//!
//! ```text
//! h1 = softplus(W1 x  + b1) * e_t
//! h2 = softplus(W2 h1 + b2) * e_t
//! h3 = softplus(W3 h2 + b3) * e_t
//! out = W4 h3 + b4
//! ```
//!
//! Weights are stored `out x in`. The time step reaches the network only
//! through `e_t`, one row of `time_embed` per step.

mod checkpoint;
mod train;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::batch::SymbolBatch;
use crate::optim::ParamSlices;
use crate::{Error, Result};

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use train::{train, TrainConfig, Trained};

pub const INPUT_DIM: usize = 2;
pub const HIDDEN_LAYERS: usize = 3;
pub const DEFAULT_HIDDEN_WIDTH: usize = 128;

/// Which hidden activations are multiplied by the step embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingPlacement {
    #[default]
    EveryHidden,
    FirstHidden,
    LastHidden,
}

impl EmbeddingPlacement {
    fn applies(self, hidden_layer: usize) -> bool {
        match self {
            EmbeddingPlacement::EveryHidden => true,
            EmbeddingPlacement::FirstHidden => hidden_layer == 0,
            EmbeddingPlacement::LastHidden => hidden_layer == HIDDEN_LAYERS - 1,
        }
    }
}

/// A fully connected layer, `y = W x + b` with `W` of shape `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { w: Array2::zeros((outputs, inputs)), b: Array1::zeros(outputs) }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut layer = Self::zeros(inputs, outputs);
        layer.w.mapv_inplace(|_| rng.random_range(-bound..bound));
        layer.b.mapv_inplace(|_| rng.random_range(-bound..bound));
        layer
    }

    pub fn inputs(&self) -> usize {
        self.w.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.w.nrows()
    }

    /// `x W^T + b` for row-major inputs.
    pub(crate) fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = x.dot(&self.w.t());
        z += &self.b;
        z
    }
}

pub(crate) fn softplus(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Time step(s) for a batch evaluation.
#[derive(Debug, Clone, Copy)]
pub enum Steps<'a> {
    /// Every row at the same step.
    Same(usize),
    /// One step per row.
    PerRow(&'a [usize]),
}

/// Parameters of the noise predictor. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    layers: Vec<Dense>,
    time_embed: Array2<f64>,
    placement: EmbeddingPlacement,
}

struct Trace {
    input: Array2<f64>,
    pre: Vec<Array2<f64>>,
    act: Vec<Array2<f64>>,
    hidden: Vec<Array2<f64>>,
    out: Array2<f64>,
}

impl DenoiserParams {
    /// Randomly initialised network with all-ones step embeddings.
    pub fn init<R: Rng + ?Sized>(
        t_steps: usize,
        hidden: usize,
        placement: EmbeddingPlacement,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(HIDDEN_LAYERS + 1);
        layers.push(Dense::init(INPUT_DIM, hidden, rng));
        for _ in 1..HIDDEN_LAYERS {
            layers.push(Dense::init(hidden, hidden, rng));
        }
        layers.push(Dense::init(hidden, INPUT_DIM, rng));
        Self { layers, time_embed: Array2::ones((t_steps, hidden)), placement }
    }

    /// All weights, biases and embeddings zero.
    pub fn zeros(t_steps: usize, hidden: usize, placement: EmbeddingPlacement) -> Self {
        let mut layers = vec![Dense::zeros(INPUT_DIM, hidden)];
        for _ in 1..HIDDEN_LAYERS {
            layers.push(Dense::zeros(hidden, hidden));
        }
        layers.push(Dense::zeros(hidden, INPUT_DIM));
        Self { layers, time_embed: Array2::zeros((t_steps, hidden)), placement }
    }

    /// Assembles and validates parameters from raw parts.
    pub fn from_parts(
        layers: Vec<Dense>,
        time_embed: Array2<f64>,
        placement: EmbeddingPlacement,
    ) -> Result<Self> {
        if layers.len() != HIDDEN_LAYERS + 1 {
            return Err(Error::ShapeMismatch(format!(
                "expected {} layers, got {}",
                HIDDEN_LAYERS + 1,
                layers.len()
            )));
        }
        let hidden = layers[0].outputs();
        let expected: Vec<(usize, usize)> = std::iter::once((INPUT_DIM, hidden))
            .chain(std::iter::repeat_n((hidden, hidden), HIDDEN_LAYERS - 1))
            .chain(std::iter::once((hidden, INPUT_DIM)))
            .collect();
        for (k, (layer, (i, o))) in layers.iter().zip(expected).enumerate() {
            if layer.inputs() != i || layer.outputs() != o || layer.b.len() != o {
                return Err(Error::ShapeMismatch(format!(
                    "layer {k}: expected {o}x{i} weights and {o} biases, got {}x{} and {}",
                    layer.outputs(),
                    layer.inputs(),
                    layer.b.len()
                )));
            }
        }
        if time_embed.ncols() != hidden || time_embed.nrows() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "time embedding must be T x {hidden}, got {}x{}",
                time_embed.nrows(),
                time_embed.ncols()
            )));
        }
        let params = Self { layers, time_embed, placement };
        if params.slices().iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("denoiser parameters"));
        }
        Ok(params)
    }

    pub fn t_steps(&self) -> usize {
        self.time_embed.nrows()
    }

    pub fn hidden_width(&self) -> usize {
        self.layers[0].outputs()
    }

    pub fn placement(&self) -> EmbeddingPlacement {
        self.placement
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn time_embed(&self) -> &Array2<f64> {
        &self.time_embed
    }

    pub fn time_embed_mut(&mut self) -> &mut Array2<f64> {
        &mut self.time_embed
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.t_steps(), self.hidden_width(), self.placement)
    }

    fn check_steps(&self, n: usize, steps: Steps<'_>) -> Result<()> {
        let t_steps = self.t_steps();
        let check = |t: usize| {
            if t == 0 || t > t_steps {
                Err(Error::TimeStepOutOfRange { t, t_steps })
            } else {
                Ok(())
            }
        };
        match steps {
            Steps::Same(t) => check(t),
            Steps::PerRow(ts) => {
                if ts.len() != n {
                    return Err(Error::ShapeMismatch(format!("{} time steps for {n} rows", ts.len())));
                }
                ts.iter().try_for_each(|&t| check(t))
            }
        }
    }

    /// Predicted noise `eps_theta(x_t, t)` for every row.
    pub fn forward(&self, xt: &SymbolBatch, t: usize) -> Result<SymbolBatch> {
        self.check_steps(xt.len(), Steps::Same(t))?;
        Ok(SymbolBatch::from_array_unchecked(self.eval(xt.view(), Steps::Same(t))))
    }

    /// Forward pass with per-row time steps.
    pub fn forward_steps(&self, xt: &SymbolBatch, steps: Steps<'_>) -> Result<SymbolBatch> {
        self.check_steps(xt.len(), steps)?;
        Ok(SymbolBatch::from_array_unchecked(self.eval(xt.view(), steps)))
    }

    /// Hot path for samplers; steps must already be valid.
    pub(crate) fn eval(&self, x: ArrayView2<'_, f64>, steps: Steps<'_>) -> Array2<f64> {
        let mut h = x.to_owned();
        for (k, layer) in self.layers[..HIDDEN_LAYERS].iter().enumerate() {
            let mut z = layer.apply(h.view());
            if self.placement.applies(k) {
                match steps {
                    Steps::Same(t) => {
                        let e = self.time_embed.row(t - 1);
                        Zip::from(z.rows_mut()).for_each(|mut row| {
                            Zip::from(&mut row).and(&e).for_each(|v, &e| *v = softplus(*v) * e);
                        });
                    }
                    Steps::PerRow(ts) => {
                        for (mut row, &t) in z.rows_mut().into_iter().zip(ts) {
                            let e = self.time_embed.row(t - 1);
                            Zip::from(&mut row).and(&e).for_each(|v, &e| *v = softplus(*v) * e);
                        }
                    }
                }
            } else {
                z.mapv_inplace(softplus);
            }
            h = z;
        }
        self.layers[HIDDEN_LAYERS].apply(h.view())
    }

    fn embedding_for(&self, steps: Steps<'_>, row: usize) -> ndarray::ArrayView1<'_, f64> {
        let t = match steps {
            Steps::Same(t) => t,
            Steps::PerRow(ts) => ts[row],
        };
        self.time_embed.row(t - 1)
    }

    fn trace(&self, x: ArrayView2<'_, f64>, steps: Steps<'_>) -> Trace {
        let mut pre = Vec::with_capacity(HIDDEN_LAYERS);
        let mut act = Vec::with_capacity(HIDDEN_LAYERS);
        let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(HIDDEN_LAYERS);
        let input = x.to_owned();
        for (k, layer) in self.layers[..HIDDEN_LAYERS].iter().enumerate() {
            let last = if k == 0 { input.view() } else { hidden[k - 1].view() };
            let a = layer.apply(last);
            let s_ = a.mapv(softplus);
            let mut h = s_.clone();
            if self.placement.applies(k) {
                for (r, mut row) in h.rows_mut().into_iter().enumerate() {
                    row *= &self.embedding_for(steps, r);
                }
            }
            pre.push(a);
            act.push(s_);
            hidden.push(h);
        }
        let out = self.layers[HIDDEN_LAYERS].apply(hidden[HIDDEN_LAYERS - 1].view());
        Trace { input, pre, act, hidden, out }
    }

    /// Loss (batch mean of squared L2 error against `eps`) and its exact gradient
    /// with respect to every parameter.
    pub fn backward(
        &self,
        xt: &SymbolBatch,
        steps: Steps<'_>,
        eps: &SymbolBatch,
    ) -> Result<(f64, DenoiserParams)> {
        self.check_steps(xt.len(), steps)?;
        xt.ensure_same_shape(eps, "backward")?;
        let n = xt.len() as f64;
        let tr = self.trace(xt.view(), steps);
        let diff = &tr.out - eps.as_array();
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;

        let mut grads = self.zeros_like();
        let mut delta = diff * (2.0 / n);
        {
            let g = &mut grads.layers[HIDDEN_LAYERS];
            g.w = delta.t().dot(&tr.hidden[HIDDEN_LAYERS - 1]);
            g.b = delta.sum_axis(Axis(0));
        }
        let mut dh = delta.dot(&self.layers[HIDDEN_LAYERS].w);
        for k in (0..HIDDEN_LAYERS).rev() {
            let mut ds = dh;
            if self.placement.applies(k) {
                for r in 0..ds.nrows() {
                    let t = match steps {
                        Steps::Same(t) => t,
                        Steps::PerRow(ts) => ts[r],
                    };
                    let e = self.time_embed.row(t - 1);
                    let mut ge = grads.time_embed.row_mut(t - 1);
                    let s_row = tr.act[k].row(r);
                    let mut d_row = ds.row_mut(r);
                    Zip::from(&mut ge).and(&mut d_row).and(&s_row).and(&e).for_each(|ge, d, &s_, &e| {
                        *ge += *d * s_;
                        *d *= e;
                    });
                }
            }
            Zip::from(&mut ds).and(&tr.pre[k]).for_each(|d, &a| *d *= sigmoid(a));
            delta = ds;
            let input = if k == 0 { tr.input.view() } else { tr.hidden[k - 1].view() };
            let g = &mut grads.layers[k];
            g.w = delta.t().dot(&input);
            g.b = delta.sum_axis(Axis(0));
            dh = if k > 0 { delta.dot(&self.layers[k].w) } else { Array2::zeros((0, 0)) };
        }
        Ok((loss, grads))
    }

    /// Softplus outputs of each hidden layer (before embedding), for inspection.
    pub fn hidden_activations(&self, xt: &SymbolBatch, t: usize) -> Result<Vec<Array2<f64>>> {
        self.check_steps(xt.len(), Steps::Same(t))?;
        Ok(self.trace(xt.view(), Steps::Same(t)).act)
    }
}

impl ParamSlices for DenoiserParams {
    fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 1);
        for l in &self.layers {
            out.push(l.w.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
        }
        out.push(self.time_embed.as_slice().expect("standard layout"));
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 1);
        for l in &mut self.layers {
            out.push(l.w.as_slice_mut().expect("standard layout"));
            out.push(l.b.as_slice_mut().expect("standard layout"));
        }
        out.push(self.time_embed.as_slice_mut().expect("standard layout"));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_batch(n: usize, rng: &mut ChaCha8Rng) -> SymbolBatch {
        let v: Vec<f64> = (0..2 * n).map(|_| StandardNormal.sample(rng)).collect();
        SymbolBatch::from_array(Array2::from_shape_vec((n, 2), v).unwrap()).unwrap()
    }

    /// Independent plain-MLP evaluation, one sample at a time with explicit loops.
    fn plain_mlp(p: &DenoiserParams, x: [f64; 2]) -> [f64; 2] {
        let mut h: Vec<f64> = x.to_vec();
        for (k, l) in p.layers().iter().enumerate() {
            let mut next = vec![0.0; l.outputs()];
            for (o, slot) in next.iter_mut().enumerate() {
                let mut acc = l.b[o];
                for (i, hi) in h.iter().enumerate() {
                    acc += l.w[[o, i]] * hi;
                }
                *slot = if k < HIDDEN_LAYERS { (1.0 + acc.exp()).ln() } else { acc };
            }
            h = next;
        }
        [h[0], h[1]]
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut p = DenoiserParams::zeros(10, 8, EmbeddingPlacement::EveryHidden);
        p.time_embed_mut().fill(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = p.forward(&random_batch(5, &mut rng), 3).unwrap();
        assert!(out.as_array().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unit_embedding_is_a_plain_mlp() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = DenoiserParams::init(5, 16, EmbeddingPlacement::EveryHidden, &mut rng);
        let x = random_batch(7, &mut rng);
        let out = p.forward(&x, 4).unwrap();
        for r in 0..x.len() {
            let pt = x.point(r);
            let o = plain_mlp(&p, [pt.i, pt.q]);
            assert!((out.point(r).i - o[0]).abs() < 1e-12);
            assert!((out.point(r).q - o[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = DenoiserParams::init(5, 16, EmbeddingPlacement::EveryHidden, &mut rng);
        p.time_embed_mut().mapv_inplace(|_| rng.random_range(-2.0..2.0));
        let x = random_batch(9, &mut rng);
        let out = p.forward(&x, 2).unwrap();
        for r in 0..x.len() {
            let single = SymbolBatch::from_points(&[x.point(r)]).unwrap();
            let o = p.forward(&single, 2).unwrap();
            assert!((o.point(0).i - out.point(r).i).abs() <= 1e-12);
            assert!((o.point(0).q - out.point(r).q).abs() <= 1e-12);
        }
    }

    #[test]
    fn forward_checks_time_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = DenoiserParams::init(5, 4, EmbeddingPlacement::EveryHidden, &mut rng);
        let x = random_batch(2, &mut rng);
        assert!(matches!(p.forward(&x, 0), Err(Error::TimeStepOutOfRange { .. })));
        assert!(p.forward(&x, 6).is_err());
        assert!(p.forward_steps(&x, Steps::PerRow(&[1])).is_err());
        assert!(p.forward_steps(&x, Steps::PerRow(&[1, 9])).is_err());
    }

    #[test]
    fn softplus_activations_are_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = DenoiserParams::init(3, 32, EmbeddingPlacement::EveryHidden, &mut rng);
        let mut x = random_batch(50, &mut rng);
        x = SymbolBatch::from_array(x.as_array() * 30.0).unwrap();
        for layer in p.hidden_activations(&x, 2).unwrap() {
            assert!(layer.iter().all(|v| *v > 0.0));
        }
    }

    fn perturbed_loss(
        p: &DenoiserParams,
        x: &SymbolBatch,
        ts: &[usize],
        eps: &SymbolBatch,
        slice: usize,
        k: usize,
        h: f64,
    ) -> f64 {
        let mut q = p.clone();
        q.slices_mut()[slice][k] += h;
        let out = q.forward_steps(x, Steps::PerRow(ts)).unwrap();
        crate::diffusion::loss_target(eps, &out).unwrap()
    }

    fn assert_gradients_match(placement: EmbeddingPlacement, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = DenoiserParams::init(4, 6, placement, &mut rng);
        p.time_embed_mut().mapv_inplace(|_| rng.random_range(0.5..1.5));
        let x = random_batch(5, &mut rng);
        let eps = random_batch(5, &mut rng);
        let ts = [1, 3, 3, 2, 1];
        let (loss, grads) = p.backward(&x, Steps::PerRow(&ts), &eps).unwrap();
        let out = p.forward_steps(&x, Steps::PerRow(&ts)).unwrap();
        assert!((loss - crate::diffusion::loss_target(&eps, &out).unwrap()).abs() < 1e-14);

        let h = 1e-5;
        let g = grads.slices();
        for (slice, gs) in g.iter().enumerate() {
            for k in 0..gs.len() {
                let up = perturbed_loss(&p, &x, &ts, &eps, slice, k, h);
                let down = perturbed_loss(&p, &x, &ts, &eps, slice, k, -h);
                let fd = (up - down) / (2.0 * h);
                let rel = (fd - gs[k]).abs() / fd.abs().max(gs[k].abs()).max(1e-6);
                assert!(rel < 1e-4, "slice {slice} k {k}: fd {fd} analytic {}", gs[k]);
            }
        }
        // row 3 (t = 4) is never used
        let te = grads.time_embed();
        assert!(te.row(3).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradients_match_central_differences() {
        assert_gradients_match(EmbeddingPlacement::EveryHidden, 10);
        assert_gradients_match(EmbeddingPlacement::FirstHidden, 11);
        assert_gradients_match(EmbeddingPlacement::LastHidden, 12);
    }

    #[test]
    fn zero_loss_at_perfect_prediction() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = DenoiserParams::init(3, 8, EmbeddingPlacement::EveryHidden, &mut rng);
        let x = random_batch(4, &mut rng);
        let eps = p.forward(&x, 2).unwrap();
        let (loss, grads) = p.backward(&x, Steps::Same(2), &eps).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.layers()[HIDDEN_LAYERS].b.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn from_parts_validates_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = DenoiserParams::init(3, 8, EmbeddingPlacement::EveryHidden, &mut rng);
        let ok = DenoiserParams::from_parts(p.layers().to_vec(), p.time_embed().clone(), p.placement());
        assert_eq!(ok.unwrap(), p);
        let bad = DenoiserParams::from_parts(p.layers()[..3].to_vec(), p.time_embed().clone(), p.placement());
        assert!(bad.is_err());
        let bad = DenoiserParams::from_parts(p.layers().to_vec(), Array2::ones((3, 7)), p.placement());
        assert!(bad.is_err());
    }
}
