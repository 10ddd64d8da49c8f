//! The ancestral reverse chain shared by the transmitter and the receiver.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::denoiser::{DenoiserParams, Steps};
use crate::diffusion::{reverse_step_in_place, VarianceSchedule};
use crate::par::{chunk_ranges, map_indexed, Execution, CHUNK_ROWS};
use crate::rng::{SeedStream, StreamRng};
use crate::{Error, Result};

pub(crate) fn check_compatible(model: &DenoiserParams, sched: &VarianceSchedule) -> Result<()> {
    if model.t_steps() != sched.t_steps() {
        return Err(Error::ShapeMismatch(format!(
            "model has {} step embeddings but the schedule has {} steps",
            model.t_steps(),
            sched.t_steps()
        )));
    }
    Ok(())
}

/// Runs `t = T..1` reverse steps on `x` in place, with fresh `z` for `t > 1`.
pub(crate) fn reverse_chain<R: Rng + ?Sized>(
    model: &DenoiserParams,
    sched: &VarianceSchedule,
    x: &mut Array2<f64>,
    rng: &mut R,
) {
    let mut z = Array2::zeros(x.raw_dim());
    for t in (1..=sched.t_steps()).rev() {
        let eps_hat = model.eval(x.view(), Steps::Same(t));
        if t > 1 {
            z.mapv_inplace(|_| rng.sample(StandardNormal));
            reverse_step_in_place(x, &eps_hat, Some(&z), t, sched);
        } else {
            reverse_step_in_place(x, &eps_hat, None, t, sched);
        }
    }
}

/// Builds `n` rows in fixed-size chunks, each chunk from its own sub-stream of
/// `stream`, and stacks the results. `init` produces a chunk's starting rows
/// from `(start_row, rows, rng)`; the same rng then drives the reverse chain.
pub(crate) fn chunked_reverse<F>(
    model: &DenoiserParams,
    sched: &VarianceSchedule,
    n: usize,
    stream: &SeedStream,
    exec: Execution,
    init: F,
) -> Array2<f64>
where
    F: Fn(usize, usize, &mut StreamRng) -> Array2<f64> + Sync + Send,
{
    let ranges = chunk_ranges(n, CHUNK_ROWS);
    let parts = map_indexed(ranges.len(), exec, |k| {
        let (start, len) = ranges[k];
        let mut rng = stream.index(k as u64).rng();
        let mut x = init(start, len, &mut rng);
        reverse_chain(model, sched, &mut x, &mut rng);
        x
    });
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(ndarray::Axis(0), &views).expect("chunks share column count")
}
