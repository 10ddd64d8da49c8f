//! Receiver-side reconstruction: start the reverse chain from the channel
//! output, denoise through every step and project onto the constellation.

use serde::Serialize;

use crate::batch::{Point2, SymbolBatch};
use crate::constellation::Constellation;
use crate::denoiser::DenoiserParams;
use crate::diffusion::VarianceSchedule;
use crate::par::Execution;
use crate::rng::SeedStream;
use crate::sampler::{check_compatible, chunked_reverse};
use crate::{Error, Result};

/// Denoised (unprojected) estimates of `x_0` for every received row.
pub fn denoise(
    model: &DenoiserParams,
    sched: &VarianceSchedule,
    y: &SymbolBatch,
    stream: &SeedStream,
    exec: Execution,
) -> Result<SymbolBatch> {
    check_compatible(model, sched)?;
    let src = y.as_array();
    let x0 = chunked_reverse(model, sched, y.len(), stream, exec, |start, len, _| {
        src.slice(ndarray::s![start..start + len, ..]).to_owned()
    });
    Ok(SymbolBatch::from_array_unchecked(x0))
}

/// Projected reconstructions and their symbol indices.
pub fn reconstruct(
    model: &DenoiserParams,
    sched: &VarianceSchedule,
    c: &Constellation,
    y: &SymbolBatch,
    stream: &SeedStream,
    exec: Execution,
) -> Result<(SymbolBatch, Vec<usize>)> {
    let x0 = denoise(model, sched, y, stream, exec)?;
    Ok(c.project(&x0))
}

/// Per-row vote counts over `passes` independent reverse chains.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassHistogram {
    pub passes: usize,
    /// `counts[row][symbol]`.
    pub counts: Vec<Vec<u32>>,
}

impl PassHistogram {
    /// Most frequent symbol per row, ties to the lowest index.
    pub fn decisions(&self) -> Vec<usize> {
        self.counts
            .iter()
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

    /// Empirical posterior `counts / passes` for one row.
    pub fn posterior(&self, row: usize) -> Vec<f64> {
        self.counts[row].iter().map(|&v| v as f64 / self.passes as f64).collect()
    }
}

fn pass_stream(stream: &SeedStream, pass: usize) -> SeedStream {
    if pass == 0 {
        *stream
    } else {
        stream.child("pass").index(pass as u64)
    }
}

/// Runs the receiver `passes` times with independent noise. Pass 0 uses
/// `stream` itself, so a single pass reproduces [`reconstruct`].
pub fn reconstruct_passes(
    model: &DenoiserParams,
    sched: &VarianceSchedule,
    c: &Constellation,
    y: &SymbolBatch,
    passes: usize,
    stream: &SeedStream,
    exec: Execution,
) -> Result<PassHistogram> {
    if passes == 0 {
        return Err(Error::InvalidConfig("passes must be at least 1".into()));
    }
    let mut counts = vec![vec![0u32; c.order()]; y.len()];
    for pass in 0..passes {
        let x0 = denoise(model, sched, y, &pass_stream(stream, pass), exec)?;
        for (row, r) in counts.iter_mut().zip(x0.as_array().rows()) {
            row[c.nearest(Point2::new(r[0], r[1]))] += 1;
        }
    }
    Ok(PassHistogram { passes, counts })
}
