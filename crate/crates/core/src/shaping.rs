//! Transmitter-side shaping: denoise synthetically corrupted constellation
//! points with the full reverse chain and use the histogram of the projected
//! outputs as the symbol distribution for the current SNR.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constellation::{Constellation, ShapingDistribution};
use crate::denoiser::DenoiserParams;
use crate::diffusion::VarianceSchedule;
use crate::par::Execution;
use crate::rng::SeedStream;
use crate::sampler::{check_compatible, chunked_reverse};
use crate::{Error, Result};

pub const DEFAULT_SHAPING_SAMPLES: usize = 10_000;

/// Complex noise power `delta^2 = P * 10^(-snr_db / 10)`.
pub fn noise_power_from_snr(snr_db: f64, transmit_power: f64) -> f64 {
    transmit_power * 10f64.powf(-snr_db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapingRequest {
    pub snr_db: f64,
    pub n_samples: usize,
    pub transmit_power: f64,
    pub seed: u64,
}

impl Default for ShapingRequest {
    fn default() -> Self {
        Self { snr_db: 0.0, n_samples: DEFAULT_SHAPING_SAMPLES, transmit_power: 1.0, seed: 0 }
    }
}

impl ShapingRequest {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("n_samples must be at least 1".into()));
        }
        if !(self.transmit_power > 0.0 && self.transmit_power.is_finite()) {
            return Err(Error::InvalidConfig("transmit power must be positive".into()));
        }
        if self.snr_db.is_nan() {
            return Err(Error::InvalidConfig("SNR is NaN".into()));
        }
        Ok(())
    }

    /// Random stream used by [`shape`] for this request.
    pub fn stream(&self) -> SeedStream {
        SeedStream::from_seed(self.seed).child("shape")
    }
}

/// Symbol indices generated by the transmitter's reverse chain.
///
/// Each of the `n_samples` rows starts at a uniformly drawn constellation point
/// plus `N(0, delta^2/2)` noise per coordinate, is taken as `x_T` and denoised
/// through `t = T..1`, then projected.
pub fn generate(
    model: &DenoiserParams,
    sched: &VarianceSchedule,
    c: &Constellation,
    req: &ShapingRequest,
    stream: &SeedStream,
    exec: Execution,
) -> Result<Vec<usize>> {
    req.validate()?;
    check_compatible(model, sched)?;
    let sigma = (noise_power_from_snr(req.snr_db, req.transmit_power) / 2.0).sqrt();
    let x0 = chunked_reverse(model, sched, req.n_samples, stream, exec, |_, len, rng| {
        let mut x = Array2::zeros((len, 2));
        for mut row in x.rows_mut() {
            let p = c.point(rng.random_range(0..c.order()));
            row[0] = p.i + sigma * rng.sample::<f64, _>(StandardNormal);
            row[1] = p.q + sigma * rng.sample::<f64, _>(StandardNormal);
        }
        x
    });
    Ok(x0.rows().into_iter().map(|r| c.nearest(crate::Point2::new(r[0], r[1]))).collect())
}

/// Shaped distribution for `req`, using the request's own seed.
pub fn shape(
    model: &DenoiserParams,
    sched: &VarianceSchedule,
    c: &Constellation,
    req: &ShapingRequest,
    exec: Execution,
) -> Result<ShapingDistribution> {
    shape_with_stream(model, sched, c, req, &req.stream(), exec)
}

/// As [`shape`], drawing randomness from an explicit stream.
pub fn shape_with_stream(
    model: &DenoiserParams,
    sched: &VarianceSchedule,
    c: &Constellation,
    req: &ShapingRequest,
    stream: &SeedStream,
    exec: Execution,
) -> Result<ShapingDistribution> {
    let indices = generate(model, sched, c, req, stream, exec)?;
    ShapingDistribution::from_counts(&c.count(&indices)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::EmbeddingPlacement;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noise_power_examples() {
        assert_eq!(noise_power_from_snr(0.0, 1.0), 1.0);
        assert_relative_eq!(noise_power_from_snr(10.0, 1.0), 0.1, epsilon = 1e-15);
        assert_relative_eq!(noise_power_from_snr(-25.0, 1.0), 316.227_766_016_837_9, epsilon = 1e-9);
        assert_relative_eq!(noise_power_from_snr(3.0, 2.0), 2.0 * 10f64.powf(-0.3));
        assert!(noise_power_from_snr(5.0, 1.0) < noise_power_from_snr(4.0, 1.0));
    }

    fn small_model(t: usize) -> (DenoiserParams, VarianceSchedule) {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        (
            DenoiserParams::init(t, 8, EmbeddingPlacement::EveryHidden, &mut rng),
            VarianceSchedule::linear(t, 1e-3, 0.05).unwrap(),
        )
    }

    #[test]
    fn single_observation_is_a_point_mass() {
        let (m, s) = small_model(5);
        let c = Constellation::qam(16).unwrap();
        let req = ShapingRequest { n_samples: 1, ..Default::default() };
        let d = shape(&m, &s, &c, &req, Execution::Sequential).unwrap();
        assert_eq!(d.probs().iter().filter(|p| **p == 1.0).count(), 1);
        assert_eq!(d.probs().iter().filter(|p| **p == 0.0).count(), 15);
    }

    #[test]
    fn deterministic_and_execution_independent() {
        let (m, s) = small_model(5);
        let c = Constellation::qam(16).unwrap();
        let req = ShapingRequest { n_samples: 5000, snr_db: -3.0, seed: 21, ..Default::default() };
        let a = shape(&m, &s, &c, &req, Execution::Sequential).unwrap();
        let b = shape(&m, &s, &c, &req, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert!((a.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let other = shape(&m, &s, &c, &ShapingRequest { seed: 22, ..req }, Execution::Sequential).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn rejects_mismatched_schedule_and_bad_requests() {
        let (m, _) = small_model(5);
        let s = VarianceSchedule::linear(6, 1e-3, 0.05).unwrap();
        let c = Constellation::qam(4).unwrap();
        let req = ShapingRequest::default();
        assert!(matches!(shape(&m, &s, &c, &req, Execution::Sequential), Err(Error::ShapeMismatch(_))));
        let (m, s) = small_model(5);
        let bad = ShapingRequest { n_samples: 0, ..req };
        assert!(shape(&m, &s, &c, &bad, Execution::Sequential).is_err());
        let bad = ShapingRequest { transmit_power: 0.0, ..req };
        assert!(shape(&m, &s, &c, &bad, Execution::Sequential).is_err());
    }
}
