//! Probabilistic constellation shaping with a denoising diffusion model.
//!
//! A small time-conditioned MLP is trained to predict the noise added to QAM
//! constellation points by a DDPM forward process. The same model is then
//! run in two places:
//!
//! - at the transmitter ([`shaping`]), where uniformly drawn points are
//!   corrupted with synthetic noise at the channel's noise power and denoised
//!   by the full reverse chain; the histogram of the projected outputs is the
//!   shaped symbol distribution;
//! - at the receiver ([`receiver`]), where the reverse chain is started from
//!   the channel output and the result is projected onto the constellation.
//!
//! [`baseline`] holds the uniform-shaping and neural-demapper comparison
//! systems, [`metrics`] the plug-in estimators, and [`experiment`] the
//! config-driven sweeps with CSV and SVG output.

pub mod baseline;
pub mod batch;
pub mod channel;
pub mod constellation;
pub mod denoiser;
pub mod diffusion;
mod error;
pub mod experiment;
pub mod metrics;
mod optim;
pub mod par;
pub mod receiver;
pub mod rng;
mod sampler;
pub mod shaping;

pub use batch::{Point2, SymbolBatch};
pub use channel::{ChannelKind, ChannelSpec};
pub use constellation::{Constellation, ShapingDistribution};
pub use denoiser::{DenoiserParams, TrainConfig};
pub use diffusion::VarianceSchedule;
pub use error::{Error, Result};
pub use optim::AdamConfig;
pub use par::Execution;
pub use rng::SeedStream;
pub use shaping::ShapingRequest;
