//! Config-driven training runs and SNR sweeps.
//!
//! All randomness derives from the config's master seed through named
//! sub-streams (`train`, `shape`, `channel`, `receiver`, `demapper`), each
//! further keyed by SNR, so any single point can be recomputed in isolation
//! and a sweep gives the same rows however it is scheduled.

pub mod config;
pub mod csv;
pub mod svg;

use serde_json::json;

use crate::baseline::{demap, train_dnn_demapper_with_stream, uniform_shaping, DemapperParams};
use crate::channel::{transmit, ChannelKind, ChannelSpec};
use crate::constellation::{Constellation, ShapingDistribution};
use crate::denoiser::{train, Checkpoint};
use crate::diffusion::VarianceSchedule;
use crate::metrics::{entropy_bits, mutual_information, symbol_error_rate};
use crate::par::{map_indexed, Execution};
use crate::receiver::reconstruct;
use crate::rng::SeedStream;
use crate::shaping::{shape_with_stream, ShapingRequest};
use crate::{Error, Result};

pub use config::{ExperimentConfig, Scheme};

/// Label used to key per-SNR sub-streams.
fn snr_key(snr_db: f64) -> String {
    format!("snr={snr_db}")
}

fn master(cfg: &ExperimentConfig) -> SeedStream {
    SeedStream::from_seed(cfg.seed)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub losses: Vec<f64>,
}

/// Trains the denoiser described by `cfg`.
pub fn train_model(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let c = cfg.constellation()?;
    let sched = cfg.schedule()?;
    let trained = train(&c, &sched, &cfg.train_config())?;
    let meta = json!({
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "steps": trained.losses.len(),
    });
    let checkpoint = Checkpoint::new(cfg.modulation_order, sched, trained.params, meta)?;
    Ok(TrainOutcome { checkpoint, losses: trained.losses })
}

/// Rejects a model that was trained for a different constellation or schedule.
pub fn check_model(cfg: &ExperimentConfig, model: &Checkpoint) -> Result<()> {
    if model.modulation_order != cfg.modulation_order {
        return Err(Error::Checkpoint(format!(
            "model was trained for {}-QAM but the config asks for {}-QAM",
            model.modulation_order, cfg.modulation_order
        )));
    }
    if model.schedule != cfg.schedule()? {
        return Err(Error::Checkpoint("model schedule differs from the config schedule".into()));
    }
    Ok(())
}

/// Shaped transmit distribution at `snr_db`.
pub fn shaping_distribution(
    cfg: &ExperimentConfig,
    model: &Checkpoint,
    snr_db: f64,
    exec: Execution,
) -> Result<ShapingDistribution> {
    let c = cfg.constellation()?;
    let req = ShapingRequest {
        snr_db,
        n_samples: cfg.n_samples,
        transmit_power: cfg.transmit_power,
        seed: cfg.seed,
    };
    let stream = master(cfg).child("shape").child(&snr_key(snr_db));
    shape_with_stream(&model.params, &model.schedule, &c, &req, &stream, exec)
}

/// Neural demapper trained on AWGN at `snr_db`.
pub fn demapper_for(cfg: &ExperimentConfig, snr_db: f64) -> Result<DemapperParams> {
    let c = cfg.constellation()?;
    let spec = ChannelSpec::new(ChannelKind::Awgn, snr_db, cfg.transmit_power)?;
    let stream = master(cfg).child("demapper").child(&snr_key(snr_db));
    Ok(train_dnn_demapper_with_stream(&c, &spec, &cfg.demapper_config(), &stream)?.params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub scheme: Scheme,
    pub channel: ChannelKind,
    pub snr_db: f64,
}

/// One line of the sweep CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scheme: Scheme,
    pub channel: ChannelKind,
    pub snr_db: f64,
    pub mi_bits: f64,
    pub ser: f64,
    /// Entropy of the transmit distribution.
    pub entropy_tx: f64,
    pub seed: u64,
}

/// Every (scheme, channel, snr) combination, sorted in that order.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    let mut pts = Vec::new();
    for &scheme in &cfg.schemes {
        for &channel in &cfg.channels {
            for &snr_db in &cfg.snr_db {
                pts.push(SweepPoint { scheme, channel, snr_db });
            }
        }
    }
    pts.sort_by(|a, b| (a.scheme, a.channel).cmp(&(b.scheme, b.channel)).then(a.snr_db.total_cmp(&b.snr_db)));
    pts.dedup();
    pts
}

/// Transmitter side of a point: what is sent, and how it is decided.
enum Link<'a> {
    Denoiser { dist: &'a ShapingDistribution },
    Demapper { params: &'a DemapperParams },
}

fn run_link(
    cfg: &ExperimentConfig,
    c: &Constellation,
    sched: &VarianceSchedule,
    model: &Checkpoint,
    point: SweepPoint,
    link: Link<'_>,
    exec: Execution,
) -> Result<SweepRow> {
    let key = snr_key(point.snr_db);
    let uniform = uniform_shaping(c);
    let dist = match link {
        Link::Denoiser { dist } => dist,
        Link::Demapper { .. } => &uniform,
    };
    let mut sym_rng =
        master(cfg).child("shape").child(&key).child("symbols").child(point.scheme.as_str()).rng();
    let (x, tx) = dist.sample(c, cfg.symbols_per_point, &mut sym_rng)?;
    let spec = ChannelSpec::new(point.channel, point.snr_db, cfg.transmit_power)?;
    let mut ch_rng = master(cfg).child("channel").child(&point.channel.to_string()).child(&key).rng();
    let y = transmit(&x, &spec, &mut ch_rng)?;
    let rx = match link {
        Link::Denoiser { .. } => {
            let stream = master(cfg).child("receiver").child(&key);
            reconstruct(&model.params, sched, c, &y, &stream, exec)?.1
        }
        Link::Demapper { params } => demap(params, &y),
    };
    Ok(SweepRow {
        scheme: point.scheme,
        channel: point.channel,
        snr_db: point.snr_db,
        mi_bits: mutual_information(&tx, &rx, c.order())?,
        ser: symbol_error_rate(&tx, &rx)?,
        entropy_tx: entropy_bits(dist),
        seed: cfg.seed,
    })
}

/// A single sweep point. Gives the same row as the matching line of [`run_sweep`].
pub fn simulate_point(
    cfg: &ExperimentConfig,
    model: &Checkpoint,
    point: SweepPoint,
    exec: Execution,
) -> Result<SweepRow> {
    cfg.validate()?;
    check_model(cfg, model)?;
    let c = cfg.constellation()?;
    match point.scheme {
        Scheme::Ddpm => {
            let dist = shaping_distribution(cfg, model, point.snr_db, exec)?;
            run_link(cfg, &c, &model.schedule, model, point, Link::Denoiser { dist: &dist }, exec)
        }
        Scheme::Uniform => {
            let dist = uniform_shaping(&c);
            run_link(cfg, &c, &model.schedule, model, point, Link::Denoiser { dist: &dist }, exec)
        }
        Scheme::Dnn => {
            let params = demapper_for(cfg, point.snr_db)?;
            run_link(cfg, &c, &model.schedule, model, point, Link::Demapper { params: &params }, exec)
        }
    }
}

/// All points of the sweep, in [`sweep_points`] order. Shaped distributions
/// and demappers are computed once per SNR and shared between channels.
pub fn run_sweep(cfg: &ExperimentConfig, model: &Checkpoint, exec: Execution) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    check_model(cfg, model)?;
    let c = cfg.constellation()?;
    let points = sweep_points(cfg);
    let snrs = &cfg.snr_db;

    let needs = |s: Scheme| cfg.schemes.contains(&s);
    let shaped: Vec<Option<ShapingDistribution>> = if needs(Scheme::Ddpm) {
        map_indexed(snrs.len(), exec, |k| shaping_distribution(cfg, model, snrs[k], exec))
            .into_iter()
            .map(|r| r.map(Some))
            .collect::<Result<_>>()?
    } else {
        vec![None; snrs.len()]
    };
    let demappers: Vec<Option<DemapperParams>> = if needs(Scheme::Dnn) {
        map_indexed(snrs.len(), exec, |k| demapper_for(cfg, snrs[k]))
            .into_iter()
            .map(|r| r.map(Some))
            .collect::<Result<_>>()?
    } else {
        vec![None; snrs.len()]
    };
    let uniform = uniform_shaping(&c);
    let slot = |snr: f64| snrs.iter().position(|&s| s == snr).expect("point SNR comes from the list");

    map_indexed(points.len(), exec, |i| {
        let p = points[i];
        let k = slot(p.snr_db);
        let link = match p.scheme {
            Scheme::Ddpm => Link::Denoiser { dist: shaped[k].as_ref().expect("computed above") },
            Scheme::Uniform => Link::Denoiser { dist: &uniform },
            Scheme::Dnn => Link::Demapper { params: demappers[k].as_ref().expect("computed above") },
        };
        run_link(cfg, &c, &model.schedule, model, p, link, exec)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            modulation_order: 4,
            t_steps: 5,
            beta_min: 0.01,
            beta_max: 0.2,
            epochs: 3,
            hidden_width: 8,
            n_samples: 64,
            snr_db: vec![10.0, -5.0],
            symbols_per_point: 300,
            demapper_hidden_width: 8,
            demapper_iterations: 20,
            ..Default::default()
        }
    }

    #[test]
    fn points_are_sorted_and_complete() {
        let cfg = ExperimentConfig {
            schemes: vec![Scheme::Dnn, Scheme::Ddpm],
            channels: vec![ChannelKind::Laplacian, ChannelKind::Awgn],
            snr_db: vec![5.0, -5.0, 0.0],
            ..Default::default()
        };
        let pts = sweep_points(&cfg);
        assert_eq!(pts.len(), 12);
        assert_eq!(pts[0], SweepPoint { scheme: Scheme::Ddpm, channel: ChannelKind::Awgn, snr_db: -5.0 });
        assert_eq!(pts[2].snr_db, 5.0);
        assert_eq!(pts[3].channel, ChannelKind::Laplacian);
        assert_eq!(pts[11], SweepPoint { scheme: Scheme::Dnn, channel: ChannelKind::Laplacian, snr_db: 5.0 });
    }

    #[test]
    fn sweep_matches_single_points_and_modes() {
        let cfg = tiny();
        let model = train_model(&cfg).unwrap().checkpoint;
        let rows = run_sweep(&cfg, &model, Execution::Parallel).unwrap();
        assert_eq!(rows.len(), 3 * 2 * 2);
        assert_eq!(rows, run_sweep(&cfg, &model, Execution::Sequential).unwrap());
        for (p, row) in sweep_points(&cfg).into_iter().zip(&rows) {
            assert_eq!(&simulate_point(&cfg, &model, p, Execution::Sequential).unwrap(), row);
        }
        for r in &rows {
            assert!((0.0..=2.0).contains(&r.mi_bits) && (0.0..=1.0).contains(&r.ser));
        }
        let dnn = rows.iter().find(|r| r.scheme == Scheme::Dnn).unwrap();
        assert_eq!(dnn.entropy_tx, 2.0);
    }

    #[test]
    fn training_is_reproducible() {
        let cfg = tiny();
        let a = train_model(&cfg).unwrap();
        let b = train_model(&cfg).unwrap();
        assert_eq!(a.checkpoint.to_json_bytes(), b.checkpoint.to_json_bytes());
        assert_eq!(a.losses.len(), 3 * cfg.train_config().steps_per_epoch(4));
        assert_eq!(a.checkpoint.meta["config_hash"], cfg.hash());
    }

    #[test]
    fn mismatched_model_is_rejected() {
        let cfg = tiny();
        let model = train_model(&cfg).unwrap().checkpoint;
        let other = ExperimentConfig { modulation_order: 16, ..tiny() };
        assert!(matches!(run_sweep(&other, &model, Execution::Sequential), Err(Error::Checkpoint(_))));
        let resched = ExperimentConfig { beta_max: 0.3, ..tiny() };
        assert!(check_model(&resched, &model).is_err());
    }
}
