//! Command-line driver for DDPM constellation-shaping experiments.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ddpm_pcs::denoiser::Checkpoint;
use ddpm_pcs::experiment::csv::{self, Provenance};
use ddpm_pcs::experiment::{self, svg, ExperimentConfig, Scheme, SweepPoint};
use ddpm_pcs::metrics::entropy_bits;
use ddpm_pcs::receiver::reconstruct_passes;
use ddpm_pcs::{ChannelKind, Error, Execution, SeedStream};

#[derive(Parser)]
#[command(name = "ddpm-pcs", version, about = "Probabilistic constellation shaping with a diffusion model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file, or the name of a builtin (`default_16qam`, `default_64qam`).
    #[arg(long, default_value = "default_16qam")]
    config: String,

    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory. Falls back to $DDPM_PCS_OUT, then the config's `output_dir`.
    #[arg(long, env = "DDPM_PCS_OUT")]
    out: Option<PathBuf>,

    /// Run on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train the denoiser; writes model.json and train_log.csv.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Shaped transmit distribution at one SNR.
    Shape {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        snr_db: f64,
        /// Overrides the config's `n_samples`.
        #[arg(long)]
        n_samples: Option<usize>,
    },
    /// One sweep point; prints and writes a single result row.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        snr_db: f64,
        #[arg(long, default_value = "awgn")]
        channel: ChannelKind,
        #[arg(long, default_value = "ddpm")]
        scheme: Scheme,
    },
    /// Every (scheme, channel, SNR) point of the config; writes sweep.csv and sweep.svg.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Trains a fresh model when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Reverse-diffuse received `i,q` samples and decide symbols.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// CSV of received samples with columns `i,q`.
        #[arg(long)]
        input: PathBuf,
        /// Independent reverse passes; more than one adds a `vote_share` column.
        #[arg(long, default_value_t = 1)]
        passes: usize,
    },
}

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
    exec: Execution,
}

impl Ctx {
    fn new(c: &Common) -> Result<Self, Error> {
        let mut cfg = if Path::new(&c.config).exists() {
            ExperimentConfig::load(&c.config)?
        } else {
            ExperimentConfig::builtin(&c.config)
                .map_err(|_| Error::InvalidConfig(format!("{}: no such file or builtin config", c.config)))?
        };
        if let Some(seed) = c.seed {
            cfg.seed = seed;
        }
        let out = c.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
        fs::create_dir_all(&out)?;
        let exec = if c.sequential { Execution::Sequential } else { Execution::Parallel };
        Ok(Self { cfg, out, exec })
    }

    fn provenance(&self) -> Provenance {
        Provenance { config_hash: self.cfg.hash(), seed: self.cfg.seed }
    }

    fn create(&self, name: &str) -> Result<(PathBuf, File), Error> {
        let path = self.out.join(name);
        let file = File::create(&path)?;
        Ok((path, file))
    }

    fn model(&self, path: &Path) -> Result<Checkpoint, Error> {
        let ckpt = Checkpoint::load(path)?;
        experiment::check_model(&self.cfg, &ckpt)?;
        Ok(ckpt)
    }
}

fn train(ctx: &Ctx) -> Result<Checkpoint, Error> {
    eprintln!(
        "training {}-QAM denoiser: {} epochs, {} steps",
        ctx.cfg.modulation_order,
        ctx.cfg.epochs,
        ctx.cfg.epochs * ctx.cfg.train_config().steps_per_epoch(ctx.cfg.modulation_order)
    );
    let outcome = experiment::train_model(&ctx.cfg)?;
    let model_path = ctx.out.join("model.json");
    outcome.checkpoint.save(&model_path)?;
    let (log_path, log) = ctx.create("train_log.csv")?;
    csv::write_training_log(log, &ctx.provenance(), &outcome.losses)?;
    println!("{}", model_path.display());
    println!("{}", log_path.display());
    Ok(outcome.checkpoint)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train { common } => {
            train(&Ctx::new(&common)?)?;
        }
        Command::Shape { common, model, snr_db, n_samples } => {
            let mut ctx = Ctx::new(&common)?;
            if let Some(n) = n_samples {
                ctx.cfg.n_samples = n;
                ctx.cfg.validate()?;
            }
            let ckpt = ctx.model(&model)?;
            let dist = experiment::shaping_distribution(&ctx.cfg, &ckpt, snr_db, ctx.exec)?;
            let (path, file) = ctx.create(&format!("shape_{snr_db}dB.csv"))?;
            csv::write_distribution(file, &ctx.provenance(), &ctx.cfg.constellation()?, &dist)?;
            println!("entropy_bits={}", entropy_bits(&dist));
            println!("{}", path.display());
        }
        Command::Simulate { common, model, snr_db, channel, scheme } => {
            let ctx = Ctx::new(&common)?;
            let ckpt = ctx.model(&model)?;
            let point = SweepPoint { scheme, channel, snr_db };
            let row = experiment::simulate_point(&ctx.cfg, &ckpt, point, ctx.exec)?;
            let (path, file) = ctx.create(&format!("simulate_{scheme}_{channel}_{snr_db}dB.csv"))?;
            csv::write_sweep(file, &ctx.provenance(), std::slice::from_ref(&row))?;
            println!(
                "{scheme},{channel},{snr_db},mi_bits={},ser={},entropy_tx={}",
                row.mi_bits, row.ser, row.entropy_tx
            );
            println!("{}", path.display());
        }
        Command::Sweep { common, model } => {
            let ctx = Ctx::new(&common)?;
            let ckpt = match model {
                Some(path) => ctx.model(&path)?,
                None => train(&ctx)?,
            };
            let points = experiment::sweep_points(&ctx.cfg).len();
            eprintln!("sweeping {points} points, {} symbols each", ctx.cfg.symbols_per_point);
            let rows = experiment::run_sweep(&ctx.cfg, &ckpt, ctx.exec)?;
            let (csv_path, file) = ctx.create("sweep.csv")?;
            csv::write_sweep(file, &ctx.provenance(), &rows)?;
            let title = format!("{}-QAM, seed {}", ctx.cfg.modulation_order, ctx.cfg.seed);
            let svg_path = ctx.out.join("sweep.svg");
            fs::write(&svg_path, svg::sweep_chart(&title, &rows))?;
            println!("{}", csv_path.display());
            println!("{}", svg_path.display());
        }
        Command::Reconstruct { common, model, input, passes } => {
            let ctx = Ctx::new(&common)?;
            let ckpt = ctx.model(&model)?;
            let y = csv::read_iq(File::open(&input)?)?;
            let stream = SeedStream::from_seed(ctx.cfg.seed).child("receiver");
            let c = ctx.cfg.constellation()?;
            let hist = reconstruct_passes(&ckpt.params, &ckpt.schedule, &c, &y, passes, &stream, ctx.exec)?;
            let (path, file) = ctx.create("reconstruct.csv")?;
            csv::write_reconstruction(file, &ctx.provenance(), &y, &hist.decisions(), Some(&hist))?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
