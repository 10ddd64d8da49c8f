//! Parallel versus sequential execution of the reverse-chain samplers.
//!
//! Both modes split work into identical chunks, so they compute the same
//! numbers; the bench measures only the scheduling difference. Build with
//! `--no-default-features` to see the fallback, where both arms run serially.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ddpm_pcs::denoiser::EmbeddingPlacement;
use ddpm_pcs::shaping::shape;
use ddpm_pcs::{
    receiver, Constellation, DenoiserParams, Execution, SeedStream, ShapingDistribution, ShapingRequest,
    VarianceSchedule,
};

const MODES: [(&str, Execution); 2] =
    [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn model(t_steps: usize) -> DenoiserParams {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    DenoiserParams::init(t_steps, 128, EmbeddingPlacement::EveryHidden, &mut rng)
}

fn reconstruct(cr: &mut Criterion) {
    let sched = VarianceSchedule::linear(100, 1e-4, 2e-3).unwrap();
    let m = model(100);
    let c = Constellation::qam(16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut group = cr.benchmark_group("reconstruct");
    group.sample_size(10);
    for n in [2_048usize, 16_384] {
        let (x, _) = ShapingDistribution::uniform(16).sample(&c, n, &mut rng).unwrap();
        group.throughput(Throughput::Elements(n as u64));
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &x, |b, y| {
                b.iter(|| receiver::reconstruct(&m, &sched, &c, y, &SeedStream::from_seed(3), exec).unwrap())
            });
        }
    }
    group.finish();
}

fn shaping(cr: &mut Criterion) {
    let sched = VarianceSchedule::linear(100, 1e-4, 2e-3).unwrap();
    let m = model(100);
    let c = Constellation::qam(64).unwrap();
    let mut group = cr.benchmark_group("shape");
    group.sample_size(10);
    let req = ShapingRequest { snr_db: 0.0, n_samples: 8_192, ..Default::default() };
    group.throughput(Throughput::Elements(req.n_samples as u64));
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| shape(&m, &sched, &c, black_box(&req), exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, reconstruct, shaping);
criterion_main!(benches);
