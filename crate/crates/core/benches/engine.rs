use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hft_kinetics::microsim::{run_simulation, Probes, SimRng, Variant};
use hft_kinetics::records::NullSink;
use hft_kinetics::{par, ExperimentConfig, RngStream};

const REPLICAS: usize = 8;

fn replica(cfg: &ExperimentConfig, r: usize) -> u64 {
    let seed = RngStream::replica_seed(cfg.seed, r as u64);
    let cfg = cfg.clone().with_seed(seed);
    let mut rng = SimRng::new(seed, cfg.n_traders);
    run_simulation(&cfg, Variant::Continuous, &mut rng, &Probes::default(), &mut NullSink)
        .unwrap()
        .steps
}

fn replicas(c: &mut Criterion) {
    let mut g = c.benchmark_group("replicas");
    g.sample_size(10);
    for n in [25usize, 100] {
        let cfg = ExperimentConfig::new(n, 15.0, 4.5, 3.15, 1.0, 500, 7)
            .unwrap()
            .with_transactions(500, 0);
        g.bench_with_input(BenchmarkId::new("parallel", n), &cfg, |b, cfg| {
            b.iter(|| par::map_indices(REPLICAS, |r| replica(cfg, r)))
        });
        g.bench_with_input(BenchmarkId::new("sequential", n), &cfg, |b, cfg| {
            b.iter(|| par::map_indices_sequential(REPLICAS, |r| replica(cfg, r)))
        });
    }
    g.finish();
}

criterion_group!(benches, replicas);
criterion_main!(benches);
