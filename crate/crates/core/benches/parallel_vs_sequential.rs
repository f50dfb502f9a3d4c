//! Rayon backend against the plain-loop path on the two replicated
//! workloads: simulation replications and the sensitivity bootstrap.
//!
//! `cargo bench -p proxyfair` compares both within one build;
//! `cargo bench -p proxyfair --no-default-features` times the fallback build.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use proxyfair::fixtures::random_labelled;
use proxyfair::metrics::{MetricKind, MetricSpec};
use proxyfair::parallel::{map_indexed, map_indexed_sequential};
use proxyfair::sensitivity::{run_sensitivity, RangeSpec, SensitivityConfig};
use proxyfair::simulate::{run_replication, SimConfig};
use proxyfair::stats::stream_rng;

fn small_sim() -> SimConfig {
    SimConfig {
        n_population: 10_000,
        n_train: 5_000,
        n_sample: 2_000,
        ..Default::default()
    }
}

fn replications(c: &mut Criterion) {
    let cfg = small_sim();
    let mut g = c.benchmark_group("replications_x8");
    g.sample_size(10);
    g.bench_function("parallel", |b| {
        b.iter(|| map_indexed(8, |r| run_replication(black_box(&cfg), r).unwrap()))
    });
    g.bench_function("sequential", |b| {
        b.iter(|| map_indexed_sequential(8, |r| run_replication(black_box(&cfg), r).unwrap()))
    });
    g.finish();
}

fn bootstrap(c: &mut Criterion) {
    let ds = random_labelled(&mut stream_rng(1, 0), 5_000);
    let spec = MetricSpec::of(MetricKind::Fnr);
    let mut cfg = SensitivityConfig::new(RangeSpec::Relative { level: 0.1 }, 0.5);
    cfg.bootstrap_reps = 500;
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let mut g = c.benchmark_group("bootstrap_b500_n5000");
    g.sample_size(10);
    g.bench_function("default_pool", |b| {
        b.iter(|| run_sensitivity(black_box(&ds), &spec, "1", &cfg).unwrap())
    });
    g.bench_function("one_thread", |b| {
        b.iter(|| single.install(|| run_sensitivity(black_box(&ds), &spec, "1", &cfg).unwrap()))
    });
    g.finish();
}

criterion_group!(benches, replications, bootstrap);
criterion_main!(benches);
