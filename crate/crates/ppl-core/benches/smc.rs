//! Particle filter throughput, sequential against the rayon path, on
//! three models with different segment shapes.

use criterion::{criterion_group, criterion_main, Criterion};

use ppl_core::ast::{self, PlacementSpec, TermRef};
use ppl_core::corpus;
use ppl_core::smc::{run_smc, SmcConfig};

fn config(particles: usize, threads: Option<usize>) -> SmcConfig {
    SmcConfig { particles, seed: 1, threads, ..SmcConfig::default() }
}

fn cases() -> Vec<(&'static str, TermRef, usize)> {
    let crbd = corpus::term("crbd").unwrap();
    let paths = ast::after_weight_paths(&crbd, &[1, 2, 3]).unwrap();
    let crbd_placed = ast::insert_resamples(&crbd, &PlacementSpec { paths }).unwrap();
    vec![
        ("seq_gauss", corpus::term("seq_gauss").unwrap(), 2_000),
        ("geometric_resample", corpus::term("geometric_resample").unwrap(), 5_000),
        ("crbd_w123", crbd_placed, 1_000),
    ]
}

fn bench_engine(c: &mut Criterion) {
    for (name, term, particles) in cases() {
        let mut group = c.benchmark_group(name);
        group.sample_size(10);
        group.bench_function("sequential", |b| {
            b.iter(|| run_smc(&term, &config(particles, Some(1))))
        });
        #[cfg(feature = "parallel")]
        group.bench_function("parallel", |b| {
            b.iter(|| run_smc(&term, &config(particles, None)))
        });
        group.finish();
    }
}

criterion_group!(benches, bench_engine);
criterion_main!(benches);
