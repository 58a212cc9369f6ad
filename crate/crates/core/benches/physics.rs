//! Sequential versus rayon inner loops. Build with default features to get
//! both sides; with `--no-default-features` only the sequential rows run.

use concierge_core::physics::boxes::overlapping_pairs_seq;
use concierge_core::physics::nbody::accelerations_seq;
use concierge_core::testkit::collisions::crowd;
use concierge_core::testkit::gravity::random_cluster;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn gravity(c: &mut Criterion) {
    let mut group = c.benchmark_group("nbody_accelerations");
    for n in [64usize, 256, 1024] {
        let state = random_cluster(n, 1.0, 0.01, n as u64);
        group.bench_with_input(BenchmarkId::new("seq", n), &state, |b, s| {
            b.iter(|| accelerations_seq(black_box(s)).unwrap())
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", n), &state, |b, s| {
            b.iter(|| concierge_core::physics::nbody::accelerations_par(black_box(s)).unwrap())
        });
    }
    group.finish();
}

fn broadphase(c: &mut Criterion) {
    let mut group = c.benchmark_group("box_broadphase");
    for n in [128usize, 512, 2048] {
        let world = crowd(n, n as u64);
        group.bench_with_input(BenchmarkId::new("seq", n), &world, |b, w| {
            b.iter(|| overlapping_pairs_seq(black_box(w.boxes())))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", n), &world, |b, w| {
            b.iter(|| concierge_core::physics::boxes::overlapping_pairs_par(black_box(w.boxes())))
        });
    }
    group.finish();
}

criterion_group!(benches, gravity, broadphase);
criterion_main!(benches);
