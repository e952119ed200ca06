use std::hint::black_box;

use chaoslab_core::chaos::{solve_particle_fbsde, LqParticleBundle, PicardSettings};
use chaoslab_core::experiments::{nash_gap_study, StudyConfig, StudyKind};
use chaoslab_core::lq::{solve_mkv_lq, solve_nplayer_lq_dense, solve_nplayer_lq_symmetric, LqSpec};
use chaoslab_core::metrics::wasserstein2_1d;
use chaoslab_core::rng::{normals, StreamKey};
use chaoslab_core::TimeGrid;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn riccati(c: &mut Criterion) {
    let spec = LqSpec::default();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    c.bench_function("mkv_lq", |b| b.iter(|| solve_mkv_lq(black_box(&spec), &grid).unwrap()));
    let mut g = c.benchmark_group("nplayer");
    for n in [4, 8] {
        g.bench_with_input(BenchmarkId::new("dense", n), &n, |b, &n| b.iter(|| solve_nplayer_lq_dense(&spec, n, &grid).unwrap()));
    }
    g.bench_function("symmetric_512", |b| b.iter(|| solve_nplayer_lq_symmetric(&spec, 512, &grid).unwrap()));
    g.finish();
}

fn wasserstein(c: &mut Criterion) {
    let a = normals(StreamKey::new(1, 0, 0), 10_000);
    let b = normals(StreamKey::new(1, 0, 1), 10_000);
    c.bench_function("wasserstein2_1d_1e4", |bench| bench.iter(|| wasserstein2_1d(black_box(&a), black_box(&b)).unwrap()));
}

fn particles(c: &mut Criterion) {
    let spec = LqSpec::default().with_horizon(0.5);
    let grid = TimeGrid::new(0.5, 20).unwrap();
    let bundle = LqParticleBundle::game(&spec);
    let settings = PicardSettings::default();
    let mut g = c.benchmark_group("picard");
    g.sample_size(10);
    g.bench_function("lq_1000_particles", |b| b.iter(|| solve_particle_fbsde(&bundle, 1000, &grid, &settings, 7).unwrap()));
    g.finish();
}

fn studies(c: &mut Criterion) {
    let mut cfg = StudyConfig::for_study(StudyKind::NashGap);
    cfg.n_list = vec![8, 16, 32, 64];
    cfg.replications = 50;
    let mut g = c.benchmark_group("study");
    g.sample_size(10);
    g.bench_function("nash_gap_small", |b| b.iter(|| nash_gap_study(&cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, riccati, wasserstein, particles, studies);
criterion_main!(benches);
