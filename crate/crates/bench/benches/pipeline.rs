use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use jic_bench::{gaussian_matrix, gaussian_sample};
use jic_core::decomposition::{jic_decompose, DecomposeOptions};
use jic_core::kmeans::kmeans;
use jic_core::matrix::{truncated_svd, Preprocess};
use jic_core::selection::{anderson_darling, select_cluster_numbers, SelectOptions};
use jic_core::simulation::{generate, precision, SimConfig, SimSetting};

fn bench_truncated_svd(c: &mut Criterion) {
    let x = gaussian_matrix(600, 150, 1);
    c.bench_function("truncated_svd_600x150_r4", |b| {
        b.iter(|| truncated_svd(black_box(&x), 4).unwrap())
    });
}

fn bench_kmeans(c: &mut Criterion) {
    let points = gaussian_matrix(150, 4, 2);
    c.bench_function("kmeans_150x4_k5_restarts30", |b| {
        b.iter(|| kmeans(black_box(&points), 5, 30, 200, 7).unwrap())
    });
}

fn bench_anderson_darling(c: &mut Criterion) {
    let sample = gaussian_sample(1000, 3);
    c.bench_function("anderson_darling_n1000", |b| {
        b.iter(|| anderson_darling(black_box(&sample)).unwrap())
    });
}

fn setting_ii_blocks() -> jic_core::matrix::BlockSet {
    let cfg = SimConfig {
        setting: SimSetting::JointAndIndividual,
        seed: 11,
        replicates: 1,
        ..SimConfig::default()
    };
    let (raw, _) = generate(&cfg, 0).unwrap();
    Preprocess::default().apply(&raw).unwrap()
}

fn bench_decompose(c: &mut Criterion) {
    let bs = setting_ii_blocks();
    let cfg = SimConfig {
        setting: SimSetting::JointAndIndividual,
        ..SimConfig::default()
    };
    let ranks = cfg.true_ranks();
    let mut group = c.benchmark_group("decompose");
    group.sample_size(10);
    group.bench_function("jic_decompose_3x200x150", |b| {
        b.iter_batched(
            || bs.clone(),
            |bs| jic_decompose(black_box(&bs), &ranks, &DecomposeOptions::default()).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn bench_selection(c: &mut Criterion) {
    let bs = setting_ii_blocks();
    let mut group = c.benchmark_group("selection");
    group.sample_size(10);
    group.bench_function("select_cluster_numbers_3x200x150", |b| {
        b.iter(|| select_cluster_numbers(black_box(&bs), &SelectOptions::default()).unwrap())
    });
    group.finish();
}

fn bench_precision(c: &mut Criterion) {
    let a: Vec<usize> = (0..1000).map(|i| i % 7 + 1).collect();
    let b: Vec<usize> = (0..1000).map(|i| (i + 3) % 7 + 1).collect();
    c.bench_function("precision_n1000_k7", |bch| {
        bch.iter(|| precision(black_box(&a), black_box(&b)).unwrap())
    });
}

criterion_group!(
    benches,
    bench_truncated_svd,
    bench_kmeans,
    bench_anderson_darling,
    bench_decompose,
    bench_selection,
    bench_precision
);
criterion_main!(benches);
