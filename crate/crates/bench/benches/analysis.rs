use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rfscope_core::rf::path_enumeration_oracle;
use rfscope_core::zoo::{build, Family, ZooSpec};
use rfscope_core::{classify, cost_report, propagate_dag, truncate_at_border, ArchGraph};

fn models() -> Vec<(Family, ArchGraph)> {
    [
        Family::Vgg16,
        Family::ResNet34,
        Family::MpNet18,
        Family::MpNet36,
    ]
    .into_iter()
    .map(|f| (f, build(&ZooSpec::cifar(f)).unwrap()))
    .collect()
}

fn analysis(c: &mut Criterion) {
    let models = models();
    let mut group = c.benchmark_group("propagate_dag");
    for (family, graph) in &models {
        group.bench_with_input(BenchmarkId::from_parameter(family), graph, |b, g| {
            b.iter(|| propagate_dag(black_box(g)).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("classify");
    for (family, graph) in &models {
        group.bench_with_input(BenchmarkId::from_parameter(family), graph, |b, g| {
            b.iter(|| classify(black_box(g)).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("cost_report");
    for (family, graph) in &models {
        group.bench_with_input(BenchmarkId::from_parameter(family), graph, |b, g| {
            b.iter(|| cost_report(black_box(g)).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("truncate_at_border");
    for (family, graph) in &models {
        group.bench_with_input(BenchmarkId::from_parameter(family), graph, |b, g| {
            b.iter(|| truncate_at_border(black_box(g), 10).unwrap())
        });
    }
    group.finish();
}

/// Frontier propagation against explicit path enumeration at the sink of a
/// branchy model.
fn dp_vs_oracle(c: &mut Criterion) {
    let graph = build(&ZooSpec::cifar(Family::MpNet18)).unwrap();
    let mut group = c.benchmark_group("mpnet18_sink");
    group.bench_function("frontier", |b| {
        b.iter(|| propagate_dag(black_box(&graph)).unwrap())
    });
    group.bench_function("path_enumeration", |b| {
        b.iter(|| path_enumeration_oracle(black_box(&graph), "softmax").unwrap())
    });
    group.finish();
}

criterion_group!(benches, analysis, dp_vs_oracle);
criterion_main!(benches);
