use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use rdmulti_bench::{bivariate_sample, cumulative_sample, multicutoff_sample};
use rdmulti_core::{
    boundary_point_estimates, build_plot_data, cumulative_estimates, rd_estimate, rdmc, CutoffOptions,
    PerCutoffOptions, PlotFlags, PlotOptions, ScoreRange,
};

fn single_cutoff(c: &mut Criterion) {
    let mut group = c.benchmark_group("rd_estimate");
    for n in [1_000usize, 10_000] {
        let g = multicutoff_sample(n);
        let (ys, xs) = (g.dataset.ys(), g.dataset.x1s());
        let opts = CutoffOptions::default();
        group.bench_with_input(BenchmarkId::new("mserd", n), &n, |b, _| {
            b.iter(|| rd_estimate(&ys, &xs, 50.0, &opts, None).unwrap())
        });
        let manual = CutoffOptions {
            h_left: Some(10.0),
            h_right: Some(10.0),
            ..CutoffOptions::default()
        };
        group.bench_with_input(BenchmarkId::new("manual", n), &n, |b, _| {
            b.iter(|| rd_estimate(&ys, &xs, 50.0, &manual, None).unwrap())
        });
    }
    group.finish();
}

fn multi_cutoff(c: &mut Criterion) {
    let g = multicutoff_sample(10_000);
    let opts = PerCutoffOptions::defaults(2);
    let pooled = CutoffOptions::default();
    c.bench_function("rdmc/10000", |b| b.iter(|| rdmc(&g.dataset, &opts, &pooled, None).unwrap()));
    let plot = vec![PlotOptions::default(); 2];
    let flags = PlotFlags::default();
    c.bench_function("rdmcplot/10000", |b| {
        b.iter(|| build_plot_data(&g.dataset, &plot, &flags).unwrap())
    });
}

fn multi_score(c: &mut Criterion) {
    let g = cumulative_sample(10_000);
    let (ys, xs) = (g.dataset.ys(), g.dataset.x1s());
    let opts = PerCutoffOptions::defaults(2);
    let ranges = [ScoreRange { lo: 0.0, hi: 49.5 }, ScoreRange { lo: 33.5, hi: 100.0 }];
    c.bench_function("cumulative/10000", |b| {
        b.iter(|| cumulative_estimates(&ys, &xs, &[33.0, 66.0], Some(&ranges), &opts, None).unwrap())
    });
    let g = bivariate_sample(10_000);
    let points = [(25.0, 50.0), (50.0, 50.0), (50.0, 25.0)];
    let opts = PerCutoffOptions::defaults(3);
    c.bench_function("bivariate/10000", |b| {
        b.iter(|| boundary_point_estimates(&g.dataset, &points, &opts).unwrap())
    });
}

criterion_group!(benches, single_cutoff, multi_cutoff, multi_score);
criterion_main!(benches);
