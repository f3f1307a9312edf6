use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use layoutforge_bench::{dataset, layouts};
use layoutforge_core::density::{
    fit_density, fit_gmm, rasterize_density, DensityConfig, DensityKind,
};
use layoutforge_core::diffusion::{
    forward_marginal_sample, Denoiser, EmpiricalBayesDenoiser, NoiseSchedule, VarianceRule,
};
use layoutforge_core::fid::{fit_stats, frechet_distance, pyramid_features};
use layoutforge_core::layout::CellTypeId;

fn density(c: &mut Criterion) {
    let ds = dataset(4, 1);
    let points = ds.patches[0].normalized_points(CellTypeId(0));
    c.bench_function("gmm_em_m3", |b| {
        b.iter(|| fit_gmm(black_box(&points), 3, 7).unwrap())
    });
    let mut group = c.benchmark_group("rasterize_density_64");
    for kind in [DensityKind::Kde, DensityKind::Gmm, DensityKind::Gmcm] {
        let cfg = DensityConfig {
            kind,
            ..DensityConfig::default()
        };
        let model = fit_density(&points, CellTypeId(0), &cfg, 3).unwrap();
        group.bench_function(BenchmarkId::from_parameter(kind), |b| {
            b.iter(|| rasterize_density(black_box(&model), 64, 64))
        });
    }
    group.finish();
}

fn diffusion(c: &mut Criterion) {
    let ds = dataset(16, 2);
    let set = layouts(&ds, 64);
    let schedule = NoiseSchedule::scaled_linear(200, VarianceRule::BetaTilde).unwrap();
    let denoiser = EmpiricalBayesDenoiser::new(schedule.clone(), vec![set.clone()]).unwrap();
    let x_t = forward_marginal_sample(&schedule, &set[0], 100, 5).unwrap();
    c.bench_function("empirical_bayes_eps_16x3x64x64", |b| {
        b.iter(|| denoiser.predict_noise(black_box(&x_t), 100, 0).unwrap())
    });
}

fn fid(c: &mut Criterion) {
    let ds = dataset(200, 3);
    let set = layouts(&ds, 64);
    c.bench_function("pyramid_features_l4", |b| {
        b.iter(|| pyramid_features(black_box(&set[0]), 4).unwrap())
    });
    let feats: Vec<Vec<f64>> = set
        .iter()
        .map(|x| pyramid_features(x, 4).unwrap())
        .collect();
    let (a, b_) = feats.split_at(100);
    let sa = fit_stats(a).unwrap();
    let sb = fit_stats(b_).unwrap();
    c.bench_function("frechet_distance_d255", |b| {
        b.iter(|| frechet_distance(black_box(&sa), black_box(&sb)).unwrap())
    });
}

criterion_group!(benches, density, diffusion, fid);
criterion_main!(benches);
