use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use confsel_bench::{base_dataset, matching_instance};
use confsel_core::{
    dr_effect, fit_logistic, full_match, order_covariates, randomization_pvalue, run_pipeline, MatchConfig,
    OrderingConfig, PipelineConfig,
};

fn matching(c: &mut Criterion) {
    let mut group = c.benchmark_group("full_match");
    for n in [80, 200, 500] {
        let (ps, a) = matching_instance(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| full_match(black_box(&ps), black_box(&a), &MatchConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn models(c: &mut Criterion) {
    let data = base_dataset(0);
    let all: Vec<usize> = (0..data.num_covariates()).collect();
    let x = data.treatment_design(&all[..10]).unwrap();
    c.bench_function("irls_logistic_n80_q11", |b| {
        b.iter(|| fit_logistic(black_box(data.treatment_f64()), &x, None).unwrap())
    });
    c.bench_function("dr_effect_n80_10cov", |b| b.iter(|| dr_effect(black_box(&data), &all[..10]).unwrap()));
    c.bench_function("order_covariates_n80_p25", |b| {
        b.iter(|| order_covariates(black_box(&data), &OrderingConfig::default()).unwrap())
    });
}

fn inference(c: &mut Criterion) {
    let data = base_dataset(1);
    let (ps, _) = matching_instance(data.n());
    let m = full_match(&ps, data.treatment(), &MatchConfig::default()).unwrap();
    c.bench_function("randomization_1000_draws", |b| {
        b.iter(|| randomization_pvalue(&m, data.treatment(), black_box(data.outcome()), 1000, 7).unwrap())
    });
    let config = PipelineConfig { draws: 1000, seed: 7, ..Default::default() };
    c.bench_function("pipeline_base_replicate", |b| b.iter(|| run_pipeline(black_box(&data), &config).unwrap()));
}

criterion_group!(benches, matching, models, inference);
criterion_main!(benches);
