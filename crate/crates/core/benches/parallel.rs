use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mfo_core::parallel::Executor;
use mfo_core::runner::{run_experiment, ExperimentConfig, Inner, Method, RunOptions, SchedulerSpec, TrainerSpec};

fn available() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).max(2)
}

fn toy_round(c: &mut Criterion) {
    let mut cfg = ExperimentConfig::new(SchedulerSpec {
        kind: Method::Morl,
        eta: 3,
        s_min: 1,
        r: 9,
        inner: Inner::Morl,
    });
    cfg.trainer = TrainerSpec::ToySgd { data_seed: 7 };
    cfg.budget_multiplier = 8;
    cfg.repetitions = 1;

    let mut group = c.benchmark_group("toy_sgd_experiment");
    group.sample_size(10);
    for workers in [1, available()] {
        group.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter(|| black_box(run_experiment(&cfg, &RunOptions::workers(w)).unwrap()))
        });
    }
    group.finish();
}

fn surrogate_sweep(c: &mut Criterion) {
    let configs: Vec<ExperimentConfig> = (0..16)
        .map(|seed| {
            let mut cfg = ExperimentConfig::new(SchedulerSpec {
                kind: Method::Morl,
                eta: 3,
                s_min: 2,
                r: 81,
                inner: Inner::Morl,
            });
            cfg.repetitions = 1;
            cfg.base_seed = seed;
            cfg
        })
        .collect();

    let mut group = c.benchmark_group("surrogate_seed_sweep");
    group.sample_size(10);
    for workers in [1, available()] {
        let executor = Executor::new(workers);
        group.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, _| {
            b.iter(|| {
                executor.map(configs.iter().collect(), |cfg| {
                    run_experiment(cfg, &RunOptions::workers(1)).unwrap().mean_best
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, toy_round, surrogate_sweep);
criterion_main!(benches);
