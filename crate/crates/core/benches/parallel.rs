use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use hiwave::denoise::{AnalyticBackend, Condition, GaussianMixture};
use hiwave::exec::Execution;
use hiwave::field::Shape;
use hiwave::pipeline::{generate_base, run_stage, BaseConfig, RunOptions, StageConfig};

fn stage(c: &mut Criterion) {
    let backend = AnalyticBackend::new(GaussianMixture::synthetic(Shape::new(3, 32, 32), 4, 0.1, 0).unwrap());
    let cond = Condition::component(1);
    let base = generate_base(&backend, &cond, 1, &BaseConfig::default()).unwrap();
    let mut cfg = StageConfig::new((96, 96), 32, 3);
    cfg.schedule.steps = 10;
    cfg.batch_size = 8;

    let mut group = c.benchmark_group("stage_96px_25_patches");
    group.sample_size(10);
    for execution in [Execution::Sequential, Execution::Parallel] {
        let opts = RunOptions {
            execution,
            ..RunOptions::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{execution:?}")), &opts, |b, opts| {
            b.iter(|| run_stage(&base, &cfg, &backend, &cond, 1, 0, opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, stage);
criterion_main!(benches);
