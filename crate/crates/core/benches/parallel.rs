use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pmd_core::corpus::{generate, CorpusSpec};
use pmd_core::grad::OptimizerSpec;
use pmd_core::model::init_params;
use pmd_core::par::Exec;
use pmd_core::sampling::temperature_distribution;
use pmd_core::strategy::{auto_update_with, CorpusTrialEvaluator, StrategyKind, TrialContext};
use pmd_core::suite::{main_suite, run_suite};
use pmd_core::trainer::{evaluate, TrainConfig};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn corpus_spec() -> CorpusSpec {
    CorpusSpec {
        sizes: vec![2000, 800, 200, 80],
        valid_size: 32,
        ..CorpusSpec::default()
    }
}

fn bench_search(c: &mut Criterion) {
    let config = TrainConfig {
        corpus: corpus_spec(),
        ..TrainConfig::default()
    };
    let corpus = generate(&config.corpus).unwrap();
    let base = init_params(config.dims(), 1).unwrap();
    let teacher = init_params(config.dims(), 2).unwrap();
    let sampling = temperature_distribution(&corpus.train_sizes(), 1.0).unwrap();
    let optimizer = OptimizerSpec::adam(0.003);
    let ctx = TrialContext {
        corpus: &corpus,
        sampling: &sampling,
        optimizer: &optimizer,
        batch_size: 32,
        label_smoothing: 0.0,
        seed: 3,
    };
    let evaluator = CorpusTrialEvaluator {
        base: &base,
        teacher: &teacher,
        ctx: &ctx,
    };
    let prev = vec![0.1; corpus.num_languages()];
    let mut group = c.benchmark_group("auto-search");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| auto_update_with(&evaluator, &prev, 1.0, exec).unwrap())
        });
    }
    group.finish();

    let models: Vec<_> = (0..8).map(|s| init_params(config.dims(), s).unwrap()).collect();
    let mut group = c.benchmark_group("evaluate-models");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| exec.map(models.iter().collect(), |m| evaluate(m, &corpus).unwrap()))
        });
    }
    group.finish();
}

fn bench_suite(c: &mut Criterion) {
    let config = TrainConfig {
        corpus: corpus_spec(),
        strategy: StrategyKind::Auto,
        epochs: 2,
        ..TrainConfig::default()
    };
    let suite = main_suite(&config, &[1, 2]);
    let mut group = c.benchmark_group("main-suite");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run_suite(&suite, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench_search, bench_suite);
criterion_main!(benches);
