use pmd_core::corpus::{generate, CorpusSpec};
use pmd_core::grad::OptimizerSpec;
use pmd_core::model::{ModelDims, ModelParams};
use pmd_core::par::Exec;
use pmd_core::strategy::StrategyKind;
use pmd_core::trainer::{
    evaluate, pareto_points, train_baseline, train_baseline_on, train_pareto_md, train_pareto_md_on, StepObserver,
    TrainConfig, TrainError,
};

fn small_corpus() -> CorpusSpec {
    CorpusSpec {
        sizes: vec![1200, 600, 120, 60],
        valid_size: 32,
        ..CorpusSpec::default()
    }
}

fn small_config(strategy: StrategyKind, epochs: u64) -> TrainConfig {
    TrainConfig {
        corpus: small_corpus(),
        strategy,
        epochs,
        ..TrainConfig::default()
    }
}

#[test]
fn single_language_model_learns_its_cipher() {
    let config = TrainConfig {
        corpus: CorpusSpec {
            num_languages: 1,
            sizes: vec![400],
            ..CorpusSpec::default()
        },
        epochs: 200,
        ..TrainConfig::default()
    };
    let record = train_baseline(&config, 0).unwrap();
    let acc = record.final_metrics(0)[0].accuracy;
    assert!(acc >= 0.99, "accuracy {acc}");
}

#[test]
fn identical_ciphers_transfer_to_rare_languages() {
    let config = TrainConfig {
        corpus: CorpusSpec {
            relatedness: 1.0,
            sizes: vec![1500, 400, 60, 45],
            valid_size: 32,
            ..CorpusSpec::default()
        },
        epochs: 20,
        ..TrainConfig::default()
    };
    let record = train_baseline(&config, 0).unwrap();
    for (l, m) in record.final_metrics(0).iter().enumerate() {
        assert!(m.accuracy >= 0.95, "language {l}: accuracy {}", m.accuracy);
    }
}

#[test]
fn temperature_one_baseline_fits_frequent_languages_better() {
    let record = train_baseline(&small_config(StrategyKind::Bi, 8), 0).unwrap();
    let spec = &record.corpus;
    let hrl = record.mean_dev_ce(0, &spec.high_resource());
    let lrl = record.mean_dev_ce(0, &spec.low_resource());
    assert!(hrl < lrl, "HRL {hrl} vs LRL {lrl}");
}

#[test]
fn mutual_runs_are_deterministic() {
    let config = small_config(StrategyKind::Auto, 3);
    let a = train_pareto_md(&config, Exec::Parallel).unwrap();
    let b = train_pareto_md(&config, Exec::Sequential).unwrap();
    assert_eq!(a, b);
}

#[test]
fn language_draws_cover_every_step() {
    let config = small_config(StrategyKind::Uni, 3);
    let record = train_pareto_md(&config, Exec::Parallel).unwrap();
    for draws in &record.language_draws {
        assert_eq!(draws.iter().sum::<u64>(), config.t_max());
    }
    let steps: Vec<u64> = record.snapshots.iter().map(|s| s.step).collect();
    let t = config.interval();
    assert_eq!(steps, vec![0, t, 2 * t, 3 * t]);
    assert_eq!(record.updates.len(), 2 * 2);
}

#[derive(Default)]
struct Recorder {
    steps: Vec<(u64, usize, ModelParams, ModelParams, f64)>,
}

impl StepObserver for Recorder {
    fn on_step(&mut self, step: u64, model: usize, _: usize, student: &ModelParams, teacher: Option<&ModelParams>, alpha: f64) {
        self.steps.push((step, model, student.clone(), teacher.expect("mutual run").clone(), alpha));
    }
}

#[test]
fn teacher_is_the_peer_at_the_start_of_the_step() {
    let config = small_config(StrategyKind::Bi, 2);
    let corpus = generate(&config.corpus).unwrap();
    let mut rec = Recorder::default();
    train_pareto_md_on(&config, &corpus, Exec::Sequential, &mut rec).unwrap();
    assert_eq!(rec.steps.len() as u64, 2 * config.t_max());
    for pair in rec.steps.chunks(2) {
        let (s0, m0, student0, teacher0, a0) = &pair[0];
        let (s1, m1, student1, teacher1, a1) = &pair[1];
        assert_eq!(s0, s1);
        assert_eq!((*m0, *m1), (0, 1));
        assert_eq!(teacher0, student1);
        assert_eq!(teacher1, student0);
        if *s0 <= config.interval() {
            assert_eq!((*a0, *a1), (0.0, 0.0));
        } else {
            assert_eq!((*a0, *a1), (config.alpha, config.alpha));
        }
    }
}

#[test]
fn pareto_points_list_every_model() {
    let config = small_config(StrategyKind::Bi, 1);
    let corpus = generate(&config.corpus).unwrap();
    let mutual = train_pareto_md_on(&config, &corpus, Exec::Parallel, &mut pmd_core::trainer::NoObserver).unwrap();
    let base = train_baseline_on(&config, 1, &corpus).unwrap();
    let points = pareto_points(&[mutual.clone(), base]).unwrap();
    assert_eq!(points.len(), 3);
    assert_eq!(points.iter().map(|p| p.model).collect::<Vec<_>>(), vec![1, 2, 1]);

    let mut other = mutual;
    other.corpus.seed += 1;
    let first = train_baseline_on(&config, 0, &corpus).unwrap();
    assert!(matches!(pareto_points(&[first, other]), Err(TrainError::MismatchedCorpus)));
}

#[test]
fn zero_model_scores_uniform_cross_entropy() {
    let corpus = generate(&small_corpus()).unwrap();
    let dims = ModelDims {
        vocab: small_corpus().vocab_size(),
        num_languages: 4,
        embed_dim: 4,
        hidden_dim: 4,
    };
    let metrics = evaluate(&ModelParams::zeros(dims).unwrap(), &corpus).unwrap();
    for m in metrics {
        assert!((m.dev_ce - (dims.vocab as f64).ln()).abs() < 1e-12);
    }
}

#[test]
fn invalid_settings_are_rejected_before_training() {
    let mut config = small_config(StrategyKind::Bi, 1);
    config.tau1 = 0.5;
    let err = train_pareto_md(&config, Exec::Sequential).unwrap_err();
    assert!(err.is_validation());
    assert!(err.to_string().contains("τ ≥ 1"), "{err}");

    let mut config = small_config(StrategyKind::Bi, 1);
    config.optimizer = OptimizerSpec::sgd(-1.0);
    assert!(train_baseline(&config, 0).unwrap_err().is_validation());
}

#[test]
fn diverging_training_aborts_with_location() {
    let mut config = small_config(StrategyKind::Bi, 1);
    config.optimizer = OptimizerSpec::sgd(1e200);
    match train_baseline(&config, 0) {
        Err(TrainError::NonFiniteLoss { .. }) => {}
        other => panic!("expected a non-finite loss abort, got {other:?}"),
    }
}
