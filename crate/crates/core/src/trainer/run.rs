use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::eval::{evaluate, LanguageMetrics};
use super::record::{ModelSnapshot, RunRecord, Snapshot, WeightUpdate};
use super::TrainError;
use crate::corpus::{generate, BatchSampler, MultilingualCorpus, Split};
use crate::distill::{is_teacher_param, pmd_loss_with_probs};
use crate::grad::{Gradients, OptimizerState};
use crate::model::{init_params, Batch, ModelParams};
use crate::par::Exec;
use crate::sampling::{temperature_distribution, SamplingDistribution};
use crate::seed;
use crate::strategy::{step_size, CorpusTrialEvaluator, StrategyState, TrialContext, TrialEvaluator, UpdateInputs};

const TAG_INIT: u64 = 1;
const TAG_LANGUAGE: u64 = 2;
const TAG_BATCH: u64 = 3;
const TAG_TRIAL: u64 = 4;

/// Sees every training step before its updates are applied.
pub trait StepObserver {
    fn on_step(&mut self, step: u64, model: usize, language: usize, student: &ModelParams, teacher: Option<&ModelParams>, alpha: f64);
}

/// Observer that ignores every step.
pub struct NoObserver;

impl StepObserver for NoObserver {
    fn on_step(&mut self, _: u64, _: usize, _: usize, _: &ModelParams, _: Option<&ModelParams>, _: f64) {}
}

/// One model with its own data streams. `slot` fixes the streams, so a
/// baseline in slot `s` replays model `s` of a mutual run.
struct Lane {
    params: ModelParams,
    opt: OptimizerState,
    dist: SamplingDistribution,
    lang_rng: ChaCha8Rng,
    sampler: BatchSampler,
    draws: Vec<u64>,
}

impl Lane {
    fn new(config: &TrainConfig, corpus: &MultilingualCorpus, slot: usize) -> Result<Self, TrainError> {
        let s = slot as u64;
        let l = corpus.num_languages();
        Ok(Lane {
            params: init_params(config.dims(), seed::derive(config.seed, &[TAG_INIT, s]))?,
            opt: config.optimizer.init_state(),
            dist: temperature_distribution(&corpus.train_sizes(), config.tau(slot))?,
            lang_rng: ChaCha8Rng::seed_from_u64(seed::derive(config.seed, &[TAG_LANGUAGE, s])),
            sampler: BatchSampler::new(l, Split::Train, seed::derive(config.seed, &[TAG_BATCH, s])),
            draws: vec![0; l],
        })
    }

    fn draw(&mut self, corpus: &MultilingualCorpus, batch_size: usize) -> Result<Batch, TrainError> {
        let l = self.dist.sample(&mut self.lang_rng);
        self.draws[l] += 1;
        Ok(self.sampler.draw(corpus, l, batch_size)?)
    }
}

fn step_gradients(
    step: u64,
    model: usize,
    batch: &Batch,
    student: &ModelParams,
    teacher: Option<&ModelParams>,
    alpha: f64,
    smoothing: f64,
) -> Result<Gradients, TrainError> {
    let probs = match teacher {
        Some(t) if alpha > 0.0 => Some(t.predict_distribution(batch)?),
        _ => None,
    };
    let tape = pmd_loss_with_probs(batch, student, probs, alpha, smoothing)?;
    if !tape.value.is_finite() {
        return Err(TrainError::NonFiniteLoss {
            step,
            model: model + 1,
            language: batch.language,
        });
    }
    let grads = tape.gradients()?;
    if grads.iter().any(|(id, _)| is_teacher_param(id)) {
        return Err(TrainError::TeacherLeak { step, model: model + 1 });
    }
    Ok(grads)
}

fn evaluate_lanes(lanes: &[Lane], corpus: &MultilingualCorpus, exec: Exec) -> Result<Vec<Vec<LanguageMetrics>>, TrainError> {
    let refs: Vec<&ModelParams> = lanes.iter().map(|l| &l.params).collect();
    exec.map(refs, |p| evaluate(p, corpus))
        .into_iter()
        .map(|r| r.map_err(TrainError::from))
        .collect()
}

pub fn train_pareto_md(config: &TrainConfig, exec: Exec) -> Result<RunRecord, TrainError> {
    config.validate()?;
    let corpus = generate(&config.corpus)?;
    train_pareto_md_on(config, &corpus, exec, &mut NoObserver)
}

/// Two models trained together; each step both compute their losses
/// against the other's parameters from the start of that step, then update
/// in order model-1, model-2.
pub fn train_pareto_md_on(
    config: &TrainConfig,
    corpus: &MultilingualCorpus,
    exec: Exec,
    observer: &mut dyn StepObserver,
) -> Result<RunRecord, TrainError> {
    config.validate()?;
    check_corpus(config, corpus)?;
    let mut lanes = vec![Lane::new(config, corpus, 0)?, Lane::new(config, corpus, 1)?];
    let mut strategy = StrategyState::new(config.strategy, config.alpha, &config.lsmd_alpha, corpus.num_languages())?;
    let (t_update, t_max) = (config.interval(), config.t_max());
    let sched = config.scheduler_spec();
    let mut snapshots = Vec::new();
    let mut updates = Vec::new();

    let snapshot = |step: u64, mu: f64, metrics: Vec<Vec<LanguageMetrics>>, strategy: &StrategyState| Snapshot {
        step,
        mu,
        models: metrics
            .into_iter()
            .enumerate()
            .map(|(i, metrics)| ModelSnapshot {
                metrics,
                alpha: strategy.weights(i).as_slice().to_vec(),
            })
            .collect(),
    };
    snapshots.push(snapshot(0, step_size(0, sched)?, evaluate_lanes(&lanes, corpus, exec)?, &strategy));

    for t in 1..=t_max {
        let b0 = lanes[0].draw(corpus, config.batch_size)?;
        let b1 = lanes[1].draw(corpus, config.batch_size)?;
        let a0 = strategy.weights(0).get(b0.language);
        let a1 = strategy.weights(1).get(b1.language);
        let (p0, p1) = (&lanes[0].params, &lanes[1].params);
        let ls = config.label_smoothing;
        let (g0, g1) = exec.join(
            || step_gradients(t, 0, &b0, p0, Some(p1), a0, ls),
            || step_gradients(t, 1, &b1, p1, Some(p0), a1, ls),
        );
        let (g0, g1) = (g0?, g1?);
        observer.on_step(t, 0, b0.language, p0, Some(p1), a0);
        observer.on_step(t, 1, b1.language, p1, Some(p0), a1);
        {
            let lane = &mut lanes[0];
            lane.opt.apply(&mut lane.params, &g0)?;
        }
        {
            let lane = &mut lanes[1];
            lane.opt.apply(&mut lane.params, &g1)?;
        }

        if t % t_update == 0 || t == t_max {
            let metrics = evaluate_lanes(&lanes, corpus, exec)?;
            let mu = step_size(t, sched)?;
            if t % t_update == 0 && t < t_max {
                let k = strategy.updates() + 1;
                let dev: Vec<Vec<f64>> = metrics.iter().map(|m| m.iter().map(|x| x.dev_ce).collect()).collect();
                let ctxs: Vec<TrialContext<'_>> = (0..2)
                    .map(|i| TrialContext {
                        corpus,
                        sampling: &lanes[i].dist,
                        optimizer: &config.optimizer,
                        batch_size: config.batch_size,
                        label_smoothing: ls,
                        seed: seed::derive(config.seed, &[TAG_TRIAL, k, i as u64]),
                    })
                    .collect();
                let e0 = CorpusTrialEvaluator {
                    base: &lanes[0].params,
                    teacher: &lanes[1].params,
                    ctx: &ctxs[0],
                };
                let e1 = CorpusTrialEvaluator {
                    base: &lanes[1].params,
                    teacher: &lanes[0].params,
                    ctx: &ctxs[1],
                };
                let trials: Option<[&dyn TrialEvaluator; 2]> = config.strategy.uses_trials().then_some([&e0, &e1]);
                let logs = strategy.update(UpdateInputs {
                    dev_losses: [&dev[0], &dev[1]],
                    mu,
                    trials,
                    exec,
                })?;
                for log in logs {
                    log::info!("{log}");
                    updates.push(WeightUpdate { step: t, log });
                }
            }
            snapshots.push(snapshot(t, mu, metrics, &strategy));
        }
    }

    Ok(RunRecord {
        name: config.strategy.name().to_string(),
        seed: config.seed,
        corpus: config.corpus.clone(),
        snapshots,
        updates,
        language_draws: lanes.iter().map(|l| l.draws.clone()).collect(),
        final_params: lanes.into_iter().map(|l| l.params).collect(),
    })
}

fn check_corpus(config: &TrainConfig, corpus: &MultilingualCorpus) -> Result<(), TrainError> {
    if corpus.spec() != &config.corpus {
        return Err(TrainError::MismatchedCorpus);
    }
    Ok(())
}

pub fn train_baseline(config: &TrainConfig, slot: usize) -> Result<RunRecord, TrainError> {
    config.validate()?;
    let corpus = generate(&config.corpus)?;
    train_baseline_on(config, slot, &corpus)
}

/// A single model trained with cross-entropy only, using the temperature
/// and data streams of `slot` (0 → `tau1`, 1 → `tau2`).
pub fn train_baseline_on(config: &TrainConfig, slot: usize, corpus: &MultilingualCorpus) -> Result<RunRecord, TrainError> {
    config.validate()?;
    check_corpus(config, corpus)?;
    if slot > 1 {
        return Err(TrainError::Invalid {
            field: "slot",
            msg: format!("baseline slot must be 0 or 1, got {slot}"),
        });
    }
    let mut lane = Lane::new(config, corpus, slot)?;
    let (t_update, t_max) = (config.interval(), config.t_max());
    let zeros = vec![0.0; corpus.num_languages()];
    let snap = |step: u64, metrics: Vec<LanguageMetrics>| Snapshot {
        step,
        mu: 0.0,
        models: vec![ModelSnapshot {
            metrics,
            alpha: zeros.clone(),
        }],
    };
    let mut snapshots = vec![snap(0, evaluate(&lane.params, corpus)?)];
    for t in 1..=t_max {
        let b = lane.draw(corpus, config.batch_size)?;
        let g = step_gradients(t, slot, &b, &lane.params, None, 0.0, config.label_smoothing)?;
        lane.opt.apply(&mut lane.params, &g)?;
        if t % t_update == 0 || t == t_max {
            snapshots.push(snap(t, evaluate(&lane.params, corpus)?));
        }
    }
    Ok(RunRecord {
        name: format!("baseline-tau{}", config.tau(slot)),
        seed: config.seed,
        corpus: config.corpus.clone(),
        snapshots,
        updates: Vec::new(),
        language_draws: vec![lane.draws],
        final_params: vec![lane.params],
    })
}
