//! Distillation-weight update rules.
//!
//! `uni` and `bi` set weights from a fixed hyperparameter, `lsmd` keeps a
//! fixed per-language vector, and `auto` / `dynamic-md` search around the
//! previous weights with trial trainings scored on validation loss.

mod actions;
mod space;
mod trial;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use actions::{apply_action, logit, sigmoid, step_size, Action, SchedulerSpec, SchedulerVariant};
pub use space::{
    build_full_space, build_subspace, select_per_language, select_uniform, Candidate, SearchSpace, Selection,
    TrialResults, MAX_FULL_SPACE_LANGUAGES,
};
pub use trial::{trial_train, CorpusTrialEvaluator, TrialContext};

use crate::corpus::CorpusError;
use crate::distill::{DistillError, DistillWeights};
use crate::grad::GradError;
use crate::model::ModelError;
use crate::par::Exec;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("weight {0} must lie strictly inside (0, 1) for a logit-space move")]
    ActionDomain(f64),
    #[error("step size {0} must be finite and non-negative")]
    StepSize(f64),
    #[error("scheduler: {0}")]
    Scheduler(String),
    #[error("alpha {0} is outside [0, 1]")]
    Alpha(f64),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("full search space over {languages} languages has 3^{languages} candidates; at most {} languages are supported", MAX_FULL_SPACE_LANGUAGES)]
    SpaceTooLarge { languages: usize },
    #[error("trial results: {0}")]
    TrialResults(String),
    #[error("trial set of language {0} is empty")]
    EmptyTrialSet(usize),
    #[error("non-finite trial loss on language {language}")]
    NonFiniteLoss { language: usize },
    #[error("{0} strategy needs trial evaluators")]
    MissingTrials(&'static str),
    #[error(transparent)]
    Distill(#[from] DistillError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Grad(#[from] GradError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Uni,
    Bi,
    Auto,
    DynamicMd,
    Lsmd,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Uni => "uni",
            StrategyKind::Bi => "bi",
            StrategyKind::Auto => "auto",
            StrategyKind::DynamicMd => "dynamic-md",
            StrategyKind::Lsmd => "lsmd",
        }
    }

    pub fn uses_alpha_hyper(self) -> bool {
        matches!(self, StrategyKind::Uni | StrategyKind::Bi)
    }

    pub fn uses_trials(self) -> bool {
        matches!(self, StrategyKind::Auto | StrategyKind::DynamicMd)
    }
}

fn check_hyper(alpha: f64) -> Result<(), StrategyError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(StrategyError::Alpha(alpha))
    }
}

/// The worse model on language `ℓ` (higher dev loss) learns from the other
/// with weight `alpha`; equal losses give both 0.
pub fn uni_update(losses1: &[f64], losses2: &[f64], alpha: f64) -> Result<(DistillWeights, DistillWeights), StrategyError> {
    check_hyper(alpha)?;
    if losses1.len() != losses2.len() {
        return Err(StrategyError::LengthMismatch {
            expected: losses1.len(),
            got: losses2.len(),
        });
    }
    let a1 = losses1.iter().zip(losses2).map(|(a, b)| if a > b { alpha } else { 0.0 }).collect();
    let a2 = losses1.iter().zip(losses2).map(|(a, b)| if b > a { alpha } else { 0.0 }).collect();
    Ok((DistillWeights::new(a1)?, DistillWeights::new(a2)?))
}

pub fn bi_update(alpha: f64, num_languages: usize) -> Result<(DistillWeights, DistillWeights), StrategyError> {
    check_hyper(alpha)?;
    let w = DistillWeights::filled(num_languages, alpha)?;
    Ok((w.clone(), w))
}

pub fn lsmd_weights(fixed: &[f64]) -> Result<DistillWeights, StrategyError> {
    Ok(DistillWeights::new(fixed.to_vec())?)
}

/// Scores a candidate weight vector: per-language validation losses after a
/// trial training with those weights.
pub trait TrialEvaluator: Sync {
    fn evaluate(&self, candidate: usize, alpha: &[f64]) -> Result<Vec<f64>, StrategyError>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub space: SearchSpace,
    pub results: TrialResults,
    pub selection: Selection,
}

fn score_space(evaluator: &dyn TrialEvaluator, space: &SearchSpace, exec: Exec) -> Result<TrialResults, StrategyError> {
    let jobs: Vec<(usize, &Candidate)> = space.candidates().iter().enumerate().collect();
    let rows = exec
        .map(jobs, |(j, c)| evaluator.evaluate(j, &c.alpha))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    TrialResults::new(rows)
}

/// Sub-space search with a per-language choice of move.
pub fn auto_update_with(evaluator: &dyn TrialEvaluator, prev: &[f64], mu: f64, exec: Exec) -> Result<SearchOutcome, StrategyError> {
    let space = build_subspace(prev, mu)?;
    let results = score_space(evaluator, &space, exec)?;
    let selection = select_per_language(&space, &results)?;
    Ok(SearchOutcome { space, results, selection })
}

/// Exhaustive per-language search over the full Cartesian space.
pub fn full_search_with(evaluator: &dyn TrialEvaluator, prev: &[f64], mu: f64, exec: Exec) -> Result<SearchOutcome, StrategyError> {
    let space = build_full_space(prev, mu)?;
    let results = score_space(evaluator, &space, exec)?;
    let selection = select_per_language(&space, &results)?;
    Ok(SearchOutcome { space, results, selection })
}

/// Trial-trains each sub-space candidate of `base` (teacher `teacher`) and
/// picks a move per language.
pub fn auto_update(
    base: &crate::model::ModelParams,
    teacher: &crate::model::ModelParams,
    prev: &[f64],
    mu: f64,
    ctx: &TrialContext<'_>,
    exec: Exec,
) -> Result<SearchOutcome, StrategyError> {
    let evaluator = CorpusTrialEvaluator { base, teacher, ctx };
    auto_update_with(&evaluator, prev, mu, exec)
}

/// Applies the single move whose candidate row has the lowest mean loss.
pub fn dynamic_md_update(results: &TrialResults, prev: &[f64], mu: f64) -> Result<Selection, StrategyError> {
    let space = build_subspace(prev, mu)?;
    select_uniform(&space, results)
}

/// One model's weight change at an update.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateLog {
    pub k: u64,
    pub model: usize,
    pub mu: f64,
    pub actions: Option<Vec<Action>>,
    pub alpha: Vec<f64>,
}

impl fmt::Display for UpdateLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let actions = match &self.actions {
            Some(a) => a.iter().map(|a| a.name()).collect::<Vec<_>>().join(","),
            None => "-".into(),
        };
        let alpha: Vec<String> = self.alpha.iter().map(|a| format!("{a:.6}")).collect();
        write!(
            f,
            "k={} model={} mu={:.6} actions={} alpha={}",
            self.k,
            self.model,
            self.mu,
            actions,
            alpha.join(",")
        )
    }
}

/// Initial search anchor for the logit-space strategies.
pub const INITIAL_ANCHOR: f64 = 0.1;

/// Inputs available at an update.
pub struct UpdateInputs<'a> {
    pub dev_losses: [&'a [f64]; 2],
    pub mu: f64,
    pub trials: Option<[&'a dyn TrialEvaluator; 2]>,
    pub exec: Exec,
}

/// Weights both models train with, plus the search anchors.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyState {
    kind: StrategyKind,
    alpha_hyper: f64,
    lsmd: Vec<f64>,
    training: [DistillWeights; 2],
    anchors: [Vec<f64>; 2],
    k: u64,
}

impl StrategyState {
    /// Training weights start at 0 for every strategy until the first update.
    pub fn new(kind: StrategyKind, alpha_hyper: f64, lsmd: &[f64], num_languages: usize) -> Result<Self, StrategyError> {
        check_hyper(alpha_hyper)?;
        if kind == StrategyKind::Lsmd {
            if lsmd.len() != num_languages {
                return Err(StrategyError::LengthMismatch {
                    expected: num_languages,
                    got: lsmd.len(),
                });
            }
            lsmd_weights(lsmd)?;
        }
        let zeros = DistillWeights::zeros(num_languages);
        let anchor = vec![INITIAL_ANCHOR; num_languages];
        Ok(StrategyState {
            kind,
            alpha_hyper,
            lsmd: lsmd.to_vec(),
            training: [zeros.clone(), zeros],
            anchors: [anchor.clone(), anchor],
            k: 0,
        })
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn updates(&self) -> u64 {
        self.k
    }

    pub fn weights(&self, model: usize) -> &DistillWeights {
        &self.training[model]
    }

    pub fn anchor(&self, model: usize) -> &[f64] {
        &self.anchors[model]
    }

    fn search(&self, model: usize, trials: &dyn TrialEvaluator, mu: f64, exec: Exec) -> Result<Selection, StrategyError> {
        let prev = &self.anchors[model];
        match self.kind {
            StrategyKind::Auto => Ok(auto_update_with(trials, prev, mu, exec)?.selection),
            _ => {
                let space = build_subspace(prev, mu)?;
                let results = score_space(trials, &space, exec)?;
                select_uniform(&space, &results)
            }
        }
    }

    pub fn update(&mut self, input: UpdateInputs<'_>) -> Result<[UpdateLog; 2], StrategyError> {
        self.k += 1;
        let n = self.training[0].len();
        let (w, actions): ([DistillWeights; 2], [Option<Vec<Action>>; 2]) = match self.kind {
            StrategyKind::Uni => {
                let (a, b) = uni_update(input.dev_losses[0], input.dev_losses[1], self.alpha_hyper)?;
                ([a, b], [None, None])
            }
            StrategyKind::Bi => {
                let (a, b) = bi_update(self.alpha_hyper, n)?;
                ([a, b], [None, None])
            }
            StrategyKind::Lsmd => {
                let w = lsmd_weights(&self.lsmd)?;
                ([w.clone(), w], [None, None])
            }
            StrategyKind::Auto | StrategyKind::DynamicMd => {
                let trials = input.trials.ok_or(StrategyError::MissingTrials(self.kind.name()))?;
                let (s1, s2) = input.exec.join(
                    || self.search(0, trials[0], input.mu, input.exec),
                    || self.search(1, trials[1], input.mu, input.exec),
                );
                let (s1, s2) = (s1?, s2?);
                self.anchors = [s1.alpha.clone(), s2.alpha.clone()];
                (
                    [DistillWeights::new(s1.alpha)?, DistillWeights::new(s2.alpha)?],
                    [Some(s1.actions), Some(s2.actions)],
                )
            }
        };
        self.training = w;
        let [a1, a2] = actions;
        let log = |model: usize, actions| UpdateLog {
            k: self.k,
            model: model + 1,
            mu: input.mu,
            actions,
            alpha: self.training[model].as_slice().to_vec(),
        };
        Ok([log(0, a1), log(1, a2)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uni_rule() {
        let (a1, a2) = uni_update(&[1.0, 3.0], &[2.0, 2.0], 0.4).unwrap();
        assert_eq!(a1.as_slice(), &[0.0, 0.4]);
        assert_eq!(a2.as_slice(), &[0.4, 0.0]);
        let (t1, t2) = uni_update(&[1.5, 2.5], &[1.5, 2.5], 0.4).unwrap();
        assert!(t1.as_slice().iter().chain(t2.as_slice()).all(|&a| a == 0.0));
        let (z1, z2) = uni_update(&[1.0, 3.0], &[2.0, 2.0], 0.0).unwrap();
        assert!(z1.as_slice().iter().chain(z2.as_slice()).all(|&a| a == 0.0));
        assert!(uni_update(&[1.0], &[1.0, 2.0], 0.4).is_err());
    }

    #[test]
    fn bi_and_lsmd() {
        let (a, b) = bi_update(0.4, 3).unwrap();
        assert_eq!(a.as_slice(), &[0.4; 3]);
        assert_eq!(a, b);
        assert_eq!(bi_update(1.0, 2).unwrap().0.as_slice(), &[1.0; 2]);
        assert!(bi_update(1.1, 2).is_err());
        assert_eq!(lsmd_weights(&[0.2, 0.6]).unwrap().as_slice(), &[0.2, 0.6]);
        assert!(lsmd_weights(&[1.2]).is_err());
    }

    struct Const;
    impl TrialEvaluator for Const {
        fn evaluate(&self, _: usize, alpha: &[f64]) -> Result<Vec<f64>, StrategyError> {
            Ok(vec![2.0; alpha.len()])
        }
    }

    /// Loss of language ℓ is `(α[ℓ] − target[ℓ])²`.
    struct Quadratic(Vec<f64>);
    impl TrialEvaluator for Quadratic {
        fn evaluate(&self, _: usize, alpha: &[f64]) -> Result<Vec<f64>, StrategyError> {
            Ok(alpha.iter().zip(&self.0).map(|(a, t)| (a - t).powi(2)).collect())
        }
    }

    #[test]
    fn auto_search_moves_toward_targets() {
        let out = auto_update_with(&Quadratic(vec![0.9, 0.01, 0.1]), &[0.1; 3], 1.0, Exec::Sequential).unwrap();
        assert_eq!(out.selection.actions, vec![Action::Up, Action::Down, Action::Keep]);
        assert_eq!(out.results.num_candidates(), 3);
        let still = auto_update_with(&Quadratic(vec![0.9, 0.01, 0.1]), &[0.3; 3], 0.0, Exec::Sequential).unwrap();
        assert_eq!(still.selection.alpha, vec![0.3; 3]);
        let flat = auto_update_with(&Const, &[0.2, 0.7], 1.0, Exec::Parallel).unwrap();
        assert_eq!(flat.selection.actions, vec![Action::Keep; 2]);
    }

    #[test]
    fn dynamic_md_picks_best_row() {
        let r = TrialResults::new(vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]).unwrap();
        let sel = dynamic_md_update(&r, &[0.1, 0.1], 1.0).unwrap();
        assert_eq!(sel.actions, vec![Action::Up; 2]);
        let eq = TrialResults::new(vec![vec![1.0, 2.0]; 3]).unwrap();
        assert_eq!(dynamic_md_update(&eq, &[0.1, 0.1], 1.0).unwrap().actions, vec![Action::Keep; 2]);
    }

    #[test]
    fn state_starts_at_zero_and_updates() {
        let mut s = StrategyState::new(StrategyKind::Auto, 0.0, &[], 3).unwrap();
        assert_eq!(s.weights(0).as_slice(), &[0.0; 3]);
        assert_eq!(s.anchor(1), &[0.1; 3]);
        let q = Quadratic(vec![0.9, 0.01, 0.1]);
        let logs = s
            .update(UpdateInputs {
                dev_losses: [&[1.0; 3], &[1.0; 3]],
                mu: 1.0,
                trials: Some([&q, &Const]),
                exec: Exec::Sequential,
            })
            .unwrap();
        assert_eq!(logs[0].actions.as_ref().unwrap(), &vec![Action::Up, Action::Down, Action::Keep]);
        assert_eq!(s.weights(1).as_slice(), &[0.1; 3]);
        assert!(logs[0].to_string().starts_with("k=1 model=1 mu=1.000000 actions=up,down,keep alpha=0.231969,0.039270,0.100000"));

        let mut l = StrategyState::new(StrategyKind::Lsmd, 0.0, &[0.2, 0.6], 2).unwrap();
        for _ in 0..3 {
            l.update(UpdateInputs {
                dev_losses: [&[1.0; 2], &[1.0; 2]],
                mu: 0.5,
                trials: None,
                exec: Exec::Sequential,
            })
            .unwrap();
            assert_eq!(l.weights(0).as_slice(), &[0.2, 0.6]);
        }
        assert!(StrategyState::new(StrategyKind::Lsmd, 0.0, &[0.2], 2).is_err());
    }

    proptest! {
        #[test]
        fn uni_never_weights_both(
            l1 in proptest::collection::vec(0f64..5.0, 4),
            l2 in proptest::collection::vec(0f64..5.0, 4),
            a in 0f64..=1.0,
        ) {
            let (w1, w2) = uni_update(&l1, &l2, a).unwrap();
            for (x, y) in w1.as_slice().iter().zip(w2.as_slice()) {
                prop_assert!(*x == 0.0 || *y == 0.0);
            }
        }
    }
}
