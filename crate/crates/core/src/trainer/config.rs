use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::corpus::CorpusSpec;
use crate::grad::OptimizerSpec;
use crate::model::ModelDims;
use crate::strategy::{SchedulerSpec, SchedulerVariant, StrategyKind};

/// One training run: corpus, model shape, sampling temperatures, strategy
/// and optimization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub corpus: CorpusSpec,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub tau1: f64,
    pub tau2: f64,
    pub strategy: StrategyKind,
    /// Weight used by `uni` and `bi`.
    pub alpha: f64,
    /// Per-language weights used by `lsmd`.
    pub lsmd_alpha: Vec<f64>,
    pub scheduler: SchedulerVariant,
    /// Steps between strategy updates; one epoch when absent.
    pub update_interval: Option<u64>,
    /// Training length in update intervals, unless `max_steps` is set.
    pub epochs: u64,
    pub max_steps: Option<u64>,
    pub batch_size: usize,
    pub optimizer: OptimizerSpec,
    pub seed: u64,
    pub label_smoothing: f64,
    /// Reserved; only two models are supported.
    pub num_models: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            corpus: CorpusSpec::default(),
            embed_dim: 16,
            hidden_dim: 32,
            tau1: 1.0,
            tau2: 5.0,
            strategy: StrategyKind::Auto,
            alpha: 0.4,
            lsmd_alpha: Vec::new(),
            scheduler: SchedulerVariant::Default,
            update_interval: None,
            epochs: 30,
            max_steps: None,
            batch_size: 32,
            optimizer: OptimizerSpec::adam(0.003),
            seed: 1,
            label_smoothing: 0.0,
            num_models: 2,
        }
    }
}

fn invalid(field: &'static str, msg: String) -> TrainError {
    TrainError::Invalid { field, msg }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.corpus
            .validate()
            .map_err(|e| invalid("corpus", e.to_string()))?;
        for (field, tau) in [("tau1", self.tau1), ("tau2", self.tau2)] {
            if !(tau >= 1.0 && tau.is_finite()) {
                return Err(invalid(field, format!("{field} = {tau} violates the rule τ ≥ 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid("alpha", format!("alpha = {} must lie in [0, 1]", self.alpha)));
        }
        if self.strategy == StrategyKind::Lsmd {
            if self.lsmd_alpha.len() != self.corpus.num_languages {
                return Err(invalid(
                    "lsmd_alpha",
                    format!(
                        "lsmd_alpha has {} entries, corpus has {} languages",
                        self.lsmd_alpha.len(),
                        self.corpus.num_languages
                    ),
                ));
            }
            if let Some(a) = self.lsmd_alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
                return Err(invalid("lsmd_alpha", format!("entry {a} must lie in [0, 1]")));
            }
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "batch_size must be at least 1".into()));
        }
        if self.update_interval == Some(0) {
            return Err(invalid("update_interval", "update_interval T must be at least 1".into()));
        }
        if self.max_steps.is_none() && self.epochs == 0 {
            return Err(invalid("epochs", "epochs must be at least 1".into()));
        }
        let (t, t_max) = (self.interval(), self.t_max());
        if t_max < t {
            return Err(invalid("max_steps", format!("T_max = {t_max} is below the update interval T = {t}")));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(invalid("label_smoothing", format!("{} must lie in [0, 1)", self.label_smoothing)));
        }
        if self.num_models != 2 {
            return Err(invalid("num_models", format!("only 2 models are supported, got {}", self.num_models)));
        }
        self.optimizer
            .validate()
            .map_err(|e| invalid("optimizer", e.to_string()))?;
        self.dims()
            .validate()
            .map_err(|e| invalid("embed_dim", e.to_string()))?;
        Ok(())
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            vocab: self.corpus.vocab_size(),
            num_languages: self.corpus.num_languages,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
        }
    }

    /// Steps in one epoch over all training data: `ceil(Σ N_ℓ / batch)`.
    pub fn epoch_steps(&self) -> u64 {
        let total: usize = self.corpus.train_sizes().iter().sum();
        total.div_ceil(self.batch_size.max(1)) as u64
    }

    /// Update interval T.
    pub fn interval(&self) -> u64 {
        self.update_interval.unwrap_or_else(|| self.epoch_steps())
    }

    /// Total steps T_max.
    pub fn t_max(&self) -> u64 {
        self.max_steps.unwrap_or(self.epochs * self.interval())
    }

    pub fn scheduler_spec(&self) -> SchedulerSpec {
        SchedulerSpec {
            variant: self.scheduler,
            t_max: self.t_max(),
        }
    }

    pub fn tau(&self, slot: usize) -> f64 {
        if slot == 0 {
            self.tau1
        } else {
            self.tau2
        }
    }
}
