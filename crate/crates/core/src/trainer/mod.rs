//! Training loops: the two-model mutual run with periodic weight updates,
//! and the single-model temperature-sampling baseline.

mod config;
mod eval;
mod record;
mod run;

use thiserror::Error;

pub use config::TrainConfig;
pub use eval::{evaluate, EvalError, LanguageMetrics};
pub use record::{
    pareto_points, write_pareto_csv, write_run_csv, write_weight_csv, write_weight_rows, ModelSnapshot, ParetoPoint,
    RunRecord, Snapshot, WeightUpdate, PARETO_CSV_HEADER, RUN_CSV_HEADER, WEIGHT_CSV_HEADER,
};
pub use run::{train_baseline, train_baseline_on, train_pareto_md, train_pareto_md_on, NoObserver, StepObserver};

use crate::corpus::CorpusError;
use crate::distill::DistillError;
use crate::grad::GradError;
use crate::model::ModelError;
use crate::sampling::SamplingError;
use crate::strategy::StrategyError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config field `{field}`: {msg}")]
    Invalid { field: &'static str, msg: String },
    #[error("non-finite loss at step {step}, model {model}, language {language}")]
    NonFiniteLoss { step: u64, model: usize, language: usize },
    #[error("gradient reached teacher parameters at step {step} (model {model})")]
    TeacherLeak { step: u64, model: usize },
    #[error("records or corpus do not share one corpus spec")]
    MismatchedCorpus,
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Distill(#[from] DistillError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

impl TrainError {
    /// Config problems (as opposed to failures during training).
    pub fn is_validation(&self) -> bool {
        matches!(self, TrainError::Invalid { .. })
    }
}
