use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{StrategyError, TrialEvaluator};
use crate::corpus::{BatchSampler, MultilingualCorpus, Split};
use crate::distill::{pmd_loss_with_probs, DistillWeights};
use crate::grad::OptimizerSpec;
use crate::model::ModelParams;
use crate::sampling::SamplingDistribution;
use crate::seed;
use crate::trainer::evaluate;

/// Everything a trial training needs besides the two models and the weights.
#[derive(Clone, Copy, Debug)]
pub struct TrialContext<'a> {
    pub corpus: &'a MultilingualCorpus,
    /// The trained model's own sampling distribution.
    pub sampling: &'a SamplingDistribution,
    pub optimizer: &'a OptimizerSpec,
    pub batch_size: usize,
    pub label_smoothing: f64,
    /// Fixes the data order; every candidate of one search shares it.
    pub seed: u64,
}

/// Copies `base`, then trains the copy with a fresh optimizer for one pass
/// over each language's trial set. Languages are interleaved by drawing from
/// the model's sampling distribution restricted to pools with batches left.
pub fn trial_train(
    base: &ModelParams,
    teacher: &ModelParams,
    alpha: &DistillWeights,
    ctx: &TrialContext<'_>,
) -> Result<ModelParams, StrategyError> {
    let corpus = ctx.corpus;
    let l = corpus.num_languages();
    if alpha.len() != l {
        return Err(StrategyError::LengthMismatch {
            expected: l,
            got: alpha.len(),
        });
    }
    let batch = ctx.batch_size.max(1);
    let mut remaining = Vec::with_capacity(l);
    for lang in 0..l {
        let n = corpus.language(lang)?.trial.len();
        if n == 0 {
            return Err(StrategyError::EmptyTrialSet(lang));
        }
        remaining.push(n.div_ceil(batch));
    }
    let mut params = base.clone();
    let mut opt = ctx.optimizer.init_state();
    let mut sampler = BatchSampler::new(l, Split::Trial, seed::derive(ctx.seed, &[0]));
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(ctx.seed, &[1]));
    while remaining.iter().any(|&r| r > 0) {
        let open: Vec<bool> = remaining.iter().map(|&r| r > 0).collect();
        let lang = match ctx.sampling.restrict(&open) {
            Some(d) => d.sample(&mut rng),
            None => open.iter().position(|&o| o).expect("some pool is open"),
        };
        remaining[lang] -= 1;
        let b = sampler.draw(corpus, lang, batch)?;
        let a = alpha.get(lang);
        let probs = if a > 0.0 { Some(teacher.predict_distribution(&b)?) } else { None };
        let tape = pmd_loss_with_probs(&b, &params, probs, a, ctx.label_smoothing)?;
        if !tape.value.is_finite() {
            return Err(StrategyError::NonFiniteLoss { language: lang });
        }
        let grads = tape.student_gradients()?;
        opt.apply(&mut params, &grads)?;
    }
    Ok(params)
}

/// Scores candidates by trial-training `base` and measuring dev CE.
pub struct CorpusTrialEvaluator<'a> {
    pub base: &'a ModelParams,
    pub teacher: &'a ModelParams,
    pub ctx: &'a TrialContext<'a>,
}

impl TrialEvaluator for CorpusTrialEvaluator<'_> {
    fn evaluate(&self, _candidate: usize, alpha: &[f64]) -> Result<Vec<f64>, StrategyError> {
        let weights = DistillWeights::new(alpha.to_vec())?;
        let trained = trial_train(self.base, self.teacher, &weights, self.ctx)?;
        let metrics = evaluate(&trained, self.ctx.corpus).map_err(|e| match e {
            crate::trainer::EvalError::Model(m) => StrategyError::Model(m),
            crate::trainer::EvalError::Corpus(c) => StrategyError::Corpus(c),
        })?;
        Ok(metrics.iter().map(|m| m.dev_ce).collect())
    }
}
