use thiserror::Error;

use crate::corpus::{CorpusError, MultilingualCorpus, Split};
use crate::model::{ModelError, ModelParams};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LanguageMetrics {
    pub dev_ce: f64,
    pub accuracy: f64,
}

/// Mean token NLL and argmax accuracy on each language's validation split.
pub fn evaluate(params: &ModelParams, corpus: &MultilingualCorpus) -> Result<Vec<LanguageMetrics>, EvalError> {
    (0..corpus.num_languages())
        .map(|l| {
            let batch = corpus.split_batch(l, Split::Valid)?;
            let lp = params.log_probs(&batch)?;
            let targets = batch.flat_targets();
            let (mut nll, mut correct) = (0.0, 0usize);
            for (i, &t) in targets.iter().enumerate() {
                let row = lp.row(i);
                nll -= row[t];
                let best = row
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (j, &v)| if v > b.1 { (j, v) } else { b });
                correct += usize::from(best.0 == t);
            }
            let n = targets.len() as f64;
            Ok(LanguageMetrics {
                dev_ce: nll / n,
                accuracy: correct as f64 / n,
            })
        })
        .collect()
}
