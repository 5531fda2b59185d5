//! Token-level losses: cross-entropy against the reference, distillation
//! against a teacher's output distribution, and their α-weighted mix.
//!
//! All losses are means over token positions. The teacher is evaluated and
//! then re-entered as a constant, so no gradient reaches its parameters.

use thiserror::Error;

use crate::grad::{GradError, Gradients, Graph, NodeId, ParamId, Tensor};
use crate::model::{softmax, Batch, ModelError, ModelParams};

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("batch has no token positions")]
    EmptyBatch,
    #[error("distillation weight {0} is outside [0, 1]")]
    Alpha(f64),
    #[error("distillation weights: {0}")]
    InvalidWeights(String),
    #[error("label smoothing {0} is outside [0, 1)")]
    LabelSmoothing(f64),
    #[error("teacher distribution has shape {got:?}, batch needs [{rows}, {vocab}]")]
    Misaligned { rows: usize, vocab: usize, got: Vec<usize> },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grad(#[from] GradError),
}

/// Teacher leaves are recorded with ids offset by this amount.
pub const TEACHER_PARAM_BASE: usize = 1000;

pub fn is_teacher_param(id: ParamId) -> bool {
    id.0 >= TEACHER_PARAM_BASE
}

/// One distillation weight per language, each in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct DistillWeights {
    alpha: Vec<f64>,
}

impl DistillWeights {
    pub fn new(alpha: Vec<f64>) -> Result<Self, DistillError> {
        if alpha.is_empty() {
            return Err(DistillError::InvalidWeights("empty weight vector".into()));
        }
        if let Some(&bad) = alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(DistillError::Alpha(bad));
        }
        Ok(DistillWeights { alpha })
    }

    pub fn zeros(n: usize) -> Self {
        DistillWeights { alpha: vec![0.0; n] }
    }

    pub fn filled(n: usize, value: f64) -> Result<Self, DistillError> {
        DistillWeights::new(vec![value; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alpha
    }

    pub fn get(&self, l: usize) -> f64 {
        self.alpha[l]
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.alpha
    }
}

fn check_alpha(alpha: f64) -> Result<(), DistillError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(DistillError::Alpha(alpha))
    }
}

/// A recorded, already-evaluated scalar loss.
#[derive(Debug)]
pub struct LossTape {
    pub graph: Graph,
    pub out: NodeId,
    pub value: f64,
}

impl LossTape {
    fn finish(mut graph: Graph, out: NodeId) -> Result<Self, DistillError> {
        let value = graph.forward(out)?;
        Ok(LossTape { graph, out, value })
    }

    /// Gradients of every parameter leaf, student and teacher alike.
    pub fn gradients(&self) -> Result<Gradients, DistillError> {
        Ok(self.graph.backward(self.out)?)
    }

    /// Gradients restricted to the student's parameters.
    pub fn student_gradients(&self) -> Result<Gradients, DistillError> {
        let all = self.gradients()?;
        let mut out = Gradients::default();
        for (id, g) in all.iter().filter(|(id, _)| !is_teacher_param(*id)) {
            out.insert(id, g.clone());
        }
        Ok(out)
    }
}

fn one_hot_targets(batch: &Batch, vocab: usize, smoothing: f64) -> Tensor {
    let targets = batch.flat_targets();
    let off = smoothing / vocab as f64;
    let mut data = vec![off; targets.len() * vocab];
    for (i, &t) in targets.iter().enumerate() {
        data[i * vocab + t] = if smoothing == 0.0 { 1.0 } else { 1.0 - smoothing + off };
    }
    Tensor::from_parts(vec![targets.len(), vocab], data)
}

/// `−(1/n) Σ q ⊙ log p` for a constant target distribution `q`.
fn soft_ce(graph: &mut Graph, log_probs: NodeId, q: Tensor, n: usize) -> Result<NodeId, GradError> {
    let q = graph.constant(q);
    let prod = graph.multiply(log_probs, q)?;
    let total = graph.sum(prod)?;
    graph.scale(total, -1.0 / n as f64)
}

fn start(student: &ModelParams, batch: &Batch) -> Result<(Graph, NodeId, usize, usize), DistillError> {
    let n = batch.num_positions();
    if n == 0 {
        return Err(DistillError::EmptyBatch);
    }
    let mut graph = Graph::new();
    let logits = student.record(&mut graph, batch, 0)?;
    let lsm = graph.log_softmax(logits)?;
    Ok((graph, lsm, n, student.dims().vocab))
}

/// Mean token NLL of the reference targets.
pub fn ce_loss(params: &ModelParams, batch: &Batch) -> Result<LossTape, DistillError> {
    ce_loss_smoothed(params, batch, 0.0)
}

/// Cross-entropy against `(1−ε)·one-hot + ε/|V|`; `ε = 0` is plain NLL.
pub fn ce_loss_smoothed(params: &ModelParams, batch: &Batch, smoothing: f64) -> Result<LossTape, DistillError> {
    if !(0.0..1.0).contains(&smoothing) {
        return Err(DistillError::LabelSmoothing(smoothing));
    }
    let (mut graph, lsm, n, vocab) = start(params, batch)?;
    let out = soft_ce(&mut graph, lsm, one_hot_targets(batch, vocab, smoothing), n)?;
    LossTape::finish(graph, out)
}

fn check_teacher(probs: &Tensor, n: usize, vocab: usize) -> Result<(), DistillError> {
    if probs.shape() != [n, vocab] {
        return Err(DistillError::Misaligned {
            rows: n,
            vocab,
            got: probs.shape().to_vec(),
        });
    }
    Ok(())
}

/// Mean over positions of `−Σ_w p_T(w)·log p_S(w)`; `teacher_probs` is a constant.
pub fn kd_loss(student: &ModelParams, teacher_probs: &Tensor, batch: &Batch) -> Result<LossTape, DistillError> {
    let (mut graph, lsm, n, vocab) = start(student, batch)?;
    check_teacher(teacher_probs, n, vocab)?;
    let out = soft_ce(&mut graph, lsm, teacher_probs.clone(), n)?;
    LossTape::finish(graph, out)
}

/// `(1−α)·CE + α·KD` with the teacher recorded on the same tape (ids offset
/// by [`TEACHER_PARAM_BASE`]) and detached before use.
pub fn pmd_loss(batch: &Batch, student: &ModelParams, teacher: &ModelParams, alpha: f64) -> Result<LossTape, DistillError> {
    check_alpha(alpha)?;
    let (mut graph, lsm, n, vocab) = start(student, batch)?;
    let teacher_logits = teacher.record(&mut graph, batch, TEACHER_PARAM_BASE)?;
    let probs = softmax(graph.evaluate(teacher_logits)?);
    combine(graph, lsm, batch, n, vocab, alpha, 0.0, Some(probs))
}

/// As [`pmd_loss`] but with the teacher distribution precomputed (or absent
/// when `alpha == 0`). Used by the training loops.
pub(crate) fn pmd_loss_with_probs(
    batch: &Batch,
    student: &ModelParams,
    teacher_probs: Option<Tensor>,
    alpha: f64,
    smoothing: f64,
) -> Result<LossTape, DistillError> {
    check_alpha(alpha)?;
    if !(0.0..1.0).contains(&smoothing) {
        return Err(DistillError::LabelSmoothing(smoothing));
    }
    let (graph, lsm, n, vocab) = start(student, batch)?;
    if alpha > 0.0 && teacher_probs.is_none() {
        return Err(DistillError::InvalidWeights("positive weight without a teacher".into()));
    }
    combine(graph, lsm, batch, n, vocab, alpha, smoothing, teacher_probs)
}

#[allow(clippy::too_many_arguments)]
fn combine(
    mut graph: Graph,
    lsm: NodeId,
    batch: &Batch,
    n: usize,
    vocab: usize,
    alpha: f64,
    smoothing: f64,
    teacher_probs: Option<Tensor>,
) -> Result<LossTape, DistillError> {
    let out = if alpha == 0.0 {
        soft_ce(&mut graph, lsm, one_hot_targets(batch, vocab, smoothing), n)?
    } else {
        let probs = teacher_probs.expect("checked by callers");
        check_teacher(&probs, n, vocab)?;
        if alpha == 1.0 {
            soft_ce(&mut graph, lsm, probs, n)?
        } else {
            let ce = soft_ce(&mut graph, lsm, one_hot_targets(batch, vocab, smoothing), n)?;
            let kd = soft_ce(&mut graph, lsm, probs, n)?;
            let ce = graph.scale(ce, 1.0 - alpha)?;
            let kd = graph.scale(kd, alpha)?;
            graph.add(ce, kd)?
        }
    };
    LossTape::finish(graph, out)
}
