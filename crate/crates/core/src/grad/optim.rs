use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{GradError, Gradients, ParamId, Tensor};

/// Anything that exposes its trainable arrays by id, in a fixed order.
pub trait Parameterized {
    fn params(&self) -> Vec<(ParamId, &Tensor)>;
    fn params_mut(&mut self) -> Vec<(ParamId, &mut Tensor)>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer hyperparameters. State is created fresh from a spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.98
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerSpec {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerSpec {
            kind: OptimizerKind::Sgd,
            learning_rate,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        OptimizerSpec {
            kind: OptimizerKind::Adam,
            ..OptimizerSpec::sgd(learning_rate)
        }
    }

    pub fn validate(&self) -> Result<(), GradError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(GradError::InvalidOptimizer(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.kind == OptimizerKind::Adam {
            for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
                if !(b > 0.0 && b < 1.0) {
                    return Err(GradError::InvalidOptimizer(format!("{name} must lie in (0, 1), got {b}")));
                }
            }
            if !(self.eps > 0.0) {
                return Err(GradError::InvalidOptimizer(format!("eps must be positive, got {}", self.eps)));
            }
        }
        Ok(())
    }

    pub fn init_state(&self) -> OptimizerState {
        OptimizerState {
            spec: self.clone(),
            step: 0,
            moments: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    spec: OptimizerSpec,
    step: u64,
    moments: BTreeMap<ParamId, Moments>,
}

impl OptimizerState {
    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Gradients are checked up front, so on error no
    /// parameter has been touched.
    pub fn apply<P: Parameterized + ?Sized>(&mut self, params: &mut P, grads: &Gradients) -> Result<(), GradError> {
        for (id, p) in params.params() {
            let g = grads.get(id).ok_or(GradError::MissingGradient(id))?;
            if g.shape() != p.shape() {
                return Err(GradError::GradientShape {
                    id,
                    expected: p.shape().to_vec(),
                    got: g.shape().to_vec(),
                });
            }
            if !g.all_finite() {
                return Err(GradError::NonFiniteGradient(id));
            }
        }

        self.step += 1;
        let lr = self.spec.learning_rate;
        match self.spec.kind {
            OptimizerKind::Sgd => {
                for (id, p) in params.params_mut() {
                    let g = grads.get(id).expect("checked above");
                    for (w, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (self.spec.beta1, self.spec.beta2, self.spec.eps);
                let t = self.step as i32;
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                for (id, p) in params.params_mut() {
                    let g = grads.get(id).expect("checked above");
                    let m = self.moments.entry(id).or_insert_with(|| Moments {
                        first: vec![0.0; p.len()],
                        second: vec![0.0; p.len()],
                    });
                    for (((w, gv), mv), vv) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.first.iter_mut())
                        .zip(m.second.iter_mut())
                    {
                        *mv = b1 * *mv + (1.0 - b1) * gv;
                        *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                        let mhat = *mv / c1;
                        let vhat = *vv / c2;
                        *w -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
