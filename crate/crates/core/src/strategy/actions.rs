use serde::{Deserialize, Serialize};

use super::StrategyError;

/// A move on one distillation weight, applied in logit space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Up,
    Down,
    Keep,
}

impl Action {
    /// Candidate order used by every search space.
    pub const ALL: [Action; 3] = [Action::Up, Action::Down, Action::Keep];

    pub fn name(self) -> &'static str {
        match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Keep => "keep",
        }
    }

    /// Tie-break rank: lower wins.
    pub(crate) fn tie_rank(self) -> u8 {
        match self {
            Action::Keep => 0,
            Action::Down => 1,
            Action::Up => 2,
        }
    }

    pub fn apply(self, x: f64, mu: f64) -> Result<f64, StrategyError> {
        apply_action(x, self, mu)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn logit(x: f64) -> f64 {
    x.ln() - (-x).ln_1p()
}

const LOWEST: f64 = f64::MIN_POSITIVE;
const HIGHEST: f64 = 1.0 - f64::EPSILON / 2.0;

/// `keep` returns `x` unchanged; `up`/`down` shift `σ⁻¹(x)` by `±μ`.
pub fn apply_action(x: f64, action: Action, mu: f64) -> Result<f64, StrategyError> {
    if !(x > 0.0 && x < 1.0) {
        return Err(StrategyError::ActionDomain(x));
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(StrategyError::StepSize(mu));
    }
    let z = logit(x);
    let y = match action {
        Action::Keep => return Ok(x),
        Action::Up => sigmoid(z + mu),
        Action::Down => sigmoid(z - mu),
    };
    // Keep the result strictly inside (0, 1) even when σ saturates.
    Ok(y.clamp(LOWEST, HIGHEST))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerVariant {
    #[serde(rename = "fixed-1")]
    Fixed1,
    #[serde(rename = "variant-2")]
    Variant2,
    #[serde(rename = "variant-3")]
    Variant3,
    #[default]
    Default,
}

impl SchedulerVariant {
    pub const ALL: [SchedulerVariant; 4] = [
        SchedulerVariant::Fixed1,
        SchedulerVariant::Variant2,
        SchedulerVariant::Variant3,
        SchedulerVariant::Default,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerVariant::Fixed1 => "fixed-1",
            SchedulerVariant::Variant2 => "variant-2",
            SchedulerVariant::Variant3 => "variant-3",
            SchedulerVariant::Default => "default",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SchedulerSpec {
    pub variant: SchedulerVariant,
    pub t_max: u64,
}

/// Step size `μ` at training step `t`.
pub fn step_size(t: u64, spec: SchedulerSpec) -> Result<f64, StrategyError> {
    if spec.t_max == 0 {
        return Err(StrategyError::Scheduler("t_max must be positive".into()));
    }
    if t > spec.t_max {
        return Err(StrategyError::Scheduler(format!("step {t} is past t_max {}", spec.t_max)));
    }
    let (t, tm) = (t as f64, spec.t_max as f64);
    let mu = match spec.variant {
        SchedulerVariant::Fixed1 => 1.0,
        SchedulerVariant::Default => ((tm - t) / tm).sqrt(),
        SchedulerVariant::Variant2 => ((tm - 0.8 * t) / tm).sqrt(),
        SchedulerVariant::Variant3 => ((tm - 1.2 * t) / tm).max(0.0).sqrt(),
    };
    Ok(mu)
}
