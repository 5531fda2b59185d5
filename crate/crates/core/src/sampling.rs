//! Temperature-based sampling over objectives: `P(ℓ) ∝ N_ℓ^{1/τ}`.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("dataset size for language {language} must be at least 1")]
    NonPositiveSize { language: usize },
    #[error("temperature must be >= 1, got {0}")]
    Temperature(f64),
    #[error("no sizes given")]
    Empty,
    #[error("invalid probability vector: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingDistribution {
    probs: Vec<f64>,
    temperature: f64,
}

/// Builds the temperature-smoothed distribution over `sizes`.
///
/// `N^{1/τ}` is evaluated as `exp((ln N - ln N_max) / τ)` so large sizes never
/// overflow and equal sizes map to exactly equal weights.
pub fn temperature_distribution(sizes: &[u64], temperature: f64) -> Result<SamplingDistribution, SamplingError> {
    if sizes.is_empty() {
        return Err(SamplingError::Empty);
    }
    if !(temperature >= 1.0) || !temperature.is_finite() {
        return Err(SamplingError::Temperature(temperature));
    }
    if let Some(language) = sizes.iter().position(|&n| n == 0) {
        return Err(SamplingError::NonPositiveSize { language });
    }
    let logs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| ((l - max) / temperature).exp()).collect();
    let z: f64 = weights.iter().sum();
    Ok(SamplingDistribution {
        probs: weights.into_iter().map(|w| w / z).collect(),
        temperature,
    })
}

impl SamplingDistribution {
    /// Wraps an explicit probability vector (entries >= 0, sum 1 within 1e-12).
    pub fn from_probs(probs: Vec<f64>) -> Result<Self, SamplingError> {
        if probs.is_empty() {
            return Err(SamplingError::Empty);
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(SamplingError::Invalid("entries must be finite and non-negative".into()));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(SamplingError::Invalid(format!("entries sum to {s}")));
        }
        Ok(SamplingDistribution {
            probs,
            temperature: f64::NAN,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Temperature the distribution was built with; NaN for explicit vectors.
    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn entropy(&self) -> f64 {
        self.probs.iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum()
    }

    /// Renormalizes over the languages where `keep` is true. `None` if no
    /// kept language has positive mass.
    pub fn restrict(&self, keep: &[bool]) -> Option<SamplingDistribution> {
        let masked: Vec<f64> = self.probs.iter().zip(keep).map(|(&p, &k)| if k { p } else { 0.0 }).collect();
        let z: f64 = masked.iter().sum();
        if z <= 0.0 {
            return None;
        }
        Some(SamplingDistribution {
            probs: masked.into_iter().map(|p| p / z).collect(),
            temperature: self.temperature,
        })
    }

    /// Inverse-CDF categorical draw from one uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Rounding left u above the final cumulative sum.
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

pub fn sample_language<R: Rng + ?Sized>(dist: &SamplingDistribution, rng: &mut R) -> usize {
    dist.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_sizes_are_uniform() {
        let d = temperature_distribution(&[7, 7, 7, 7], 3.0).unwrap();
        assert!(d.probs().iter().all(|&p| p == d.probs()[0]));
        assert!((d.probs()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn huge_temperature_is_near_uniform() {
        let d = temperature_distribution(&[3_000_000, 5_000, 12], 1e6).unwrap();
        for &p in d.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-5);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(temperature_distribution(&[3, 0], 1.0), Err(SamplingError::NonPositiveSize { language: 1 }));
        assert_eq!(temperature_distribution(&[3, 2], 0.5), Err(SamplingError::Temperature(0.5)));
    }

    #[test]
    fn one_hot_always_draws_its_language() {
        let d = SamplingDistribution::from_probs(vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!((0..1000).all(|_| d.sample(&mut rng) == 2));
    }

    #[test]
    fn draws_replay_with_seed() {
        let d = temperature_distribution(&[100, 30, 5], 1.0).unwrap();
        let a: Vec<usize> = {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            (0..50).map(|_| d.sample(&mut rng)).collect()
        };
        let b: Vec<usize> = {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            (0..50).map(|_| d.sample(&mut rng)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn restrict_renormalizes() {
        let d = SamplingDistribution::from_probs(vec![0.5, 0.25, 0.25]).unwrap();
        let r = d.restrict(&[false, true, true]).unwrap();
        assert_eq!(r.probs(), &[0.0, 0.5, 0.5]);
        assert!(d.restrict(&[false, false, false]).is_none());
    }

    proptest! {
        #[test]
        fn smoothing_is_monotone(
            sizes in prop::collection::vec(1u64..1_000_000, 2..8),
            t1 in 1.0f64..10.0,
            dt in 0.0f64..10.0,
        ) {
            let lo = temperature_distribution(&sizes, t1).unwrap();
            let hi = temperature_distribution(&sizes, t1 + dt).unwrap();
            prop_assert!(hi.entropy() >= lo.entropy() - 1e-12);
            prop_assert!((lo.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..sizes.len() {
                for j in 0..sizes.len() {
                    if sizes[i] > sizes[j] {
                        prop_assert!(lo.probs()[i] >= lo.probs()[j]);
                    }
                    if sizes[i] == sizes[j] {
                        prop_assert_eq!(lo.probs()[i], lo.probs()[j]);
                    }
                }
            }
        }
    }
}
