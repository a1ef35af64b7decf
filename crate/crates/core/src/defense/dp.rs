//! Batch-level gradient clipping with Gaussian noise.
//!
//! Noise is added to the clipped batch-mean gradient at every optimizer
//! step. This is weaker than per-example DP-SGD and no epsilon is tracked;
//! `delta` is carried only for reporting.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::lm::l2_norm;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpConfig {
    pub noise_multiplier: f64,
    #[serde(default = "default_max_grad_norm")]
    pub max_grad_norm: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_max_grad_norm() -> f64 {
    1.0
}

fn default_delta() -> f64 {
    1e-5
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_multiplier >= 0.0) {
            return Err(Error::Config("defense.dp.noise_multiplier must be >= 0".into()));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(Error::Config("defense.dp.max_grad_norm must be > 0".into()));
        }
        Ok(())
    }

    /// Clip then noise, in place.
    pub fn apply<R: Rng + ?Sized>(&self, grad: &mut [f64], rng: &mut R) {
        clip_gradient(grad, self.max_grad_norm);
        add_dp_noise(grad, self.noise_multiplier, self.max_grad_norm, rng);
    }
}

/// Scales `grad` to norm `max_norm` when it is longer.
pub fn clip_gradient(grad: &mut [f64], max_norm: f64) {
    let norm = l2_norm(grad);
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

/// Adds i.i.d. `N(0, (eta * max_norm)^2)` noise to every coordinate.
pub fn add_dp_noise<R: Rng + ?Sized>(grad: &mut [f64], eta: f64, max_norm: f64, rng: &mut R) {
    if eta == 0.0 {
        return;
    }
    let std = eta * max_norm;
    let normal = Normal::new(0.0, std).expect("finite, positive std");
    for g in grad.iter_mut() {
        *g += normal.sample(rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clip_examples() {
        let mut g = vec![3.0, 4.0];
        clip_gradient(&mut g, 1.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);

        let mut small = vec![0.3, 0.4];
        clip_gradient(&mut small, 1.0);
        assert_eq!(small, [0.3, 0.4]);

        let mut zero = vec![0.0; 3];
        clip_gradient(&mut zero, 1.0);
        assert_eq!(zero, [0.0; 3]);
    }

    #[test]
    fn zero_eta_and_infinite_norm_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = vec![10.0, -3.0];
        DpConfig {
            noise_multiplier: 0.0,
            max_grad_norm: f64::INFINITY,
            delta: 1e-5,
        }
        .apply(&mut g, &mut rng);
        assert_eq!(g, [10.0, -3.0]);
    }

    #[test]
    fn noise_moments() {
        let n = 100_000;
        let mut g = vec![0.0; n];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        add_dp_noise(&mut g, 0.8, 1.0, &mut rng);
        let mean = g.iter().sum::<f64>() / n as f64;
        let var = g.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var.sqrt() - 0.8).abs() / 0.8 < 0.02, "std {}", var.sqrt());
        assert!(mean.abs() < 3.0 * 0.8 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn deterministic_given_rng() {
        let run = || {
            let mut g = vec![0.0; 8];
            add_dp_noise(&mut g, 0.5, 2.0, &mut ChaCha8Rng::seed_from_u64(3));
            g
        };
        assert_eq!(run(), run());
    }

    proptest! {
        #[test]
        fn clipped_norm_bounded(g in prop::collection::vec(-100.0f64..100.0, 1..30), c in 0.01f64..50.0) {
            let mut x = g.clone();
            clip_gradient(&mut x, c);
            prop_assert!(l2_norm(&x) <= c * (1.0 + 1e-12));
            if l2_norm(&g) <= c {
                prop_assert_eq!(x, g);
            }
        }
    }
}
