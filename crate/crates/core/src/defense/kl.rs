//! KL-divergence update regularization against a frozen reference model.

use serde::{Deserialize, Serialize};

use crate::lm::net::{evaluate, Objective};
use crate::lm::{Example, ModelParams};
use crate::{Error, Result};

/// Which snapshot serves as the "initial training state".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlReference {
    /// The untrained round-0 global model.
    #[default]
    RoundZero,
    /// The global model each client starts the current round from.
    RoundStart,
}

impl KlReference {
    pub fn as_str(self) -> &'static str {
        match self {
            KlReference::RoundZero => "round_zero",
            KlReference::RoundStart => "round_start",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlConfig {
    pub mu: f64,
    #[serde(default)]
    pub reference: KlReference,
}

impl KlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::Config("defense.kl.mu must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// A KL weight bound to its reference parameters.
#[derive(Debug, Clone, Copy)]
pub struct KlRegularizer<'a> {
    pub mu: f64,
    pub reference: &'a ModelParams,
}

/// `KL(p || q) = sum_i p_i ln(p_i / q_i)`, with `0 ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum()
}

/// Cross-entropy plus `mu` times the batch-mean KL from the model's
/// next-token distribution to the reference model's, with exact gradient.
pub fn kl_regularized_loss(
    params: &ModelParams,
    reg: &KlRegularizer<'_>,
    batch: &[Example],
) -> Result<(f64, Vec<f64>)> {
    if reg.reference.layout() != params.layout() {
        return Err(Error::Shape("KL reference layout differs from model".into()));
    }
    let (loss, grad) = evaluate(
        params,
        batch,
        Objective {
            reference: Some((reg.reference, reg.mu)),
            ..Objective::default()
        },
    )?;
    Ok((loss.total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{init_model, loss_and_grad, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(seed: u64) -> ModelConfig {
        ModelConfig {
            context_len: 2,
            embed_dim: 3,
            hidden_dims: vec![5],
            vocab_size: 6,
            seed,
        }
    }

    fn batch() -> Vec<Example> {
        vec![
            Example {
                context: vec![0, 1],
                target: 4,
            },
            Example {
                context: vec![1, 4],
                target: 5,
            },
        ]
    }

    #[test]
    fn zero_weight_is_plain_loss() {
        let p = init_model(&cfg(1)).unwrap();
        let r = init_model(&cfg(2)).unwrap();
        let reg = KlRegularizer { mu: 0.0, reference: &r };
        assert_eq!(kl_regularized_loss(&p, &reg, &batch()).unwrap(), loss_and_grad(&p, &batch()).unwrap());
    }

    #[test]
    fn equal_reference_contributes_nothing() {
        let p = init_model(&cfg(1)).unwrap();
        let reg = KlRegularizer { mu: 0.5, reference: &p };
        let (l, g) = kl_regularized_loss(&p, &reg, &batch()).unwrap();
        let (l0, g0) = loss_and_grad(&p, &batch()).unwrap();
        assert!((l - l0).abs() < 1e-14);
        for (a, b) in g.iter().zip(&g0) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    /// Models with zero weights whose output biases pin the next-token
    /// distribution to fixed values.
    fn pinned(probs: &[f64]) -> ModelParams {
        let mut p = ModelParams::zeros(ModelConfig {
            vocab_size: 4,
            ..cfg(0)
        })
        .unwrap();
        let out = p.layout().dense.last().unwrap().bias_range();
        for (i, pr) in probs.iter().enumerate() {
            p.flat[out.start + i] = if *pr > 0.0 { pr.ln() } else { -800.0 };
        }
        p
    }

    #[test]
    fn closed_form_kl_fixture() {
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((expected - 0.14384).abs() < 1e-5);
        assert!((kl_divergence(&[0.5, 0.5], &[0.25, 0.75]) - expected).abs() < 1e-15);

        let model = pinned(&[0.5, 0.5, 0.0, 0.0]);
        let reference = pinned(&[0.25, 0.75, 0.0, 0.0]);
        let b = vec![Example {
            context: vec![0, 1],
            target: 0,
        }];
        let with = kl_regularized_loss(&model, &KlRegularizer { mu: 1.0, reference: &reference }, &b).unwrap().0;
        let without = loss_and_grad(&model, &b).unwrap().0;
        assert!((with - without - expected).abs() < 1e-12, "{}", with - without);
    }

    #[test]
    fn kl_nonnegative_and_zero_iff_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let p: Vec<f64> = (0..5).map(|_| rng.random_range(0.01..1.0)).collect();
            let q: Vec<f64> = (0..5).map(|_| rng.random_range(0.01..1.0)).collect();
            let (sp, sq) = (p.iter().sum::<f64>(), q.iter().sum::<f64>());
            let p: Vec<f64> = p.iter().map(|x| x / sp).collect();
            let q: Vec<f64> = q.iter().map(|x| x / sq).collect();
            assert!(kl_divergence(&p, &q) > 0.0);
            assert!(kl_divergence(&p, &p).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut p = init_model(&cfg(3)).unwrap();
        let r = init_model(&cfg(4)).unwrap();
        let mu = 0.7;
        let (_, g) = kl_regularized_loss(&p, &KlRegularizer { mu, reference: &r }, &batch()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = 1e-5;
        for _ in 0..20 {
            let i = rng.random_range(0..p.len());
            let orig = p.flat[i];
            p.flat[i] = orig + h;
            let lp = kl_regularized_loss(&p, &KlRegularizer { mu, reference: &r }, &batch()).unwrap().0;
            p.flat[i] = orig - h;
            let lm = kl_regularized_loss(&p, &KlRegularizer { mu, reference: &r }, &batch()).unwrap().0;
            p.flat[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(g[i].abs()).max(1e-8);
            assert!((fd - g[i]).abs() / denom < 1e-4, "coord {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn layout_mismatch_rejected() {
        let p = init_model(&cfg(1)).unwrap();
        let r = init_model(&ModelConfig { embed_dim: 2, ..cfg(1) }).unwrap();
        assert!(kl_regularized_loss(&p, &KlRegularizer { mu: 1.0, reference: &r }, &batch()).is_err());
    }
}
