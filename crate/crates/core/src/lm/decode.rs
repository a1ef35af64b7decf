//! Temperature softmax, nucleus filtering and ancestral sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, EOS, PAD};
use crate::{Error, Result};

use super::{context_window, forward_logits, ModelParams};

/// Cumulative-mass slack when deciding whether a nucleus prefix reached `p`.
const NUCLEUS_SLACK: f64 = 1e-12;

/// A normalized next-token distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbDist(Vec<f64>);

impl ProbDist {
    /// Normalizes non-negative weights. Fails when the total mass is zero or
    /// non-finite, or any weight is negative.
    pub fn from_weights(mut w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|x| *x < 0.0 || !x.is_finite()) {
            return Err(Error::Config("distribution weights must be finite and >= 0".into()));
        }
        let total: f64 = w.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Config("distribution has no mass".into()));
        }
        w.iter_mut().for_each(|x| *x /= total);
        Ok(Self(w))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Zeroes `token` and renormalizes; unchanged if nothing else has mass.
    pub fn mask(&self, token: TokenId) -> ProbDist {
        let mut w = self.0.clone();
        if let Some(x) = w.get_mut(token as usize) {
            *x = 0.0;
        }
        ProbDist::from_weights(w).unwrap_or_else(|_| self.clone())
    }
}

/// `exp(l_i / tau) / sum_j exp(l_j / tau)` with max subtraction.
pub fn softmax(logits: &[f64], tau: f64) -> Result<ProbDist> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("temperature must be > 0, got {tau}")));
    }
    if logits.is_empty() {
        return Err(Error::Config("softmax of empty logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| ((l - max) / tau).exp()).collect();
    let total: f64 = e.iter().sum();
    Ok(ProbDist(e.into_iter().map(|x| x / total).collect()))
}

/// Keeps the smallest descending-probability prefix (ties by ascending id)
/// whose mass reaches `p`, then renormalizes.
pub fn top_p_filter(dist: &ProbDist, p: f64) -> ProbDist {
    if p >= 1.0 {
        return dist.clone();
    }
    let probs = dist.probs();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut kept = vec![0.0; probs.len()];
    let mut mass = 0.0;
    for &i in &order {
        kept[i] = probs[i];
        mass += probs[i];
        if mass >= p - NUCLEUS_SLACK {
            break;
        }
    }
    kept.iter_mut().for_each(|x| *x /= mass);
    ProbDist(kept)
}

/// Inverse-CDF draw over token-id order.
pub fn sample_token<R: Rng + ?Sized>(dist: &ProbDist, rng: &mut R) -> TokenId {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last = 0;
    for (i, &p) in dist.probs().iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last = i;
            if u < cum {
                return i as TokenId;
            }
        }
    }
    last as TokenId
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub top_p: f64,
    pub temperature: f64,
    pub max_len: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            top_p: 0.9,
            temperature: 1.0,
            max_len: 64,
        }
    }
}

/// Temperature softmax of the model's next-token logits with [PAD] masked.
pub(crate) fn next_distribution(params: &ModelParams, seq: &[TokenId], tau: f64) -> Result<ProbDist> {
    let ctx = context_window(seq, seq.len(), params.config().context_len);
    Ok(softmax(&forward_logits(params, &ctx)?, tau)?.mask(PAD))
}

/// Runs `step` autoregressively from `prompt` until [EOS] or `max_len`
/// generated tokens. [EOS] is not included in the output.
pub(crate) fn decode_loop<F>(prompt: &[TokenId], max_len: usize, mut step: F) -> Result<Vec<TokenId>>
where
    F: FnMut(&[TokenId]) -> Result<TokenId>,
{
    let mut seq = prompt.to_vec();
    let mut out = Vec::new();
    while out.len() < max_len {
        let tok = step(&seq)?;
        if tok == EOS {
            break;
        }
        seq.push(tok);
        out.push(tok);
    }
    Ok(out)
}

/// Nucleus sampling from `params`, returning the generated tokens only.
pub fn generate<R: Rng + ?Sized>(
    params: &ModelParams,
    prompt: &[TokenId],
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<Vec<TokenId>> {
    if cfg.max_len == 0 {
        return Err(Error::Config("max_len must be >= 1".into()));
    }
    decode_loop(prompt, cfg.max_len, |seq| {
        let dist = next_distribution(params, seq, cfg.temperature)?;
        Ok(sample_token(&top_p_filter(&dist, cfg.top_p), rng))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn approx(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softmax_closed_forms() {
        let d = softmax(&[2f64.ln(), 0.0], 1.0).unwrap();
        assert!(approx(d.probs(), &[2.0 / 3.0, 1.0 / 3.0], 1e-15));
        let u = softmax(&[5.0; 4], 0.7).unwrap();
        assert!(approx(u.probs(), &[0.25; 4], 1e-15));
        assert!(softmax(&[1.0], 0.0).is_err());
        assert!(softmax(&[1.0], -1.0).is_err());
    }

    #[test]
    fn top_p_examples() {
        let d = ProbDist::from_weights(vec![0.5, 0.3, 0.2]).unwrap();
        assert_eq!(top_p_filter(&d, 1.0), d);
        let f = top_p_filter(&d, 0.7);
        assert!(approx(f.probs(), &[0.625, 0.375, 0.0], 1e-15));
        let one_hot = ProbDist::from_weights(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(top_p_filter(&one_hot, 0.3), one_hot);
    }

    #[test]
    fn top_p_ties_prefer_lower_id() {
        let d = ProbDist::from_weights(vec![0.25; 4]).unwrap();
        let f = top_p_filter(&d, 0.5);
        assert!(approx(f.probs(), &[0.5, 0.5, 0.0, 0.0], 1e-15));
    }

    #[test]
    fn sampling_one_hot_and_frequencies() {
        let one_hot = ProbDist::from_weights(vec![0.0, 0.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| sample_token(&one_hot, &mut rng) == 2));

        let d = ProbDist::from_weights(vec![0.625, 0.375, 0.0]).unwrap();
        let mut counts = [0usize; 3];
        let n = 100_000;
        for _ in 0..n {
            counts[sample_token(&d, &mut rng) as usize] += 1;
        }
        assert!((counts[0] as f64 / n as f64 - 0.625).abs() < 0.01);
        assert!((counts[1] as f64 / n as f64 - 0.375).abs() < 0.01);
        assert_eq!(counts[2], 0);
    }

    #[test]
    fn same_seed_same_draws() {
        let d = ProbDist::from_weights(vec![0.2, 0.3, 0.5]).unwrap();
        let draw = |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            (0..50).map(|_| sample_token(&d, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));
    }

    fn mass(d: &ProbDist) -> f64 {
        d.probs().iter().sum()
    }

    proptest! {
        #[test]
        fn softmax_normalized_and_shift_invariant(
            logits in prop::collection::vec(-30.0f64..30.0, 1..20),
            shift in -100.0f64..100.0,
            tau in 0.05f64..5.0,
        ) {
            let a = softmax(&logits, tau).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            let b = softmax(&shifted, tau).unwrap();
            prop_assert!((mass(&a) - 1.0).abs() < 1e-9);
            prop_assert!(approx(a.probs(), b.probs(), 1e-9));
        }

        #[test]
        fn top_p_keeps_minimal_prefix(
            w in prop::collection::vec(0.0f64..1.0, 1..15),
            p in 0.01f64..1.0,
        ) {
            prop_assume!(w.iter().sum::<f64>() > 1e-6);
            let d = ProbDist::from_weights(w).unwrap();
            let f = top_p_filter(&d, p);
            prop_assert!((mass(&f) - 1.0).abs() < 1e-9);
            let probs = d.probs();
            let mut order: Vec<usize> = (0..probs.len()).collect();
            order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
            let survivors: Vec<usize> = order.iter().copied().filter(|&i| f.probs()[i] > 0.0).collect();
            prop_assert_eq!(&survivors[..], &order[..survivors.len()]);
            let prefix_mass: f64 = survivors.iter().map(|&i| probs[i]).sum();
            let shorter: f64 = survivors.iter().take(survivors.len() - 1).map(|&i| probs[i]).sum();
            prop_assert!(prefix_mass >= p - 1e-9);
            prop_assert!(shorter < p);
        }
    }
}
