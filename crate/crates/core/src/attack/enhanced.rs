use rand::Rng;

use crate::corpus::{TokenId, PAD};
use crate::lm::{
    context_window, decode_loop, forward_logits, generate, next_distribution, sample_token, softmax, top_p_filter,
    GenConfig, ModelParams, ProbDist,
};
use crate::{Error, Result};

use super::{AttackConfig, DifferenceSpace, ModelAt, Scheme, Target};

/// Reweights the nucleus of `pi_t` by `softmax(delta / tau)` and
/// renormalizes. Tokens pruned by the nucleus stay pruned.
pub fn fuse_difference(delta: &[f64], pi_t: &ProbDist, top_p: f64, tau: f64) -> Result<ProbDist> {
    if delta.len() != pi_t.len() {
        return Err(Error::Attack(format!(
            "vocabulary mismatch: {} differences for {} tokens",
            delta.len(),
            pi_t.len()
        )));
    }
    let nucleus = top_p_filter(pi_t, top_p);
    // A constant difference gives uniform weights, which fusion ignores.
    if delta.iter().all(|d| *d == delta[0]) {
        return Ok(nucleus);
    }
    let w = softmax(delta, tau)?;
    let fused: Vec<f64> = w.probs().iter().zip(nucleus.probs()).map(|(a, b)| a * b).collect();
    ProbDist::from_weights(fused).map_err(|_| Error::Attack("fused distribution has no mass".into()))
}

/// `renormalize(softmax((pi_t - pi_prev) / tau) * top_p(pi_t))`.
pub fn enhanced_next_dist(pi_t: &ProbDist, pi_prev: &ProbDist, top_p: f64, tau: f64) -> Result<ProbDist> {
    if pi_t.len() != pi_prev.len() {
        return Err(Error::Attack(format!(
            "vocabulary mismatch: {} vs {} tokens",
            pi_t.len(),
            pi_prev.len()
        )));
    }
    let delta: Vec<f64> = pi_t.probs().iter().zip(pi_prev.probs()).map(|(a, b)| a - b).collect();
    fuse_difference(&delta, pi_t, top_p, tau)
}

fn gen_config(cfg: &AttackConfig) -> GenConfig {
    GenConfig {
        top_p: cfg.top_p,
        temperature: cfg.sampling_temperature,
        max_len: cfg.max_len,
    }
}

/// Nucleus sampling from the current global model.
pub fn basic_generate<R: Rng + ?Sized>(
    params: &ModelParams,
    prompt: &[TokenId],
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<Vec<TokenId>> {
    generate(params, prompt, &gen_config(cfg), rng)
}

/// Next-token distribution of the round-difference decoder.
pub(crate) fn enhanced_step(
    current: &ModelParams,
    previous: &ModelParams,
    seq: &[TokenId],
    cfg: &AttackConfig,
) -> Result<ProbDist> {
    let pi_t = next_distribution(current, seq, cfg.sampling_temperature)?;
    let delta: Vec<f64> = match cfg.difference_space {
        DifferenceSpace::Probability => {
            let unit_t = if cfg.sampling_temperature == 1.0 {
                pi_t.clone()
            } else {
                next_distribution(current, seq, 1.0)?
            };
            let unit_prev = next_distribution(previous, seq, 1.0)?;
            unit_t.probs().iter().zip(unit_prev.probs()).map(|(a, b)| a - b).collect()
        }
        DifferenceSpace::Logit => {
            let ctx = context_window(seq, seq.len(), current.config().context_len);
            let mut d: Vec<f64> = forward_logits(current, &ctx)?
                .iter()
                .zip(forward_logits(previous, &ctx)?)
                .map(|(a, b)| a - b)
                .collect();
            // PAD is never sampled; keep it from breaking a constant difference.
            d[PAD as usize] = d.get(1).copied().unwrap_or(0.0);
            d
        }
    };
    fuse_difference(&delta, &pi_t, cfg.top_p, cfg.temperature)
}

/// Autoregressive sampling from the fused distribution of two consecutive
/// checkpoints evaluated on the same context.
pub fn enhanced_generate<R: Rng + ?Sized>(
    current: ModelAt<'_>,
    previous: ModelAt<'_>,
    prompt: &[TokenId],
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<Vec<TokenId>> {
    let target = Target {
        current,
        previous: Some(previous),
    };
    target.check(Scheme::Enhanced)?;
    if cfg.max_len == 0 {
        return Err(Error::Config("max_len must be >= 1".into()));
    }
    decode_loop(prompt, cfg.max_len, |seq| {
        let dist = enhanced_step(current.params, previous.params, seq, cfg)?;
        Ok(sample_token(&dist, rng))
    })
}

/// Dispatches on `cfg.scheme`.
pub(crate) fn run_scheme<R: Rng + ?Sized>(
    target: &Target<'_>,
    prompt: &[TokenId],
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<Vec<TokenId>> {
    match target.check(cfg.scheme)? {
        None => basic_generate(target.current.params, prompt, cfg, rng),
        Some(prev) => enhanced_generate(target.current, prev, prompt, cfg, rng),
    }
}
