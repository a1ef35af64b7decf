//! Forward pass and exact backpropagation.
//!
//! One routine serves every training objective: plain cross-entropy, the
//! KL-regularized variant (an extra term against a frozen reference model),
//! and LoRA mode, where gradients are taken with respect to the adapter
//! vector instead of the base parameters.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::TokenId;
use crate::defense::LoraAdapters;
use crate::{Error, Result};

use super::ModelParams;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub context: Vec<TokenId>,
    pub target: TokenId,
}

/// Inverted dropout on adapter-branch inputs.
pub(crate) struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

#[derive(Default)]
pub(crate) struct Objective<'a> {
    pub lora: Option<&'a LoraAdapters>,
    /// Reference model and KL weight.
    pub reference: Option<(&'a ModelParams, f64)>,
    pub dropout: Option<Dropout<'a>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LossParts {
    pub total: f64,
    pub cross_entropy: f64,
    pub kl: f64,
}

struct AdapterTrace {
    keep: Vec<f64>,
    x_drop: Vec<f64>,
    u: Vec<f64>,
}

struct Trace {
    /// Input of each dense layer; `inputs[0]` is the concatenated embedding.
    inputs: Vec<Vec<f64>>,
    adapters: Vec<Option<AdapterTrace>>,
    logits: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

fn embed(params: &ModelParams, context: &[TokenId]) -> Result<Vec<f64>> {
    let layout = params.layout();
    if context.len() != layout.context_len {
        return Err(Error::Shape(format!(
            "context has {} tokens, model expects {}",
            context.len(),
            layout.context_len
        )));
    }
    let d = layout.embed_dim;
    let mut x = Vec::with_capacity(context.len() * d);
    for &tok in context {
        let t = tok as usize;
        if t >= layout.vocab_size {
            return Err(Error::TokenOutOfRange {
                id: t,
                size: layout.vocab_size,
            });
        }
        x.extend_from_slice(&params.flat[t * d..(t + 1) * d]);
    }
    Ok(x)
}

fn forward_trace(
    params: &ModelParams,
    lora: Option<&LoraAdapters>,
    context: &[TokenId],
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<Trace> {
    let layout = params.layout();
    let n_layers = layout.dense.len();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut adapters = Vec::with_capacity(n_layers);
    let mut x = embed(params, context)?;
    for (l, d) in layout.dense.iter().enumerate() {
        let w = &params.flat[d.weight_range()];
        let b = &params.flat[d.bias_range()];
        let mut z: Vec<f64> = (0..d.out_dim)
            .map(|o| b[o] + dot(&w[o * d.in_dim..(o + 1) * d.in_dim], &x))
            .collect();
        let block = lora.and_then(|a| a.block(l).map(|blk| (a, blk)));
        let trace = match block {
            Some((ad, blk)) => {
                let keep: Vec<f64> = match dropout.as_deref_mut() {
                    Some(dr) if dr.rate > 0.0 => {
                        let scale = 1.0 / (1.0 - dr.rate);
                        (0..d.in_dim)
                            .map(|_| if dr.rng.random::<f64>() < dr.rate { 0.0 } else { scale })
                            .collect()
                    }
                    _ => vec![1.0; d.in_dim],
                };
                let x_drop: Vec<f64> = x.iter().zip(&keep).map(|(a, k)| a * k).collect();
                let a_mat = ad.a(blk);
                let u: Vec<f64> = (0..ad.rank())
                    .map(|j| dot(&a_mat[j * d.in_dim..(j + 1) * d.in_dim], &x_drop))
                    .collect();
                let b_mat = ad.b(blk);
                let s = ad.scale();
                for (o, zo) in z.iter_mut().enumerate() {
                    *zo += s * dot(&b_mat[o * ad.rank()..(o + 1) * ad.rank()], &u);
                }
                Some(AdapterTrace { keep, x_drop, u })
            }
            None => None,
        };
        adapters.push(trace);
        if l + 1 < n_layers {
            z.iter_mut().for_each(|v| *v = v.tanh());
        }
        inputs.push(std::mem::replace(&mut x, z));
    }
    Ok(Trace {
        inputs,
        adapters,
        logits: x,
    })
}

/// Vocabulary logits for a context of exactly K token ids.
pub fn forward_logits(params: &ModelParams, context: &[TokenId]) -> Result<Vec<f64>> {
    Ok(forward_trace(params, None, context, None)?.logits)
}

fn backward(
    params: &ModelParams,
    lora: Option<&LoraAdapters>,
    context: &[TokenId],
    trace: &Trace,
    dlogits: Vec<f64>,
    grad: &mut [f64],
) {
    let layout = params.layout();
    let mut delta = dlogits;
    for l in (0..layout.dense.len()).rev() {
        let d = &layout.dense[l];
        let x = &trace.inputs[l];
        let w = &params.flat[d.weight_range()];
        let mut du: Option<Vec<f64>> = None;
        match (lora, &trace.adapters[l]) {
            (Some(ad), Some(at)) => {
                let blk = ad.block(l).expect("traced layer has an adapter");
                let r = ad.rank();
                let s = ad.scale();
                let b_mat = ad.b(blk);
                let (ga, gb) = ad.grad_slices(blk, grad);
                let mut dus = vec![0.0; r];
                for (o, &dl) in delta.iter().enumerate() {
                    if dl == 0.0 {
                        continue;
                    }
                    axpy(s * dl, &at.u, &mut gb[o * r..(o + 1) * r]);
                    axpy(s * dl, &b_mat[o * r..(o + 1) * r], &mut dus);
                }
                for (j, &duj) in dus.iter().enumerate() {
                    axpy(duj, &at.x_drop, &mut ga[j * d.in_dim..(j + 1) * d.in_dim]);
                }
                du = Some(dus);
            }
            (None, _) => {
                let gw = &mut grad[d.weight_range()];
                for (o, &dl) in delta.iter().enumerate() {
                    axpy(dl, x, &mut gw[o * d.in_dim..(o + 1) * d.in_dim]);
                }
                axpy(1.0, &delta, &mut grad[d.bias_range()]);
            }
            (Some(_), None) => {}
        }

        let needs_dx = l > 0 || lora.is_none();
        if !needs_dx {
            break;
        }
        let mut dx = vec![0.0; d.in_dim];
        for (o, &dl) in delta.iter().enumerate() {
            if dl != 0.0 {
                axpy(dl, &w[o * d.in_dim..(o + 1) * d.in_dim], &mut dx);
            }
        }
        if let (Some(ad), Some(dus), Some(at)) = (lora, du, &trace.adapters[l]) {
            let a_mat = ad.a(ad.block(l).expect("adapter"));
            let mut dxd = vec![0.0; d.in_dim];
            for (j, &duj) in dus.iter().enumerate() {
                axpy(duj, &a_mat[j * d.in_dim..(j + 1) * d.in_dim], &mut dxd);
            }
            for ((g, v), k) in dx.iter_mut().zip(&dxd).zip(&at.keep) {
                *g += v * k;
            }
        }
        if l > 0 {
            // x is the tanh output of the layer below.
            for (g, h) in dx.iter_mut().zip(x) {
                *g *= 1.0 - h * h;
            }
            delta = dx;
        } else {
            let e = layout.embed_dim;
            for (k, &tok) in context.iter().enumerate() {
                let row = tok as usize * e;
                axpy(1.0, &dx[k * e..(k + 1) * e], &mut grad[row..row + e]);
            }
        }
    }
}

/// Mean objective over the batch and its exact gradient. The gradient is
/// with respect to `obj.lora`'s adapter vector when present, otherwise with
/// respect to `params.flat`.
pub(crate) fn evaluate(
    params: &ModelParams,
    batch: &[Example],
    mut obj: Objective<'_>,
) -> Result<(LossParts, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Config("batch must be non-empty".into()));
    }
    let n_grad = obj.lora.map_or(params.len(), |a| a.flat.len());
    let mut grad = vec![0.0; n_grad];
    let inv_n = 1.0 / batch.len() as f64;
    let mut ce_sum = 0.0;
    let mut kl_sum = 0.0;
    for ex in batch {
        let trace = forward_trace(params, obj.lora, &ex.context, obj.dropout.as_mut())?;
        let target = ex.target as usize;
        if target >= trace.logits.len() {
            return Err(Error::TokenOutOfRange {
                id: target,
                size: trace.logits.len(),
            });
        }
        let logp = log_softmax(&trace.logits);
        let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        ce_sum -= logp[target];
        let mut dlogits: Vec<f64> = p.iter().map(|pi| pi * inv_n).collect();
        dlogits[target] -= inv_n;

        if let Some((reference, mu)) = obj.reference {
            if mu != 0.0 {
                let logq = log_softmax(&forward_logits(reference, &ex.context)?);
                let gap: Vec<f64> = logp.iter().zip(&logq).map(|(a, b)| a - b).collect();
                let kl: f64 = p.iter().zip(&gap).map(|(pi, g)| pi * g).sum();
                kl_sum += kl;
                let c = mu * inv_n;
                for ((dl, pi), g) in dlogits.iter_mut().zip(&p).zip(&gap) {
                    *dl += c * pi * (g - kl);
                }
            }
        }
        backward(params, obj.lora, &ex.context, &trace, dlogits, &mut grad);
    }
    let cross_entropy = ce_sum * inv_n;
    let kl = kl_sum * inv_n;
    let mu = obj.reference.map_or(0.0, |(_, m)| m);
    let total = if mu != 0.0 { cross_entropy + mu * kl } else { cross_entropy };
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    Ok((
        LossParts {
            total,
            cross_entropy,
            kl,
        },
        grad,
    ))
}

/// Mean next-token cross-entropy over `batch` and its exact gradient.
pub fn loss_and_grad(params: &ModelParams, batch: &[Example]) -> Result<(f64, Vec<f64>)> {
    let (loss, grad) = evaluate(params, batch, Objective::default())?;
    Ok((loss.total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{init_model, ModelConfig};
    use rand::SeedableRng;

    fn small(seed: u64) -> ModelParams {
        init_model(&ModelConfig {
            context_len: 3,
            embed_dim: 4,
            hidden_dims: vec![6, 5],
            vocab_size: 9,
            seed,
        })
        .unwrap()
    }

    fn batch() -> Vec<Example> {
        vec![
            Example {
                context: vec![0, 1, 4],
                target: 5,
            },
            Example {
                context: vec![1, 4, 5],
                target: 8,
            },
            Example {
                context: vec![4, 5, 8],
                target: 2,
            },
        ]
    }

    #[test]
    fn zero_params_give_zero_logits_and_log_v_loss() {
        let p = ModelParams::zeros(small(0).config().clone()).unwrap();
        assert!(forward_logits(&p, &[0, 1, 2]).unwrap().iter().all(|&l| l == 0.0));
        let (loss, _) = loss_and_grad(&p, &batch()).unwrap();
        assert!((loss - 9f64.ln()).abs() < 1e-12);
    }

    /// Independent forward pass written with explicit index arithmetic.
    fn oracle_logits(p: &ModelParams, ctx: &[TokenId]) -> Vec<f64> {
        let c = p.config();
        let f = &p.flat;
        let mut x: Vec<f64> = Vec::new();
        for &t in ctx {
            for j in 0..c.embed_dim {
                x.push(f[t as usize * c.embed_dim + j]);
            }
        }
        let mut off = c.vocab_size * c.embed_dim;
        let dims: Vec<usize> = c.hidden_dims.iter().copied().chain([c.vocab_size]).collect();
        for (li, &out) in dims.iter().enumerate() {
            let inp = x.len();
            let mut y = vec![0.0; out];
            for (o, yo) in y.iter_mut().enumerate() {
                let mut s = f[off + out * inp + o];
                for i in 0..inp {
                    s += f[off + o * inp + i] * x[i];
                }
                *yo = if li + 1 < dims.len() { s.tanh() } else { s };
            }
            off += out * inp + out;
            x = y;
        }
        x
    }

    #[test]
    fn forward_matches_index_oracle() {
        let p = small(4);
        for ex in batch() {
            let got = forward_logits(&p, &ex.context).unwrap();
            let want = oracle_logits(&p, &ex.context);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_range_token_errors() {
        let p = small(0);
        assert!(matches!(
            forward_logits(&p, &[0, 1, 99]),
            Err(Error::TokenOutOfRange { id: 99, .. })
        ));
        assert!(forward_logits(&p, &[0, 1]).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut p = small(2);
        let (_, grad) = loss_and_grad(&p, &batch()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-5;
        for _ in 0..20 {
            let i = rng.random_range(0..p.len());
            let orig = p.flat[i];
            p.flat[i] = orig + h;
            let (lp, _) = loss_and_grad(&p, &batch()).unwrap();
            p.flat[i] = orig - h;
            let (lm, _) = loss_and_grad(&p, &batch()).unwrap();
            p.flat[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(grad[i].abs()).max(1e-8);
            assert!((fd - grad[i]).abs() / denom < 1e-4, "coord {i}: fd {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn duplicated_batch_matches_singleton() {
        let p = small(3);
        let one = vec![batch()[0].clone()];
        let two = vec![batch()[0].clone(), batch()[0].clone()];
        let (l1, g1) = loss_and_grad(&p, &one).unwrap();
        let (l2, g2) = loss_and_grad(&p, &two).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_batch_rejected() {
        assert!(loss_and_grad(&small(0), &[]).is_err());
    }

    #[test]
    fn perfect_predictor_has_near_zero_loss() {
        let mut p = ModelParams::zeros(small(0).config().clone()).unwrap();
        let out = p.layout().dense.last().unwrap().bias_range();
        p.flat[out.start + 5] = 60.0;
        let (loss, _) = loss_and_grad(&p, &batch()[..1]).unwrap();
        assert!(loss < 1e-20);
    }
}
