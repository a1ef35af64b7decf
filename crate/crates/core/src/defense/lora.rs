//! Low-rank adapters on the dense layers.
//!
//! Each adapted layer gains `W' = W + (alpha / r) * B * A` with `A` (r x in)
//! initialized small and `B` (out x r) initialized to zero, so training
//! starts exactly at the base model. The embedding table, every base weight
//! and every bias stay frozen.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lm::net::{evaluate, Dropout, Objective};
use crate::lm::{adamw_step, Example, ModelParams, OptimizerState};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

use super::KlRegularizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoraConfig {
    pub rank: usize,
    pub alpha: f64,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    /// Dense-layer indices to adapt (the output projection is the last);
    /// all dense layers when absent.
    #[serde(default)]
    pub layers: Option<Vec<usize>>,
}

fn default_dropout() -> f64 {
    0.1
}

impl LoraConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Config("defense.lora.rank must be >= 1".into()));
        }
        if !self.alpha.is_finite() {
            return Err(Error::Config("defense.lora.alpha must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("defense.lora.dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// `W + (alpha / r) * B * A` for `W` out x in, `A` r x in, `B` out x r.
pub fn lora_effective_weight(w: &Matrix, a: &Matrix, b: &Matrix, r: usize, alpha: f64) -> Result<Matrix> {
    if a.rows != r || b.cols != r || a.cols != w.cols || b.rows != w.rows {
        return Err(Error::Shape(format!(
            "W {}x{}, A {}x{}, B {}x{} incompatible with rank {r}",
            w.rows, w.cols, a.rows, a.cols, b.rows, b.cols
        )));
    }
    let s = alpha / r as f64;
    let mut out = w.clone();
    for i in 0..w.rows {
        for j in 0..w.cols {
            let ba: f64 = (0..r).map(|k| b.get(i, k) * a.get(k, j)).sum();
            out.data[i * w.cols + j] += s * ba;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct AdapterBlock {
    layer: usize,
    in_dim: usize,
    out_dim: usize,
    /// Offset of `A` (rank x in_dim) in the adapter vector.
    a: usize,
    /// Offset of `B` (out_dim x rank).
    b: usize,
}

/// Flat adapter vector for every adapted dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapters {
    rank: usize,
    alpha: f64,
    blocks: Vec<AdapterBlock>,
    pub flat: Vec<f64>,
}

impl LoraAdapters {
    /// `A` entries uniform in `±1/sqrt(in_dim)`, `B` zero.
    pub fn init(base: &ModelParams, cfg: &LoraConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let dense = &base.layout().dense;
        let layers: Vec<usize> = match &cfg.layers {
            Some(ls) => ls.clone(),
            None => (0..dense.len()).collect(),
        };
        let mut blocks = Vec::with_capacity(layers.len());
        let mut offset = 0;
        for &layer in &layers {
            let d = dense.get(layer).ok_or_else(|| {
                Error::Config(format!("defense.lora.layers: no dense layer {layer}"))
            })?;
            if cfg.rank > d.in_dim.min(d.out_dim) {
                return Err(Error::Config(format!(
                    "defense.lora.rank {} exceeds min dimension {} of layer {layer}",
                    cfg.rank,
                    d.in_dim.min(d.out_dim)
                )));
            }
            let a = offset;
            let b = a + cfg.rank * d.in_dim;
            offset = b + d.out_dim * cfg.rank;
            blocks.push(AdapterBlock {
                layer,
                in_dim: d.in_dim,
                out_dim: d.out_dim,
                a,
                b,
            });
        }
        let mut flat = vec![0.0; offset];
        let mut rng = stream_rng(seed, Stream::ModelInit, &[u64::from(b'L')]);
        for blk in &blocks {
            let bound = 1.0 / (blk.in_dim as f64).sqrt();
            for x in &mut flat[blk.a..blk.b] {
                *x = rng.random_range(-bound..bound);
            }
        }
        Ok(Self {
            rank: cfg.rank,
            alpha: cfg.alpha,
            blocks,
            flat,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    /// Same rank, scale and block layout.
    pub fn same_shape(&self, other: &LoraAdapters) -> bool {
        self.rank == other.rank && self.alpha == other.alpha && self.blocks == other.blocks
    }

    pub(crate) fn block(&self, layer: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.layer == layer)
    }

    pub(crate) fn a(&self, blk: usize) -> &[f64] {
        let b = &self.blocks[blk];
        &self.flat[b.a..b.b]
    }

    pub(crate) fn b(&self, blk: usize) -> &[f64] {
        let b = &self.blocks[blk];
        &self.flat[b.b..b.b + b.out_dim * self.rank]
    }

    /// Disjoint mutable views of the `A` and `B` gradient blocks.
    pub(crate) fn grad_slices<'g>(&self, blk: usize, grad: &'g mut [f64]) -> (&'g mut [f64], &'g mut [f64]) {
        let b = &self.blocks[blk];
        let (head, tail) = grad[b.a..b.b + b.out_dim * self.rank].split_at_mut(b.b - b.a);
        (head, tail)
    }

    /// Base parameters with every adapter folded into its weight matrix.
    pub fn merge(&self, base: &ModelParams) -> ModelParams {
        let mut out = base.clone();
        let s = self.scale();
        let r = self.rank;
        for (i, blk) in self.blocks.iter().enumerate() {
            let d = base.layout().dense[blk.layer];
            let (a, b) = (self.a(i), self.b(i));
            let w = &mut out.flat[d.weight_range()];
            for o in 0..blk.out_dim {
                let b_row = &b[o * r..(o + 1) * r];
                if b_row.iter().all(|&x| x == 0.0) {
                    continue;
                }
                let w_row = &mut w[o * blk.in_dim..(o + 1) * blk.in_dim];
                for (k, &bk) in b_row.iter().enumerate() {
                    let a_row = &a[k * blk.in_dim..(k + 1) * blk.in_dim];
                    for (wj, aj) in w_row.iter_mut().zip(a_row) {
                        *wj += s * bk * aj;
                    }
                }
            }
        }
        out
    }
}

/// Loss and gradient with respect to the adapter vector. `dropout` is the
/// training-mode mask source; `None` evaluates deterministically.
pub fn lora_loss_and_grad(
    base: &ModelParams,
    adapters: &LoraAdapters,
    batch: &[Example],
    dropout: Option<(f64, &mut ChaCha8Rng)>,
    kl: Option<&KlRegularizer<'_>>,
) -> Result<(f64, Vec<f64>)> {
    let (loss, grad) = evaluate(
        base,
        batch,
        Objective {
            lora: Some(adapters),
            reference: kl.map(|k| (k.reference, k.mu)),
            dropout: dropout.map(|(rate, rng)| Dropout { rate, rng }),
        },
    )?;
    Ok((loss.total, grad))
}

/// One AdamW step on the adapters; the base parameters are only read.
pub fn lora_train_step(
    base: &ModelParams,
    adapters: &mut LoraAdapters,
    batch: &[Example],
    dropout: Option<(f64, &mut ChaCha8Rng)>,
    state: &mut OptimizerState,
) -> Result<f64> {
    let (loss, mut grad) = lora_loss_and_grad(base, adapters, batch, dropout, None)?;
    adamw_step(&mut adapters.flat, &mut grad, state);
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{forward_logits, init_model, AdamWConfig, ModelConfig};
    use rand::SeedableRng;

    fn base() -> ModelParams {
        init_model(&ModelConfig {
            context_len: 2,
            embed_dim: 3,
            hidden_dims: vec![5],
            vocab_size: 7,
            seed: 11,
        })
        .unwrap()
    }

    fn cfg(dropout: f64) -> LoraConfig {
        LoraConfig {
            rank: 2,
            alpha: 4.0,
            dropout,
            layers: None,
        }
    }

    fn batch() -> Vec<Example> {
        vec![
            Example {
                context: vec![1, 4],
                target: 5,
            },
            Example {
                context: vec![4, 5],
                target: 6,
            },
        ]
    }

    /// Adapters with random non-zero `B` so gradients reach `A` too.
    fn warmed(base: &ModelParams) -> LoraAdapters {
        let mut ad = LoraAdapters::init(base, &cfg(0.0), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for i in 0..ad.blocks.len() {
            let blk = ad.blocks[i];
            let n = blk.out_dim * ad.rank;
            for x in &mut ad.flat[blk.b..blk.b + n] {
                *x = rng.random_range(-0.5..0.5);
            }
        }
        ad
    }

    #[test]
    fn effective_weight_examples() {
        let w = Matrix::new(2, 2, vec![0.0; 4]).unwrap();
        let a = Matrix::from_rows(&[&[1.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[&[1.0], &[0.0]]).unwrap();
        let out = lora_effective_weight(&w, &a, &b, 1, 2.0).unwrap();
        assert_eq!(out.data, [2.0, 2.0, 0.0, 0.0]);

        let zero_b = Matrix::new(2, 1, vec![0.0; 2]).unwrap();
        let w2 = Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(lora_effective_weight(&w2, &a, &zero_b, 1, 2.0).unwrap(), w2);

        // Doubling alpha and r with the same product B*A keeps alpha/r.
        let a2 = Matrix::from_rows(&[&[1.0, 1.0], &[0.0, 0.0]]).unwrap();
        let b2 = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]).unwrap();
        assert_eq!(lora_effective_weight(&w, &a2, &b2, 2, 4.0).unwrap(), out);

        assert!(lora_effective_weight(&w, &a, &b, 2, 2.0).is_err());
    }

    #[test]
    fn fresh_adapters_leave_model_unchanged() {
        let base = base();
        let ad = LoraAdapters::init(&base, &cfg(0.1), 1).unwrap();
        assert_eq!(ad.merge(&base), base);
    }

    #[test]
    fn rank_above_min_dimension_rejected() {
        let base = base();
        let bad = LoraConfig { rank: 6, ..cfg(0.0) };
        assert!(LoraAdapters::init(&base, &bad, 0).is_err());
    }

    #[test]
    fn merged_forward_matches_adapter_forward() {
        let base = base();
        let ad = warmed(&base);
        let merged = ad.merge(&base);
        // Adapter path loss without dropout equals plain loss on merged weights.
        let (la, _) = lora_loss_and_grad(&base, &ad, &batch(), None, None).unwrap();
        let (lm, _) = crate::lm::loss_and_grad(&merged, &batch()).unwrap();
        assert!((la - lm).abs() < 1e-12);
        // Matrix-level check against lora_effective_weight.
        let d = base.layout().dense[0];
        let w = Matrix::new(d.out_dim, d.in_dim, base.flat[d.weight_range()].to_vec()).unwrap();
        let a = Matrix::new(2, d.in_dim, ad.a(0).to_vec()).unwrap();
        let b = Matrix::new(d.out_dim, 2, ad.b(0).to_vec()).unwrap();
        let eff = lora_effective_weight(&w, &a, &b, 2, 4.0).unwrap();
        for (x, y) in eff.data.iter().zip(&merged.flat[d.weight_range()]) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(forward_logits(&merged, &[1, 4]).is_ok());
    }

    #[test]
    fn adapter_gradient_matches_finite_differences() {
        let base = base();
        let mut ad = warmed(&base);
        let (_, g) = lora_loss_and_grad(&base, &ad, &batch(), None, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-5;
        for _ in 0..20 {
            let i = rng.random_range(0..ad.len());
            let orig = ad.flat[i];
            ad.flat[i] = orig + h;
            let lp = lora_loss_and_grad(&base, &ad, &batch(), None, None).unwrap().0;
            ad.flat[i] = orig - h;
            let lm = lora_loss_and_grad(&base, &ad, &batch(), None, None).unwrap().0;
            ad.flat[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(g[i].abs()).max(1e-8);
            assert!((fd - g[i]).abs() / denom < 1e-4, "coord {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn base_frozen_across_steps() {
        let base = base();
        let snapshot = base.flat.clone();
        let mut ad = LoraAdapters::init(&base, &cfg(0.1), 4).unwrap();
        let before = ad.flat.clone();
        let mut st = OptimizerState::new(
            AdamWConfig {
                lr: 0.01,
                ..AdamWConfig::default()
            },
            ad.len(),
            0,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            lora_train_step(&base, &mut ad, &batch(), Some((0.1, &mut rng)), &mut st).unwrap();
        }
        assert_eq!(base.flat, snapshot);
        assert_ne!(ad.flat, before);
    }

    #[test]
    fn zero_dropout_is_deterministic() {
        let base = base();
        let ad = warmed(&base);
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        let a = lora_loss_and_grad(&base, &ad, &batch(), Some((0.0, &mut r1)), None).unwrap();
        let b = lora_loss_and_grad(&base, &ad, &batch(), Some((0.0, &mut r2)), None).unwrap();
        let c = lora_loss_and_grad(&base, &ad, &batch(), None, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }
}
