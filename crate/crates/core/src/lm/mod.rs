//! Fixed-context MLP language model.
//!
//! The K previous token embeddings are concatenated, passed through tanh
//! dense layers and projected to vocabulary logits. All arithmetic is `f64`.

mod checkpoint;
mod decode;
pub(crate) mod net;
mod optim;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, BOS, EOS, PAD};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use decode::{generate, sample_token, softmax, top_p_filter, GenConfig, ProbDist};
pub use net::{forward_logits, loss_and_grad, Example};
pub use optim::{adamw_step, AdamWConfig, LrSchedule, OptimizerState};
pub(crate) use decode::{decode_loop, next_distribution};
pub(crate) use optim::l2_norm;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub context_len: usize,
    pub embed_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub vocab_size: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.context_len == 0 {
            return Err(Error::Config("model.context_len must be >= 1".into()));
        }
        if self.embed_dim == 0 {
            return Err(Error::Config("model.embed_dim must be >= 1".into()));
        }
        if let Some(i) = self.hidden_dims.iter().position(|&h| h == 0) {
            return Err(Error::Config(format!("model.hidden_dims[{i}] must be >= 1")));
        }
        if self.vocab_size < 4 {
            return Err(Error::Config("model.vocab_size must be >= 4".into()));
        }
        Ok(())
    }
}

/// Offsets of one dense layer inside the flat vector. The weight block is
/// row-major `out_dim x in_dim`, followed by `out_dim` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseLayout {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: usize,
    pub bias: usize,
}

impl DenseLayout {
    pub fn weight_range(&self) -> std::ops::Range<usize> {
        self.weight..self.weight + self.in_dim * self.out_dim
    }

    pub fn bias_range(&self) -> std::ops::Range<usize> {
        self.bias..self.bias + self.out_dim
    }
}

/// Embedding table (`vocab x embed_dim`) at offset 0, then each hidden
/// layer, then the output projection (the last entry of `dense`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub context_len: usize,
    pub dense: Vec<DenseLayout>,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let mut offset = cfg.vocab_size * cfg.embed_dim;
        let mut in_dim = cfg.context_len * cfg.embed_dim;
        let mut dense = Vec::with_capacity(cfg.hidden_dims.len() + 1);
        for &out_dim in cfg.hidden_dims.iter().chain(std::iter::once(&cfg.vocab_size)) {
            let weight = offset;
            let bias = weight + in_dim * out_dim;
            dense.push(DenseLayout {
                in_dim,
                out_dim,
                weight,
                bias,
            });
            offset = bias + out_dim;
            in_dim = out_dim;
        }
        Self {
            vocab_size: cfg.vocab_size,
            embed_dim: cfg.embed_dim,
            context_len: cfg.context_len,
            dense,
            total: offset,
        }
    }
}

/// Flat parameter vector plus the shape metadata needed to interpret it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    layout: Layout,
    pub flat: Vec<f64>,
}

impl ModelParams {
    /// All-zero parameters; every forward pass yields zero logits.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let flat = vec![0.0; layout.total];
        Ok(Self {
            config,
            layout,
            flat,
        })
    }

    pub fn from_flat(config: ModelConfig, flat: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if flat.len() != layout.total {
            return Err(Error::Shape(format!(
                "flat vector has {} entries, layout needs {}",
                flat.len(),
                layout.total
            )));
        }
        Ok(Self {
            config,
            layout,
            flat,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.flat.iter().all(|x| x.is_finite())
    }

    /// Bias offsets, useful for checking initialization.
    pub fn bias_ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.layout.dense.iter().map(DenseLayout::bias_range)
    }
}

/// Uniform `±1/sqrt(fan_in)` weights with zero biases. Embedding rows use
/// `embed_dim` as their fan-in.
pub fn init_model(config: &ModelConfig) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(config.clone())?;
    let mut rng = stream_rng(config.seed, Stream::ModelInit, &[]);
    let layout = params.layout.clone();
    let emb_bound = 1.0 / (layout.embed_dim as f64).sqrt();
    for w in &mut params.flat[..layout.vocab_size * layout.embed_dim] {
        *w = rng.random_range(-emb_bound..emb_bound);
    }
    for d in &layout.dense {
        let bound = 1.0 / (d.in_dim as f64).sqrt();
        for w in &mut params.flat[d.weight_range()] {
            *w = rng.random_range(-bound..bound);
        }
    }
    Ok(params)
}

/// The K tokens preceding position `end`, left-padded with [PAD].
pub fn context_window(seq: &[TokenId], end: usize, k: usize) -> Vec<TokenId> {
    let start = end.saturating_sub(k);
    let mut ctx = vec![PAD; k - (end - start)];
    ctx.extend_from_slice(&seq[start..end]);
    ctx
}

/// Next-token examples for `[BOS] doc [EOS]`: one per document token plus
/// the closing [EOS].
pub fn document_examples(doc: &[TokenId], context_len: usize) -> Vec<Example> {
    let mut seq = Vec::with_capacity(doc.len() + 2);
    seq.push(BOS);
    seq.extend_from_slice(doc);
    seq.push(EOS);
    (1..seq.len())
        .map(|i| Example {
            context: context_window(&seq, i, context_len),
            target: seq[i],
        })
        .collect()
}
