//! Extraction attacks against global checkpoints.
//!
//! Two tasks (zero-input generation from [BOS], partial-input completion of
//! a document prefix, optionally with a synonym-perturbed prefix) and two
//! decoding schemes (plain nucleus sampling, and the round-difference
//! scheme that reweights the current model's nucleus by how much each
//! token's probability grew since the previous round).

mod enhanced;
mod perturb;
mod tasks;

use serde::{Deserialize, Serialize};

use crate::lm::ModelParams;
use crate::{Error, Result};

pub use enhanced::{basic_generate, enhanced_generate, enhanced_next_dist, fuse_difference};
pub use perturb::{perturb_input, PerturbConfig, PerturbOutcome, Perturber};
pub use tasks::{
    partial_input_attack, pii_probes, prefix_len, select_documents, zero_input_attack, AttackRecord,
    AttackSample, PartialTarget,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Basic,
    Enhanced,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Basic => "basic",
            Scheme::Enhanced => "enhanced",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    ZeroInput,
    PartialInput,
    /// Partial-input completion with a synonym-perturbed prefix.
    DisturbedInput,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::ZeroInput => "zero_input",
            Task::PartialInput => "partial_input",
            Task::DisturbedInput => "disturbed_input",
        }
    }

    fn code(self) -> u64 {
        match self {
            Task::ZeroInput => 0,
            Task::PartialInput => 1,
            Task::DisturbedInput => 2,
        }
    }
}

/// Where the round difference is taken.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifferenceSpace {
    /// `pi_T - pi_{T-1}` on unit-temperature next-token probabilities.
    #[default]
    Probability,
    /// Difference of raw logits.
    Logit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub scheme: Scheme,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    /// Softmax temperature applied to the round difference.
    #[serde(default = "default_tau")]
    pub temperature: f64,
    /// Temperature of the next-token distribution that nucleus filtering
    /// and sampling operate on.
    #[serde(default = "default_one")]
    pub sampling_temperature: f64,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_prefix_fraction")]
    pub prefix_fraction: f64,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default)]
    pub difference_space: DifferenceSpace,
}

fn default_top_p() -> f64 {
    0.9
}

fn default_tau() -> f64 {
    0.5
}

fn default_one() -> f64 {
    1.0
}

fn default_n_samples() -> usize {
    30
}

fn default_prefix_fraction() -> f64 {
    0.8
}

fn default_max_len() -> usize {
    64
}

impl AttackConfig {
    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            top_p: default_top_p(),
            temperature: default_tau(),
            sampling_temperature: default_one(),
            n_samples: default_n_samples(),
            prefix_fraction: default_prefix_fraction(),
            max_len: default_max_len(),
            difference_space: DifferenceSpace::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config(format!("attack.top_p must be in (0, 1], got {}", self.top_p)));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config("attack.temperature must be > 0".into()));
        }
        if !(self.sampling_temperature > 0.0) {
            return Err(Error::Config("attack.sampling_temperature must be > 0".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::Config("attack.n_samples must be >= 1".into()));
        }
        if !(self.prefix_fraction > 0.0 && self.prefix_fraction < 1.0) {
            return Err(Error::Config(format!(
                "attack.prefix_fraction must be in (0, 1), got {}",
                self.prefix_fraction
            )));
        }
        if self.max_len == 0 {
            return Err(Error::Config("attack.max_len must be >= 1".into()));
        }
        Ok(())
    }
}

/// A global model tagged with the round that produced it.
#[derive(Debug, Clone, Copy)]
pub struct ModelAt<'a> {
    pub round: usize,
    pub params: &'a ModelParams,
}

/// The decoder an attack uses: the current model alone, or the current
/// model paired with its predecessor.
#[derive(Debug, Clone, Copy)]
pub struct Target<'a> {
    pub current: ModelAt<'a>,
    pub previous: Option<ModelAt<'a>>,
}

impl<'a> Target<'a> {
    fn check(&self, scheme: Scheme) -> Result<Option<ModelAt<'a>>> {
        match (scheme, self.previous) {
            (Scheme::Basic, _) => Ok(None),
            (Scheme::Enhanced, None) => Err(Error::Attack(format!(
                "enhanced scheme needs the checkpoint before round {}",
                self.current.round
            ))),
            (Scheme::Enhanced, Some(prev)) => {
                if prev.round + 1 != self.current.round {
                    return Err(Error::Attack(format!(
                        "checkpoints {} and {} are not consecutive",
                        prev.round, self.current.round
                    )));
                }
                if prev.params.layout() != self.current.params.layout() {
                    return Err(Error::Attack("checkpoint shapes differ".into()));
                }
                Ok(Some(prev))
            }
        }
    }
}
