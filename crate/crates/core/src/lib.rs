//! Desk-scale simulator for training-data leakage in federated language-model
//! fine-tuning.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`]: synthetic PII corpora, ingestion, tokenization, round planning
//! - [`lm`]: a fixed-context MLP language model with analytic gradients,
//!   AdamW, and nucleus-sampling decoders
//! - [`defense`]: DP gradient noise, KL update regularization, LoRA adapters
//! - [`fed`]: FedAvg orchestration and checkpoint retention
//! - [`attack`]: zero-input / partial-input extraction, basic and enhanced
//!   (round-difference) decoding, synonym perturbation
//! - [`metrics`]: ROUGE, top-k aggregates, quantiles, PII recovery, paired t-tests

pub mod attack;
pub mod corpus;
pub mod defense;
mod error;
pub mod fed;
pub mod lm;
pub mod metrics;
pub mod rng;

pub use error::{Error, Result};
