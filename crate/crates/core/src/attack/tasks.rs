use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TokenId, Vocab, BOS};
use crate::metrics::{rouge_l, rouge_n, PiiProbe};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

use super::enhanced::run_scheme;
use super::{AttackConfig, Perturber, Scheme, Target, Task};

/// One generation and its leakage scores. Token sequences exclude [BOS]
/// and [EOS].
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSample {
    pub round: usize,
    pub task: Task,
    pub scheme: Scheme,
    pub sample_idx: usize,
    pub prompt: Vec<TokenId>,
    pub generated: Vec<TokenId>,
    /// Held-back suffix; empty for zero-input samples.
    pub truth: Vec<TokenId>,
    /// Highest-ROUGE-L training document (zero-input only).
    pub best_match_doc: Option<usize>,
    /// Source document of the prompt (partial-input tasks only).
    pub doc_id: Option<usize>,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
}

impl AttackSample {
    pub fn to_record(&self, vocab: &Vocab) -> Result<AttackRecord> {
        Ok(AttackRecord {
            round: self.round,
            task: self.task,
            scheme: self.scheme,
            sample_idx: self.sample_idx,
            prompt_text: vocab.decode(&self.prompt)?,
            generated_text: vocab.decode(&self.generated)?,
            truth_text: vocab.decode(&self.truth)?,
            best_match_id: self.best_match_doc,
            doc_id: self.doc_id,
            rouge1: self.rouge1,
            rouge2: self.rouge2,
            rouge_l: self.rouge_l,
        })
    }
}

/// The JSON-lines form of an [`AttackSample`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackRecord {
    pub round: usize,
    pub task: Task,
    pub scheme: Scheme,
    pub sample_idx: usize,
    pub prompt_text: String,
    pub generated_text: String,
    pub truth_text: String,
    pub best_match_id: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<usize>,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
}

fn sample_rng(seed: u64, round: usize, task: Task, idx: usize) -> rand_chacha::ChaCha8Rng {
    stream_rng(seed, Stream::AttackSample, &[round as u64, task.code(), idx as u64])
}

/// Highest ROUGE-L F1 over `docs`, ties to the lowest id.
fn best_match(generated: &[TokenId], docs: &[Vec<TokenId>]) -> (usize, f64) {
    let better = |a: (f64, usize), b: (f64, usize)| {
        if a.0 > b.0 || (a.0 == b.0 && a.1 < b.1) {
            a
        } else {
            b
        }
    };
    let (score, id) = docs
        .par_iter()
        .enumerate()
        .map(|(id, d)| (rouge_l(generated, d).f1, id))
        .reduce(|| (f64::NEG_INFINITY, usize::MAX), better);
    (id, score)
}

/// `n_samples` generations from [BOS], each scored against its best-matching
/// training document. `docs[i]` must be the encoding of document `i`.
///
/// Random streams depend on (seed, round, task, sample index) but not on
/// the scheme, so both schemes see the same uniforms.
pub fn zero_input_attack(
    target: Target<'_>,
    docs: &[Vec<TokenId>],
    cfg: &AttackConfig,
    seed: u64,
) -> Result<Vec<AttackSample>> {
    cfg.validate()?;
    target.check(cfg.scheme)?;
    if docs.is_empty() {
        return Err(Error::Attack("zero-input attack needs a non-empty corpus".into()));
    }
    let round = target.current.round;
    (0..cfg.n_samples)
        .into_par_iter()
        .map(|idx| {
            let mut rng = sample_rng(seed, round, Task::ZeroInput, idx);
            let generated = run_scheme(&target, &[BOS], cfg, &mut rng)?;
            let (doc, _) = best_match(&generated, docs);
            let reference = &docs[doc];
            Ok(AttackSample {
                round,
                task: Task::ZeroInput,
                scheme: cfg.scheme,
                sample_idx: idx,
                prompt: Vec::new(),
                truth: Vec::new(),
                best_match_doc: Some(doc),
                doc_id: None,
                rouge1: rouge_n(&generated, reference, 1).f1,
                rouge2: rouge_n(&generated, reference, 2).f1,
                rouge_l: rouge_l(&generated, reference).f1,
                generated,
            })
        })
        .collect()
}

/// `ceil(fraction * n)`, with a small slack against products such as
/// `0.3 * 10` landing just above an integer.
pub fn prefix_len(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64 - 1e-9).ceil().max(0.0)) as usize
}

/// A training document offered to the partial-input task.
#[derive(Debug, Clone, Copy)]
pub struct PartialTarget<'a> {
    pub doc_id: usize,
    pub tokens: &'a [TokenId],
}

/// Prompts with the first `ceil(prefix_fraction * len)` tokens of each
/// document and scores the completion against the remainder. With
/// `disturb`, the prefix is synonym-perturbed first and the task is
/// reported as disturbed-input. Documents too short to split are skipped.
pub fn partial_input_attack(
    target: Target<'_>,
    docs: &[PartialTarget<'_>],
    cfg: &AttackConfig,
    disturb: Option<(&Perturber, &Vocab)>,
    seed: u64,
) -> Result<Vec<AttackSample>> {
    cfg.validate()?;
    target.check(cfg.scheme)?;
    let round = target.current.round;
    let task = if disturb.is_some() {
        Task::DisturbedInput
    } else {
        Task::PartialInput
    };
    let results: Vec<Option<AttackSample>> = docs
        .par_iter()
        .enumerate()
        .map(|(idx, d)| {
            let k = prefix_len(d.tokens.len(), cfg.prefix_fraction);
            if k == 0 || k >= d.tokens.len() {
                log::warn!(
                    "document {} has {} tokens, too short for a {} prefix split; skipped",
                    d.doc_id,
                    d.tokens.len(),
                    cfg.prefix_fraction
                );
                return Ok(None);
            }
            let prefix = match disturb {
                Some((p, vocab)) => p.perturb_ids(&d.tokens[..k], vocab, &[round as u64, idx as u64])?,
                None => d.tokens[..k].to_vec(),
            };
            let truth = d.tokens[k..].to_vec();
            let mut prompt = Vec::with_capacity(prefix.len() + 1);
            prompt.push(BOS);
            prompt.extend_from_slice(&prefix);
            let mut rng = sample_rng(seed, round, task, idx);
            let generated = run_scheme(&target, &prompt, cfg, &mut rng)?;
            Ok(Some(AttackSample {
                round,
                task,
                scheme: cfg.scheme,
                sample_idx: idx,
                prompt: prefix,
                best_match_doc: None,
                doc_id: Some(d.doc_id),
                rouge1: rouge_n(&generated, &truth, 1).f1,
                rouge2: rouge_n(&generated, &truth, 2).f1,
                rouge_l: rouge_l(&generated, &truth).f1,
                generated,
                truth,
            }))
        })
        .collect::<Result<_>>()?;
    Ok(results.into_iter().flatten().collect())
}

/// Up to `n` document ids drawn without replacement from `pool`, in
/// ascending order.
pub fn select_documents(pool: &[usize], n: usize, seed: u64, round: usize) -> Vec<usize> {
    let mut rng = stream_rng(seed, Stream::AttackSelect, &[round as u64]);
    let mut chosen: Vec<usize> = pool.choose_multiple(&mut rng, n.min(pool.len())).copied().collect();
    chosen.sort_unstable();
    chosen
}

/// PII-recovery inputs for attack records: zero-input samples are judged
/// against their best-match document, partial-input samples against their
/// held-back suffix.
pub fn pii_probes<'a>(records: &'a [AttackRecord], corpus: &'a Corpus) -> Vec<PiiProbe<'a>> {
    records
        .iter()
        .map(|r| {
            let (truth, spans) = match (r.task, r.best_match_id, r.doc_id) {
                (Task::ZeroInput, Some(id), _) => match corpus.get(id) {
                    Some(doc) => (doc.text.as_str(), doc.pii_spans.as_slice()),
                    None => ("", &[][..]),
                },
                (_, _, Some(id)) => (
                    r.truth_text.as_str(),
                    corpus.get(id).map(|d| d.pii_spans.as_slice()).unwrap_or(&[]),
                ),
                _ => ("", &[][..]),
            };
            PiiProbe {
                score: r.rouge_l,
                generated: &r.generated_text,
                truth,
                spans,
            }
        })
        .collect()
}
