//! In-process federated training: per-round local AdamW on client shards,
//! FedAvg aggregation, checkpoint retention and defense dispatch.
//!
//! Clients of a round train in parallel from the same immutable global
//! model. Aggregation reduces in a fixed order, so results do not depend
//! on thread count or completion order.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{RoundPlan, TokenId};
use crate::defense::{DefenseConfig, KlReference, KlRegularizer, LoraAdapters};
use crate::lm::net::{evaluate, Dropout, Objective};
use crate::lm::{adamw_step, document_examples, AdamWConfig, Example, LrSchedule, ModelParams, OptimizerState};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedConfig {
    pub n_clients: usize,
    pub n_rounds: usize,
    #[serde(default = "default_local_iters")]
    pub local_iters: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub lr: f64,
    /// Cosine decay over `n_rounds * local_iters`; constant rate otherwise.
    #[serde(default = "default_true")]
    pub cosine_schedule: bool,
    #[serde(default)]
    pub defense: DefenseConfig,
}

fn default_local_iters() -> usize {
    200
}

fn default_batch_size() -> usize {
    8
}

fn default_true() -> bool {
    true
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 {
            return Err(Error::Config("fed.n_clients must be >= 1".into()));
        }
        if self.n_rounds == 0 {
            return Err(Error::Config("fed.n_rounds must be >= 1".into()));
        }
        if self.local_iters == 0 {
            return Err(Error::Config("fed.local_iters must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("fed.batch_size must be >= 1".into()));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config("fed.lr must be finite and >= 0".into()));
        }
        self.defense.validate()
    }

    /// AdamW settings: betas 0.99 / 0.999, weight decay 0.01, clip norm 1.0.
    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            schedule: if self.cosine_schedule {
                LrSchedule::Cosine {
                    total_steps: self.n_rounds * self.local_iters,
                }
            } else {
                LrSchedule::Constant
            },
            ..AdamWConfig::default()
        }
    }
}

/// What the server holds between rounds. Under LoRA only the adapters
/// are trained and exchanged; `base` never changes.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModel {
    pub base: ModelParams,
    pub adapters: Option<LoraAdapters>,
}

impl GlobalModel {
    pub fn new(base: ModelParams, defense: &DefenseConfig, seed: u64) -> Result<Self> {
        let adapters = match &defense.lora {
            Some(cfg) => Some(LoraAdapters::init(&base, cfg, seed)?),
            None => None,
        };
        Ok(Self { base, adapters })
    }

    /// The model an observer of the global state sees.
    pub fn effective(&self) -> ModelParams {
        match &self.adapters {
            Some(a) => a.merge(&self.base),
            None => self.base.clone(),
        }
    }

    fn trainable(&self) -> &[f64] {
        match &self.adapters {
            Some(a) => &a.flat,
            None => &self.base.flat,
        }
    }

    fn with_trainable(&self, flat: Vec<f64>) -> Self {
        let mut next = self.clone();
        match &mut next.adapters {
            Some(a) => a.flat = flat,
            None => next.base.flat = flat,
        }
        next
    }
}

/// Identity of one local training call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientSlot {
    pub round: usize,
    pub client: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    /// Trained parameters (adapter vector under LoRA).
    pub trainable: Vec<f64>,
    pub mean_loss: f64,
    pub mean_cross_entropy: f64,
    pub n_docs: usize,
}

struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    fn new(n: usize, rng: ChaCha8Rng) -> Self {
        let mut s = Self {
            order: (0..n).collect(),
            cursor: n,
            rng,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.cursor = 0;
    }

    /// Draws without replacement, reshuffling when the pool runs out.
    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.order.len());
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor == self.order.len() {
                self.reshuffle();
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// Trains a copy of `global` on one client's shard for `cfg.local_iters`
/// steps with fresh optimizer state. `reference` is the KL anchor when KL
/// regularization is active.
pub fn local_train(
    global: &GlobalModel,
    shard: &[Vec<TokenId>],
    cfg: &FedConfig,
    reference: Option<&ModelParams>,
    slot: ClientSlot,
) -> Result<ClientUpdate> {
    if shard.is_empty() {
        return Err(Error::Config(format!(
            "client {} has an empty shard in round {}",
            slot.client, slot.round
        )));
    }
    cfg.validate()?;
    let k = global.base.config().context_len;
    let examples: Vec<Example> = shard.iter().flat_map(|d| document_examples(d, k)).collect();
    let path = [slot.round as u64, slot.client as u64];
    let mut sampler = BatchSampler::new(examples.len(), stream_rng(slot.seed, Stream::ClientTrain, &path));
    let mut dropout_rng = stream_rng(slot.seed, Stream::LoraDropout, &path);

    let mut trainable = global.trainable().to_vec();
    let offset = slot.round.saturating_sub(1) * cfg.local_iters;
    let mut state = OptimizerState::new(cfg.optimizer(), trainable.len(), offset);
    let defense = &cfg.defense;
    let kl = match (&defense.kl, reference) {
        (Some(k), Some(r)) if k.mu != 0.0 => Some(KlRegularizer { mu: k.mu, reference: r }),
        (Some(k), None) if k.mu != 0.0 => {
            return Err(Error::Config("KL regularization requires a reference model".into()))
        }
        _ => None,
    };

    let mut loss_sum = 0.0;
    let mut ce_sum = 0.0;
    let mut working = global.clone();
    for step in 0..cfg.local_iters {
        let batch: Vec<Example> = sampler
            .next_batch(cfg.batch_size)
            .into_iter()
            .map(|i| examples[i].clone())
            .collect();
        let objective = Objective {
            lora: working.adapters.as_ref(),
            reference: kl.as_ref().map(|k| (k.reference, k.mu)),
            dropout: defense.lora.as_ref().map(|l| Dropout {
                rate: l.dropout,
                rng: &mut dropout_rng,
            }),
        };
        let (loss, mut grad) = evaluate(&working.base, &batch, objective).map_err(|e| match e {
            Error::NonFiniteLoss => Error::Divergence {
                round: slot.round,
                client: slot.client,
            },
            other => other,
        })?;
        loss_sum += loss.total;
        ce_sum += loss.cross_entropy;
        if let Some(dp) = &defense.dp {
            let mut noise = stream_rng(slot.seed, Stream::DpNoise, &[path[0], path[1], step as u64]);
            dp.apply(&mut grad, &mut noise);
        }
        adamw_step(&mut trainable, &mut grad, &mut state);
        match &mut working.adapters {
            Some(a) => a.flat.copy_from_slice(&trainable),
            None => working.base.flat.copy_from_slice(&trainable),
        }
    }
    let n = cfg.local_iters as f64;
    Ok(ClientUpdate {
        trainable,
        mean_loss: loss_sum / n,
        mean_cross_entropy: ce_sum / n,
        n_docs: shard.len(),
    })
}

/// Coordinate-wise weighted mean of equally sized vectors. Each
/// coordinate's terms are summed in sorted order, so the result does not
/// depend on client order; coordinates where all clients agree are copied.
pub fn aggregate_flat(vectors: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Shape("aggregate needs at least one client".into()))?;
    if vectors.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} parameter vectors but {} weights",
            vectors.len(),
            weights.len()
        )));
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != first.len()) {
        return Err(Error::Shape(format!(
            "parameter length mismatch: {} vs {}",
            v.len(),
            first.len()
        )));
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::Config("aggregation weights must be positive".into()));
    }
    let mut sorted_w = weights.to_vec();
    sorted_w.sort_by(f64::total_cmp);
    let total: f64 = sorted_w.iter().sum();
    let alphas: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut terms = vec![0.0; vectors.len()];
    let out = (0..first.len())
        .map(|j| {
            let x0 = first[j];
            if vectors.iter().all(|v| v[j] == x0) {
                return x0;
            }
            for ((t, v), a) in terms.iter_mut().zip(vectors).zip(&alphas) {
                *t = a * v[j];
            }
            terms.sort_by(f64::total_cmp);
            terms[1..].iter().fold(terms[0], |acc, t| acc + t)
        })
        .collect();
    Ok(out)
}

/// FedAvg over full parameter sets, weights proportional to `weights`.
pub fn aggregate(clients: &[ModelParams], weights: &[f64]) -> Result<ModelParams> {
    let first = clients
        .first()
        .ok_or_else(|| Error::Shape("aggregate needs at least one client".into()))?;
    if clients.iter().any(|c| c.layout() != first.layout()) {
        return Err(Error::Shape("client layouts differ".into()));
    }
    let flats: Vec<&[f64]> = clients.iter().map(|c| c.flat.as_slice()).collect();
    ModelParams::from_flat(first.config().clone(), aggregate_flat(&flats, weights)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesEntry {
    pub round: usize,
    /// Effective global parameters after the round.
    pub params: ModelParams,
    /// Shard-weighted mean client loss; `None` for round 0.
    pub mean_train_loss: Option<f64>,
}

/// Global snapshots by round, starting at the untrained round 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckpointSeries {
    entries: Vec<SeriesEntry>,
    keep_last: Option<usize>,
}

impl CheckpointSeries {
    /// `keep_last` bounds retention; values below 2 are raised to 2 so the
    /// round-difference attack always has a pair.
    pub fn new(keep_last: Option<usize>) -> Self {
        Self {
            entries: Vec::new(),
            keep_last: keep_last.map(|k| k.max(2)),
        }
    }

    pub fn push(&mut self, entry: SeriesEntry) -> Result<()> {
        if let Some(last) = self.entries.last() {
            if entry.round != last.round + 1 {
                return Err(Error::Config(format!(
                    "checkpoint round {} does not follow {}",
                    entry.round, last.round
                )));
            }
        } else if entry.round != 0 && self.keep_last.is_none() {
            return Err(Error::Config("checkpoint series must start at round 0".into()));
        }
        self.entries.push(entry);
        if let Some(k) = self.keep_last {
            let excess = self.entries.len().saturating_sub(k);
            self.entries.drain(..excess);
        }
        Ok(())
    }

    pub fn entries(&self) -> &[SeriesEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, round: usize) -> Option<&SeriesEntry> {
        self.entries.iter().find(|e| e.round == round)
    }

    pub fn latest(&self) -> Option<&SeriesEntry> {
        self.entries.last()
    }

    /// `(pi_T, pi_{T-1})` for round `round >= 1`.
    pub fn pair(&self, round: usize) -> Option<(&SeriesEntry, &SeriesEntry)> {
        let prev = round.checked_sub(1)?;
        Some((self.get(round)?, self.get(prev)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub client_losses: Vec<f64>,
    pub global_loss: Option<f64>,
    /// Cross-entropy part of `global_loss`; differs only under KL.
    pub global_cross_entropy: Option<f64>,
    /// Document ids each client consumed this round.
    pub client_docs: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub observer_errors: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub series: CheckpointSeries,
    pub log: Vec<RoundRecord>,
    pub final_model: GlobalModel,
}

/// Runs every round of `plan`: local training on all clients, FedAvg,
/// checkpointing, then `observer` (e.g. scheduled attacks) with the updated
/// series. Observer errors are logged and recorded; training continues.
pub fn run_training<F>(
    docs: &[Vec<TokenId>],
    plan: &RoundPlan,
    cfg: &FedConfig,
    initial: GlobalModel,
    seed: u64,
    keep_last: Option<usize>,
    mut observer: F,
) -> Result<RunOutcome>
where
    F: FnMut(usize, &CheckpointSeries) -> Result<()>,
{
    cfg.validate()?;
    if plan.n_clients != cfg.n_clients || plan.n_rounds != cfg.n_rounds {
        return Err(Error::Config(format!(
            "round plan is {} clients x {} rounds, config is {} x {}",
            plan.n_clients, plan.n_rounds, cfg.n_clients, cfg.n_rounds
        )));
    }
    let round_zero = initial.effective();
    let mut series = CheckpointSeries::new(keep_last);
    series.push(SeriesEntry {
        round: 0,
        params: round_zero.clone(),
        mean_train_loss: None,
    })?;
    let mut log = vec![RoundRecord {
        round: 0,
        client_losses: Vec::new(),
        global_loss: None,
        global_cross_entropy: None,
        client_docs: Vec::new(),
        observer_errors: notify(&mut observer, 0, &series),
    }];

    let mut global = initial;
    for round in 1..=cfg.n_rounds {
        let round_start = global.effective();
        let reference = cfg.defense.kl.as_ref().map(|k| match k.reference {
            KlReference::RoundZero => &round_zero,
            KlReference::RoundStart => &round_start,
        });
        let updates: Vec<ClientUpdate> = (0..cfg.n_clients)
            .into_par_iter()
            .map(|client| {
                let ids = plan.shard(round, client);
                let shard: Vec<Vec<TokenId>> = ids.iter().map(|&i| docs[i].clone()).collect();
                local_train(&global, &shard, cfg, reference, ClientSlot { round, client, seed })
            })
            .collect::<Result<_>>()?;

        let weights: Vec<f64> = updates.iter().map(|u| u.n_docs as f64).collect();
        let flats: Vec<&[f64]> = updates.iter().map(|u| u.trainable.as_slice()).collect();
        global = global.with_trainable(aggregate_flat(&flats, &weights)?);
        let losses: Vec<f64> = updates.iter().map(|u| u.mean_loss).collect();
        let global_loss = Some(weighted_mean(&losses, &weights));
        let ces: Vec<f64> = updates.iter().map(|u| u.mean_cross_entropy).collect();
        let global_cross_entropy = Some(weighted_mean(&ces, &weights));

        series.push(SeriesEntry {
            round,
            params: global.effective(),
            mean_train_loss: global_loss,
        })?;
        let observer_errors = notify(&mut observer, round, &series);
        log.push(RoundRecord {
            round,
            client_losses: losses,
            global_loss,
            global_cross_entropy,
            client_docs: (0..cfg.n_clients).map(|c| plan.shard(round, c).to_vec()).collect(),
            observer_errors,
        });
    }
    Ok(RunOutcome {
        series,
        log,
        final_model: global,
    })
}

fn weighted_mean(xs: &[f64], ws: &[f64]) -> f64 {
    let total: f64 = ws.iter().sum();
    xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / total
}

fn notify<F>(observer: &mut F, round: usize, series: &CheckpointSeries) -> Vec<String>
where
    F: FnMut(usize, &CheckpointSeries) -> Result<()>,
{
    match observer(round, series) {
        Ok(()) => Vec::new(),
        Err(e) => {
            log::warn!("round {round}: observer failed: {e}");
            vec![e.to_string()]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::partition;
    use crate::corpus::Corpus;
    use crate::lm::{init_model, loss_and_grad, ModelConfig};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn model_cfg() -> ModelConfig {
        ModelConfig {
            context_len: 3,
            embed_dim: 4,
            hidden_dims: vec![16],
            vocab_size: 12,
            seed: 1,
        }
    }

    fn fed(n_clients: usize, n_rounds: usize, local_iters: usize, lr: f64) -> FedConfig {
        FedConfig {
            n_clients,
            n_rounds,
            local_iters,
            batch_size: 4,
            lr,
            cosine_schedule: true,
            defense: DefenseConfig::default(),
        }
    }

    fn docs() -> Vec<Vec<TokenId>> {
        (0..8u32).map(|i| vec![4 + i % 8, 5 + (i * 3) % 7, 6 + i % 5, 4 + (i * 7) % 8]).collect()
    }

    fn slot(round: usize) -> ClientSlot {
        ClientSlot { round, client: 0, seed: 9 }
    }

    #[test]
    fn aggregate_examples() {
        let a = [1.0, 3.0];
        let b = [3.0, 5.0];
        assert_eq!(aggregate_flat(&[&a, &b], &[1.0, 1.0]).unwrap(), [2.0, 4.0]);
        assert_eq!(aggregate_flat(&[&a, &b], &[1.0, 3.0]).unwrap(), [2.5, 4.5]);
        assert_eq!(aggregate_flat(&[&a, &a, &a], &[1.0, 2.0, 7.0]).unwrap(), a);
        assert!(aggregate_flat(&[&a, &[1.0][..]], &[1.0, 1.0]).is_err());
        assert!(aggregate_flat(&[&a], &[0.0]).is_err());
    }

    #[test]
    fn aggregate_params_single_client_identity() {
        let p = init_model(&model_cfg()).unwrap();
        assert_eq!(aggregate(&[p.clone()], &[3.0]).unwrap(), p);
    }

    proptest! {
        #[test]
        fn aggregate_permutation_invariant(
            vs in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 5), 1..6),
            ws in prop::collection::vec(0.1f64..5.0, 6),
            seed: u64,
        ) {
            let n = vs.len();
            let refs: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
            let base = aggregate_flat(&refs, &ws[..n]).unwrap();
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut stream_rng(seed, Stream::Partition, &[]));
            let prefs: Vec<&[f64]> = idx.iter().map(|&i| vs[i].as_slice()).collect();
            let pws: Vec<f64> = idx.iter().map(|&i| ws[i]).collect();
            prop_assert_eq!(aggregate_flat(&prefs, &pws).unwrap(), base);
        }
    }

    #[test]
    fn single_step_and_zero_lr() {
        let g = GlobalModel::new(init_model(&model_cfg()).unwrap(), &DefenseConfig::default(), 0).unwrap();
        let shard = docs()[..2].to_vec();
        let frozen = local_train(&g, &shard, &fed(1, 1, 5, 0.0), None, slot(1)).unwrap();
        assert_eq!(frozen.trainable, g.base.flat);

        let one = local_train(&g, &shard, &fed(1, 1, 1, 0.01), None, slot(1)).unwrap();
        assert_ne!(one.trainable, g.base.flat);
        assert!(local_train(&g, &shard, &fed(1, 1, 0, 0.01), None, slot(1)).is_err());
        assert!(local_train(&g, &[], &fed(1, 1, 1, 0.01), None, slot(1)).is_err());
    }

    #[test]
    fn local_training_reduces_loss() {
        let g = GlobalModel::new(init_model(&model_cfg()).unwrap(), &DefenseConfig::default(), 0).unwrap();
        let shard = docs()[..2].to_vec();
        let examples: Vec<Example> = shard.iter().flat_map(|d| document_examples(d, 3)).collect();
        let before = loss_and_grad(&g.base, &examples).unwrap().0;
        let up = local_train(&g, &shard, &fed(1, 1, 200, 0.01), None, slot(1)).unwrap();
        let trained = ModelParams::from_flat(model_cfg(), up.trainable).unwrap();
        let after = loss_and_grad(&trained, &examples).unwrap().0;
        assert!(after < before, "{after} !< {before}");
    }

    fn run(cfg: &FedConfig, keep: Option<usize>) -> RunOutcome {
        let corpus = Corpus::from_texts((0..8).map(|i| i.to_string()));
        let plan = partition(&corpus, cfg.n_clients, cfg.n_rounds, 4).unwrap();
        let g = GlobalModel::new(init_model(&model_cfg()).unwrap(), &cfg.defense, 2).unwrap();
        run_training(&docs(), &plan, cfg, g, 17, keep, |_, _| Ok(())).unwrap()
    }

    #[test]
    fn series_covers_all_rounds_and_docs_once() {
        let cfg = fed(2, 3, 10, 0.01);
        let out = run(&cfg, None);
        let rounds: Vec<usize> = out.series.entries().iter().map(|e| e.round).collect();
        assert_eq!(rounds, [0, 1, 2, 3]);
        let used: Vec<usize> = out.log.iter().flat_map(|r| r.client_docs.iter().flatten().copied()).collect();
        let set: BTreeSet<usize> = used.iter().copied().collect();
        assert_eq!(used.len(), 8);
        assert_eq!(set.len(), 8);
    }

    #[test]
    fn retention_keeps_pair() {
        let out = run(&fed(2, 3, 5, 0.01), Some(1));
        let rounds: Vec<usize> = out.series.entries().iter().map(|e| e.round).collect();
        assert_eq!(rounds, [2, 3]);
        assert!(out.series.pair(3).is_some());
    }

    #[test]
    fn single_client_aggregation_is_identity() {
        let cfg = fed(1, 1, 5, 0.01);
        let corpus = Corpus::from_texts((0..8).map(|i| i.to_string()));
        let plan = partition(&corpus, 1, 1, 4).unwrap();
        let g = GlobalModel::new(init_model(&model_cfg()).unwrap(), &cfg.defense, 2).unwrap();
        let shard: Vec<Vec<TokenId>> = plan.shard(1, 0).iter().map(|&i| docs()[i].clone()).collect();
        let direct = local_train(&g, &shard, &cfg, None, ClientSlot { round: 1, client: 0, seed: 17 }).unwrap();
        let out = run_training(&docs(), &plan, &cfg, g, 17, None, |_, _| Ok(())).unwrap();
        assert_eq!(out.final_model.base.flat, direct.trainable);
    }

    #[test]
    fn identical_seeds_identical_runs() {
        let cfg = fed(2, 2, 10, 0.01);
        let a = run(&cfg, None);
        let b = run(&cfg, None);
        assert_eq!(a.series, b.series);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| run(&cfg, None));
        assert_eq!(a.series, c.series);
    }

    #[test]
    fn observer_errors_do_not_stop_training() {
        let cfg = fed(2, 2, 3, 0.01);
        let corpus = Corpus::from_texts((0..8).map(|i| i.to_string()));
        let plan = partition(&corpus, 2, 2, 4).unwrap();
        let g = GlobalModel::new(init_model(&model_cfg()).unwrap(), &cfg.defense, 2).unwrap();
        let out = run_training(&docs(), &plan, &cfg, g, 1, None, |r, _| {
            if r == 1 {
                Err(Error::Attack("boom".into()))
            } else {
                Ok(())
            }
        })
        .unwrap();
        assert_eq!(out.series.len(), 3);
        assert_eq!(out.log[1].observer_errors.len(), 1);
    }

    #[test]
    fn plan_config_mismatch_rejected() {
        let corpus = Corpus::from_texts((0..8).map(|i| i.to_string()));
        let plan = partition(&corpus, 2, 2, 4).unwrap();
        let cfg = fed(2, 3, 1, 0.01);
        let g = GlobalModel::new(init_model(&model_cfg()).unwrap(), &cfg.defense, 2).unwrap();
        assert!(run_training(&docs(), &plan, &cfg, g, 1, None, |_, _| Ok(())).is_err());
    }
}
