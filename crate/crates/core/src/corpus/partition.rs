use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

use super::Corpus;

/// Assignment of documents to (round, client) cells. Training round `T`
/// (1-based) reads `shards[T - 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub n_clients: usize,
    pub n_rounds: usize,
    pub shards: Vec<Vec<Vec<usize>>>,
}

impl RoundPlan {
    /// Documents of training round `round` (1-based) for `client`.
    pub fn shard(&self, round: usize, client: usize) -> &[usize] {
        &self.shards[round - 1][client]
    }

    /// Every document used by any client in training round `round`.
    pub fn round_docs(&self, round: usize) -> Vec<usize> {
        self.shards[round - 1].iter().flatten().copied().collect()
    }
}

/// Shuffles document ids and deals them into `n_rounds * n_clients`
/// contiguous near-equal cells, round-major.
pub fn partition(corpus: &Corpus, n_clients: usize, n_rounds: usize, seed: u64) -> Result<RoundPlan> {
    let cells = n_clients * n_rounds;
    if cells == 0 {
        return Err(Error::Config("n_clients and n_rounds must be >= 1".into()));
    }
    if corpus.len() < cells {
        return Err(Error::Config(format!(
            "corpus has {} documents; {n_clients} clients x {n_rounds} rounds requires at least {cells}",
            corpus.len()
        )));
    }
    let mut ids: Vec<usize> = (0..corpus.len()).collect();
    ids.shuffle(&mut stream_rng(seed, Stream::Partition, &[]));

    let base = ids.len() / cells;
    let extra = ids.len() % cells;
    let mut shards = Vec::with_capacity(n_rounds);
    let mut cursor = 0;
    for r in 0..n_rounds {
        let mut round = Vec::with_capacity(n_clients);
        for c in 0..n_clients {
            let size = base + usize::from(r * n_clients + c < extra);
            round.push(ids[cursor..cursor + size].to_vec());
            cursor += size;
        }
        shards.push(round);
    }
    Ok(RoundPlan {
        n_clients,
        n_rounds,
        shards,
    })
}
