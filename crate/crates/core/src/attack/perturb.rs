//! Synonym substitution in attack prompts.
//!
//! Each token is selected with probability `p_sub`. Selected tokens that
//! are not stopwords and not part of a PII match are replaced by the most
//! cosine-similar word among their `neighbor_count` nearest neighbours that
//! shares their POS tag.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{pii_patterns, TokenId, Vocab, UNK};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbConfig {
    pub p_sub: f64,
    pub embeddings: PathBuf,
    pub pos_lexicon: PathBuf,
    pub stoplist: PathBuf,
    #[serde(default = "default_neighbors")]
    pub neighbor_count: usize,
    pub seed: u64,
}

fn default_neighbors() -> usize {
    10
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_sub) {
            return Err(Error::Config(format!("perturb.p_sub must be in [0, 1], got {}", self.p_sub)));
        }
        if self.neighbor_count == 0 {
            return Err(Error::Config("perturb.neighbor_count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-call substitution counts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PerturbOutcome {
    pub tokens: Vec<String>,
    /// Tokens that would be replaced if selected.
    pub eligible: usize,
    /// Eligible tokens that were selected and replaced.
    pub substituted: usize,
    /// PII or stoplist tokens; never replaced.
    pub protected: usize,
}

/// Loaded lexical resources plus the substitution parameters.
#[derive(Debug, Clone)]
pub struct Perturber {
    words: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
    pos: HashMap<String, String>,
    stop: HashSet<String>,
    patterns: Vec<Regex>,
    p_sub: f64,
    neighbor_count: usize,
    seed: u64,
}

fn parse_embeddings(text: &str, path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut words = Vec::new();
    let mut vectors: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        let v: Vec<f64> = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| err(i + 1, format!("bad component {f:?}: {e}"))))
            .collect::<Result<_>>()?;
        if v.is_empty() {
            return Err(err(i + 1, "word without vector".into()));
        }
        if let Some(first) = vectors.first() {
            if first.len() != v.len() {
                return Err(err(i + 1, format!("dimension {} differs from {}", v.len(), first.len())));
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        words.push(fields[0].to_lowercase());
        vectors.push(if norm > 0.0 { v.iter().map(|x| x / norm).collect() } else { v });
    }
    Ok((words, vectors))
}

impl Perturber {
    pub fn from_config(cfg: &PerturbConfig) -> Result<Self> {
        cfg.validate()?;
        let read = |p: &Path| {
            fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))
        };
        let emb = read(&cfg.embeddings)?;
        let (words, vectors) = parse_embeddings(&emb, &cfg.embeddings)?;
        Self::build(words, vectors, &read(&cfg.pos_lexicon)?, &read(&cfg.stoplist)?, cfg)
    }

    /// Builds from in-memory file contents (same formats as the files).
    pub fn from_strings(embeddings: &str, pos_lexicon: &str, stoplist: &str, cfg: &PerturbConfig) -> Result<Self> {
        cfg.validate()?;
        let (words, vectors) = parse_embeddings(embeddings, &cfg.embeddings)?;
        Self::build(words, vectors, pos_lexicon, stoplist, cfg)
    }

    fn build(
        words: Vec<String>,
        vectors: Vec<Vec<f64>>,
        pos_lexicon: &str,
        stoplist: &str,
        cfg: &PerturbConfig,
    ) -> Result<Self> {
        let mut pos = HashMap::new();
        for line in pos_lexicon.lines() {
            let mut it = line.split('\t');
            if let (Some(w), Some(tags)) = (it.next(), it.next()) {
                if let Some(tag) = tags.split_whitespace().next() {
                    pos.entry(w.trim().to_lowercase()).or_insert_with(|| tag.to_string());
                }
            }
        }
        let stop = stoplist
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let patterns = pii_patterns()
            .into_iter()
            .map(|(_, re)| Regex::new(&format!("(?i){}", re.as_str())).expect("valid pattern"))
            .collect();
        Ok(Self {
            words,
            vectors,
            index,
            pos,
            stop,
            patterns,
            p_sub: cfg.p_sub,
            neighbor_count: cfg.neighbor_count,
            seed: cfg.seed,
        })
    }

    /// Most similar same-POS word among the nearest neighbours of `word`.
    pub fn substitute(&self, word: &str) -> Option<&str> {
        let Some(&i) = self.index.get(word) else {
            log::debug!("{word:?} has no embedding; left unchanged");
            return None;
        };
        let tag = self.pos.get(word)?;
        let v = &self.vectors[i];
        let mut sims: Vec<(f64, usize)> = self
            .vectors
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(j, u)| (v.iter().zip(u).map(|(a, b)| a * b).sum(), j))
            .collect();
        sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(self.words[a.1].cmp(&self.words[b.1])));
        sims.iter()
            .take(self.neighbor_count)
            .map(|&(_, j)| self.words[j].as_str())
            .find(|w| self.pos.get(*w) == Some(tag))
    }

    /// Marks tokens that are stopwords or overlap a PII-pattern match.
    ///
    /// PII patterns run over the tokens rejoined with single spaces, except
    /// that `- . @ : /` attach to their neighbours so phone numbers, emails
    /// and links regain their surface form.
    pub fn protected_mask(&self, tokens: &[String]) -> Vec<bool> {
        let joiner = |t: &str| matches!(t, "-" | "." | "@" | ":" | "/");
        let mut text = String::new();
        let mut spans = Vec::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if i > 0 && !joiner(t) && !joiner(&tokens[i - 1]) {
                text.push(' ');
            }
            let start = text.len();
            text.push_str(t);
            spans.push(start..text.len());
        }
        let mut mask: Vec<bool> = tokens.iter().map(|t| self.stop.contains(t.as_str())).collect();
        for re in &self.patterns {
            for m in re.find_iter(&text) {
                for (k, s) in spans.iter().enumerate() {
                    if s.start < m.end() && m.start() < s.end {
                        mask[k] = true;
                    }
                }
            }
        }
        mask
    }

    /// Perturbs `tokens` with an rng derived from the configured seed and
    /// `path`. One uniform is drawn per token whatever its status.
    pub fn perturb(&self, tokens: &[String], path: &[u64]) -> PerturbOutcome {
        let mut rng = stream_rng(self.seed, Stream::Perturb, path);
        let mask = self.protected_mask(tokens);
        let mut out = PerturbOutcome {
            tokens: Vec::with_capacity(tokens.len()),
            ..Default::default()
        };
        for (t, protected) in tokens.iter().zip(mask) {
            let selected = rng.random::<f64>() < self.p_sub;
            let replacement = if protected { None } else { self.substitute(t) };
            out.protected += protected as usize;
            out.eligible += replacement.is_some() as usize;
            match replacement {
                Some(r) if selected => {
                    out.substituted += 1;
                    out.tokens.push(r.to_string());
                }
                _ => out.tokens.push(t.clone()),
            }
        }
        out
    }

    /// [`Self::perturb`] on token ids; replacements missing from `vocab`
    /// map to [UNK].
    pub fn perturb_ids(&self, ids: &[TokenId], vocab: &Vocab, path: &[u64]) -> Result<Vec<TokenId>> {
        let words: Vec<String> = ids.iter().map(|&i| vocab.token(i).map(str::to_string)).collect::<Result<_>>()?;
        Ok(self
            .perturb(&words, path)
            .tokens
            .iter()
            .map(|w| vocab.id(w).unwrap_or(UNK))
            .collect())
    }
}

/// Perturbs a token sequence with the perturber's own seed.
pub fn perturb_input(tokens: &[String], perturber: &Perturber) -> Vec<String> {
    perturber.perturb(tokens, &[]).tokens
}
