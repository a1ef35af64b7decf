use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::{Error, Result};

use super::Corpus;

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;

const SPECIALS: [&str; 4] = ["[PAD]", "[BOS]", "[EOS]", "[UNK]"];

/// Splits text into lowercase word and punctuation tokens.
///
/// Runs of alphanumeric characters form one token; every other
/// non-whitespace character is a token on its own.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_lowercase().collect());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Word-level vocabulary; the four special tokens always occupy ids 0..4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    fn from_words(words: impl IntoIterator<Item = String>) -> Result<Self> {
        let tokens: Vec<String> = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(words)
            .collect();
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Specials followed by the most frequent corpus tokens, ties broken
    /// lexicographically, truncated to `max_size` entries.
    pub fn build(corpus: &Corpus, max_size: usize) -> Result<Self> {
        if max_size < SPECIALS.len() {
            return Err(Error::Config(format!(
                "vocabulary max_size must be >= {}, got {max_size}",
                SPECIALS.len()
            )));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for doc in corpus {
            for t in tokenize(&doc.text) {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, _)| !SPECIALS.contains(&t.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - SPECIALS.len());
        Self::from_words(ranked.into_iter().map(|(t, _)| t))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Result<&str> {
        self.tokens
            .get(id as usize)
            .map(String::as_str)
            .ok_or(Error::TokenOutOfRange {
                id: id as usize,
                size: self.tokens.len(),
            })
    }

    /// Maps token strings to ids, unknowns to [`UNK`].
    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TokenId> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(UNK))
            .collect()
    }

    /// Tokenizes and maps to ids. Never emits [BOS], [EOS] or [PAD]: the
    /// tokenizer splits their bracket characters apart.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        self.ids(&tokenize(text))
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        let parts = ids
            .iter()
            .map(|&id| self.token(id))
            .collect::<Result<Vec<_>>>()?;
        Ok(parts.join(" "))
    }

    /// One token per line, specials first.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let lines: Vec<&str> = text.lines().collect();
        for (i, special) in SPECIALS.iter().enumerate() {
            if lines.get(i) != Some(special) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected special token {special}"),
                });
            }
        }
        Self::from_words(lines[SPECIALS.len()..].iter().map(|s| s.to_string()))
    }
}
