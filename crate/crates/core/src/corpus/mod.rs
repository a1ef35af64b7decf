//! Corpora, tokenization and round planning.
//!
//! Documents are either generated synthetically (with ground-truth PII
//! annotations) or ingested from plain-text / JSON-lines files. Document ids
//! are always the document's position in the corpus.

mod io;
mod partition;
mod synth;
mod vocab;

use serde::{Deserialize, Serialize};

pub use io::{ingest_corpus, load_annotated, save_annotated, IngestFormat};
pub use partition::{partition, RoundPlan};
pub use synth::{generate_synthetic_corpus, pii_patterns, synthetic_lexicon, CorpusSpec, Lexicon};
pub use vocab::{tokenize, TokenId, Vocab, BOS, EOS, PAD, UNK};

/// The five PII categories tracked by the recovery metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PiiKind {
    Phone,
    Email,
    Name,
    Date,
    Link,
}

impl PiiKind {
    pub const ALL: [PiiKind; 5] = [
        PiiKind::Phone,
        PiiKind::Email,
        PiiKind::Name,
        PiiKind::Date,
        PiiKind::Link,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PiiKind::Phone => "phone",
            PiiKind::Email => "email",
            PiiKind::Name => "name",
            PiiKind::Date => "date",
            PiiKind::Link => "link",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PiiSpan {
    pub kind: PiiKind,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: usize,
    pub text: String,
    #[serde(rename = "pii", default)]
    pub pii_spans: Vec<PiiSpan>,
}

/// An ordered collection of documents whose ids equal their positions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    docs: Vec<Document>,
}

impl Corpus {
    /// Builds a corpus from texts, assigning sequential ids.
    pub fn from_texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let docs = texts
            .into_iter()
            .enumerate()
            .map(|(id, t)| Document {
                id,
                text: t.into(),
                pii_spans: Vec::new(),
            })
            .collect();
        Self { docs }
    }

    /// Wraps documents, checking that ids are sequential from 0.
    pub fn from_documents(docs: Vec<Document>) -> crate::Result<Self> {
        for (i, d) in docs.iter().enumerate() {
            if d.id != i {
                return Err(crate::Error::Config(format!(
                    "document at position {i} has id {}; ids must be sequential from 0",
                    d.id
                )));
            }
        }
        Ok(Self { docs })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Document> {
        self.docs.get(id)
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.docs.iter()
    }

    pub fn pii_count(&self) -> usize {
        self.docs.iter().map(|d| d.pii_spans.len()).sum()
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Document;
    type IntoIter = std::slice::Iter<'a, Document>;

    fn into_iter(self) -> Self::IntoIter {
        self.docs.iter()
    }
}
