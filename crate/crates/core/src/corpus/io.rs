use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use crate::{Error, Result};

use super::{Corpus, Document};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestFormat {
    PlainLines,
    Jsonl,
}

#[derive(Deserialize)]
struct TextRecord {
    text: String,
}

/// Reads external text as an unannotated corpus, one document per
/// line (plain) or per record (JSON-lines with a `text` field).
pub fn ingest_corpus(path: &Path, format: IngestFormat) -> Result<Corpus> {
    let raw = fs::read_to_string(path)?;
    match format {
        IngestFormat::PlainLines => Ok(Corpus::from_texts(raw.lines())),
        IngestFormat::Jsonl => {
            let mut texts = Vec::new();
            for (i, line) in raw.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let rec: TextRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: e.to_string(),
                })?;
                texts.push(rec.text);
            }
            Ok(Corpus::from_texts(texts))
        }
    }
}

/// Writes `{id, text, pii: [{kind, surface}]}` records.
pub fn save_annotated(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for doc in corpus {
        serde_json::to_writer(&mut w, doc)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_annotated(path: &Path) -> Result<Corpus> {
    let raw = fs::read_to_string(path)?;
    let mut docs = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        docs.push(doc);
    }
    Corpus::from_documents(docs)
}
