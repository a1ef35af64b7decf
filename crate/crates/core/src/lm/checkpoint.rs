//! Binary checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "FLLMCKPT"
//! version    u32
//! round      u64
//! header_len u32
//! header     header_len bytes, JSON-encoded ModelConfig
//! n_params   u64
//! params     n_params x f64 (IEEE-754 little-endian)
//! ```

use std::fs;
use std::path::Path;

use crate::{Error, Result};

use super::{ModelConfig, ModelParams};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"FLLMCKPT";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub round: usize,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(self.params.config())?;
        let mut out = Vec::with_capacity(32 + header.len() + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.round as u64).to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for x in &self.params.flat {
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(r.array()?);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let round = u64::from_le_bytes(r.array()?) as usize;
        let header_len = u32::from_le_bytes(r.array()?) as usize;
        let config: ModelConfig = serde_json::from_slice(r.take(header_len)?)?;
        let n = u64::from_le_bytes(r.array()?) as usize;
        let body = r.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        let flat = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self {
            round,
            params: ModelParams::from_flat(config, flat)?,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::init_model;

    #[test]
    fn byte_exact_round_trip() {
        let params = init_model(&ModelConfig {
            context_len: 2,
            embed_dim: 3,
            hidden_dims: vec![4],
            vocab_size: 7,
            seed: 5,
        })
        .unwrap();
        let ck = Checkpoint { round: 3, params };
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ckpt_round_3");
        write_checkpoint(&p, &ck).unwrap();
        assert_eq!(fs::read(&p).unwrap(), bytes);
        assert_eq!(read_checkpoint(&p).unwrap(), ck);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        assert!(Checkpoint::from_bytes(b"nope").is_err());
        let params = init_model(&ModelConfig {
            context_len: 1,
            embed_dim: 1,
            hidden_dims: vec![],
            vocab_size: 4,
            seed: 0,
        })
        .unwrap();
        let bytes = Checkpoint { round: 0, params }.to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
