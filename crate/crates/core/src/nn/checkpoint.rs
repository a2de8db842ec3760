//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `STAYCKPT`, a little-endian `u32` version, a
//! little-endian `u64` header length, a UTF-8 JSON header (config, training
//! metadata, block names and shapes) and finally every block's values as
//! little-endian IEEE-754 `f64`, in header order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Block, ModelConfig, Parameters};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"STAYCKPT";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs_run: usize,
    pub final_loss: Option<f64>,
    pub epoch_losses: Vec<f64>,
    pub seed: u64,
    /// Length of the prefixed training sequences (`T + 2`).
    pub sequence_length: usize,
}

impl TrainingMeta {
    /// Number of trajectory tokens to generate after the two label tokens.
    pub fn trajectory_length(&self) -> usize {
        self.sequence_length.saturating_sub(2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub params: Parameters,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    meta: TrainingMeta,
    blocks: Vec<Block>,
}

impl ModelCheckpoint {
    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let header = Header {
            version: CHECKPOINT_VERSION,
            config: self.params.config.clone(),
            meta: self.meta.clone(),
            blocks: self.params.blocks.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        out.write_all(MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        for block in &self.params.blocks {
            for v in &block.data {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
        input.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;
        let mut params = Parameters::zeros(&header.config)?;
        if params.blocks.len() != header.blocks.len() {
            return Err(Error::Format("checkpoint block list does not match its config".into()));
        }
        for (block, described) in params.blocks.iter_mut().zip(&header.blocks) {
            if block.name != described.name || block.shape != described.shape {
                return Err(Error::Format(format!("unexpected block {}", described.name)));
            }
            let mut raw = vec![0u8; block.len() * 8];
            input.read_exact(&mut raw)?;
            for (v, bytes) in block.data.iter_mut().zip(raw.chunks_exact(8)) {
                *v = f64::from_le_bytes(bytes.try_into().expect("8 bytes"));
            }
        }
        Ok(ModelCheckpoint { params, meta: header.meta })
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{forward, Mode};

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = ModelConfig { n_layers: 2, embedding_size: 3, layer_size: 5, ..ModelConfig::with_vocab(7) };
        let ckpt = ModelCheckpoint {
            params: Parameters::init(&cfg).unwrap(),
            meta: TrainingMeta { epochs_run: 2, final_loss: Some(0.1 + 0.2), seed: 9, sequence_length: 12, ..Default::default() },
        };
        let bytes = ckpt.to_bytes();
        let back = ModelCheckpoint::read_from(&bytes[..]).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_bytes(), bytes);
        let w = [1, 2, 3];
        assert_eq!(
            forward(&ckpt.params, &w, Mode::Eval).unwrap(),
            forward(&back.params, &w, Mode::Eval).unwrap()
        );
    }

    #[test]
    fn rejects_garbage() {
        assert!(ModelCheckpoint::read_from(&b"NOTACKPT\x01\0\0\0"[..]).is_err());
        let cfg = ModelConfig { n_layers: 1, embedding_size: 2, layer_size: 2, ..ModelConfig::with_vocab(3) };
        let ckpt = ModelCheckpoint { params: Parameters::init(&cfg).unwrap(), meta: TrainingMeta::default() };
        let mut bytes = ckpt.to_bytes();
        bytes[8] = 9;
        assert!(matches!(ModelCheckpoint::read_from(&bytes[..]), Err(Error::Format(_))));
        let bytes = ckpt.to_bytes();
        assert!(ModelCheckpoint::read_from(&bytes[..bytes.len() - 1]).is_err());
    }
}
