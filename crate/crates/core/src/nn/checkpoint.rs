//! Checkpoint files: `S2TCKPT1`, a little-endian u64 header length, a JSON
//! header, then the tensors as little-endian f32.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::ParamStore;
use super::model::{Model, ModelConfig};
use super::tensor::{Float, Mat};
use super::NnError;
use crate::tfr::StftConfig;

pub const MAGIC: &[u8; 8] = b"S2TCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: (usize, usize),
    /// Byte offset from the start of the payload section.
    offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    stft: StftConfig,
    step: u64,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub config: ModelConfig,
    /// Image front end the model was trained with.
    pub stft: StftConfig,
    /// Optimizer steps taken.
    pub step: u64,
    pub params: ParamStore<f32>,
}

impl ModelCheckpoint {
    pub fn from_model<F: Float>(model: &Model<F>, stft: StftConfig, step: u64) -> Self {
        Self {
            config: model.config.clone(),
            stft,
            step,
            params: model.params.cast(),
        }
    }

    pub fn model<F: Float>(&self) -> Result<Model<F>, NnError> {
        Model::from_params(self.config.clone(), self.params.cast())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), NnError> {
        let mut offset = 0u64;
        let tensors = self
            .params
            .iter()
            .map(|(name, m)| {
                let e = TensorEntry {
                    name: name.to_string(),
                    shape: m.shape(),
                    offset,
                };
                offset += 4 * m.len() as u64;
                e
            })
            .collect();
        let header = Header {
            config: self.config.clone(),
            stft: self.stft.clone(),
            step: self.step,
            tensors,
        };
        let json = serde_json::to_vec(&header).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, m) in self.params.iter() {
            let mut buf = Vec::with_capacity(4 * m.len());
            for v in &m.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, NnError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len);
        if len > 1 << 30 {
            return Err(NnError::Checkpoint("implausible header length".into()));
        }
        let mut json = vec![0u8; len as usize];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        let mut params = ParamStore::new();
        for t in &header.tensors {
            let n = t.shape.0 * t.shape.1;
            let start = t.offset as usize;
            let bytes = payload
                .get(start..start + 4 * n)
                .ok_or_else(|| NnError::Checkpoint(format!("tensor {} truncated", t.name)))?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            params.add(t.name.clone(), Mat::from_vec(t.shape.0, t.shape.1, data));
        }
        let ck = Self {
            config: header.config,
            stft: header.stft,
            step: header.step,
            params,
        };
        // every canonical tensor present with the right shape
        ck.model::<f32>()?;
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}
