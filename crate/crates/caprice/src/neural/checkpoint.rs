//! Model checkpoint serialization.
//!
//! Layout: magic `PGNW`, u16 LE version, u32 LE metadata length + UTF-8 JSON
//! metadata (config, epoch, history tail), then every parameter tensor in
//! declaration order as u8 rank, u32 LE dims, f64 LE data. Loading validates
//! each tensor shape against the embedded config.

use super::{ModelConfig, ModelParams, NeuralError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const MAGIC: &[u8; 4] = b"PGNW";
const VERSION: u16 = 1;

/// Trained parameters plus the context needed to resume or reproduce them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    /// Zero-based index of the last completed epoch.
    pub epoch: usize,
    /// Most recent per-epoch mean losses.
    pub history_tail: Vec<f64>,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    config: ModelConfig,
    epoch: usize,
    history_tail: Vec<f64>,
}

/// Short content-derived identifier for a serialized checkpoint.
pub fn checkpoint_id(data: &[u8]) -> String {
    let digest = Sha256::digest(data);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_checkpoint(checkpoint: &Checkpoint) -> Vec<u8> {
    let meta = serde_json::to_vec(&CheckpointMeta {
        config: checkpoint.config.clone(),
        epoch: checkpoint.epoch,
        history_tail: checkpoint.history_tail.clone(),
    })
    .expect("checkpoint metadata serializes");

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    for (_, tensor) in checkpoint.params.tensors() {
        out.push(tensor.shape().len() as u8);
        for &dim in tensor.shape() {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for &value in tensor.data() {
            out.extend_from_slice(&value.to_le_bytes());
        }
    }
    out
}

pub fn load_checkpoint(data: &[u8]) -> Result<Checkpoint, NeuralError> {
    let corrupt = |msg: &str| NeuralError::CorruptPayload(msg.to_string());
    let mut pos = 0usize;
    let mut take = |n: usize, what: &str| -> Result<&[u8], NeuralError> {
        let end = pos
            .checked_add(n)
            .filter(|&e| e <= data.len())
            .ok_or_else(|| NeuralError::CorruptPayload(format!("truncated {what}")))?;
        let slice = &data[pos..end];
        pos = end;
        Ok(slice)
    };

    if take(4, "magic").map_err(|_| NeuralError::BadMagic)? != MAGIC {
        return Err(NeuralError::BadMagic);
    }
    let version = u16::from_le_bytes(take(2, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(NeuralError::VersionMismatch(version));
    }
    let meta_len = u32::from_le_bytes(take(4, "metadata length")?.try_into().unwrap()) as usize;
    let meta: CheckpointMeta = serde_json::from_slice(take(meta_len, "metadata")?)
        .map_err(|e| NeuralError::CorruptPayload(format!("metadata: {e}")))?;
    meta.config.validate()?;

    let mut params = ModelParams::zeros(&meta.config);
    for (name, tensor) in params.tensors_mut() {
        let rank = take(1, "tensor rank")?[0] as usize;
        if rank != tensor.shape().len() {
            return Err(NeuralError::ShapeMismatch(format!(
                "{name}: rank {rank}, config demands {}",
                tensor.shape().len()
            )));
        }
        for (axis, &expected) in tensor.shape().to_vec().iter().enumerate() {
            let dim =
                u32::from_le_bytes(take(4, "tensor dims")?.try_into().unwrap()) as usize;
            if dim != expected {
                return Err(NeuralError::ShapeMismatch(format!(
                    "{name} axis {axis}: dim {dim}, config demands {expected}"
                )));
            }
        }
        let bytes = take(tensor.len() * 8, "tensor data")?;
        for (value, chunk) in tensor.data_mut().iter_mut().zip(bytes.chunks_exact(8)) {
            *value = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        if !tensor.all_finite() {
            return Err(corrupt(&format!("{name} contains non-finite values")));
        }
    }
    if pos != data.len() {
        return Err(corrupt("trailing bytes"));
    }

    Ok(Checkpoint {
        config: meta.config,
        epoch: meta.epoch,
        history_tail: meta.history_tail,
        params,
    })
}
