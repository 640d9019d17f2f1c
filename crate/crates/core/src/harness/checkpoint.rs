//! Training checkpoint: two parameter blocks in the denoiser format plus
//! optimizer state.
//!
//! ```text
//! magic        8 bytes  "RSPOCKPT"
//! version      u32
//! step         u64
//! config hash  64 bytes (hex SHA-256)
//! current      denoiser parameter block
//! reference    denoiser parameter block
//! adam t       u64
//! dim          u64
//! m            dim x f64
//! v            dim x f64
//! ```

use std::io::{Read, Write};

use super::{AdamState, HarnessError};
use crate::mdm::{read_params, write_params, DenoiserParams};

pub const TRAIN_CHECKPOINT_MAGIC: [u8; 8] = *b"RSPOCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainCheckpoint {
    pub step: u64,
    pub config_hash: String,
    pub seed: u64,
    pub current: DenoiserParams,
    pub reference: DenoiserParams,
    pub optimizer: AdamState,
}

fn err(e: std::io::Error) -> HarnessError {
    HarnessError::Checkpoint(e.to_string())
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<(), HarnessError> {
    let bytes: Vec<u8> = xs.iter().flat_map(|x| x.to_le_bytes()).collect();
    w.write_all(&bytes).map_err(err)
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N], HarnessError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(err)?;
    Ok(b)
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, HarnessError> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(err)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn write_checkpoint<W: Write>(w: &mut W, ckpt: &TrainCheckpoint) -> Result<(), HarnessError> {
    if ckpt.config_hash.len() != 64 || !ckpt.config_hash.is_ascii() {
        return Err(HarnessError::Checkpoint("config hash must be 64 hex characters".into()));
    }
    let dim = ckpt.optimizer.m.len();
    if ckpt.optimizer.v.len() != dim || dim != ckpt.current.num_params() {
        return Err(HarnessError::Checkpoint("optimizer moments do not match parameters".into()));
    }
    w.write_all(&TRAIN_CHECKPOINT_MAGIC).map_err(err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(err)?;
    w.write_all(&ckpt.step.to_le_bytes()).map_err(err)?;
    w.write_all(ckpt.config_hash.as_bytes()).map_err(err)?;
    write_params(w, &ckpt.current, ckpt.seed)?;
    write_params(w, &ckpt.reference, ckpt.seed)?;
    w.write_all(&ckpt.optimizer.t.to_le_bytes()).map_err(err)?;
    w.write_all(&(dim as u64).to_le_bytes()).map_err(err)?;
    write_f64s(w, &ckpt.optimizer.m)?;
    write_f64s(w, &ckpt.optimizer.v)
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<TrainCheckpoint, HarnessError> {
    if read_array::<_, 8>(r)? != TRAIN_CHECKPOINT_MAGIC {
        return Err(HarnessError::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array(r)?);
    if version != VERSION {
        return Err(HarnessError::Checkpoint(format!("unsupported version {version}")));
    }
    let step = u64::from_le_bytes(read_array(r)?);
    let hash = read_array::<_, 64>(r)?;
    let config_hash = String::from_utf8(hash.to_vec()).map_err(|_| HarnessError::Checkpoint("bad hash".into()))?;
    let (current, seed) = read_params(r)?;
    let (reference, _) = read_params(r)?;
    let t = u64::from_le_bytes(read_array(r)?);
    let dim = u64::from_le_bytes(read_array(r)?) as usize;
    if dim != current.num_params() {
        return Err(HarnessError::Checkpoint(format!(
            "{dim} optimizer coordinates for {} parameters",
            current.num_params()
        )));
    }
    let m = read_f64s(r, dim)?;
    let v = read_f64s(r, dim)?;
    Ok(TrainCheckpoint {
        step,
        config_hash,
        seed,
        current,
        reference,
        optimizer: AdamState { m, v, t },
    })
}
