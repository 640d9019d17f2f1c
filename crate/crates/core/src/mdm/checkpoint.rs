//! Binary parameter format.
//!
//! ```text
//! magic            8 bytes  "RSPOMDM\0"
//! version          u32
//! vocab_size       u32      (including mask)
//! window           u32
//! hidden           u32
//! embed_dim        u32
//! positions        u32
//! prompt_positions u32
//! seed             u64
//! param_count      u64
//! theta            param_count x f64
//! ```
//! All integers and floats are little-endian.

use std::io::{Read, Write};

use super::{Architecture, DenoiserParams, MdmError};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"RSPOMDM\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> MdmError {
    MdmError::Checkpoint(e.to_string())
}

pub fn write_params<W: Write>(w: &mut W, params: &DenoiserParams, seed: u64) -> Result<(), MdmError> {
    params.validate()?;
    let a = &params.arch;
    w.write_all(&CHECKPOINT_MAGIC).map_err(io_err)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io_err)?;
    for field in [
        a.vocab_size,
        a.window,
        a.hidden,
        a.embed_dim,
        a.positions,
        a.prompt_positions,
    ] {
        let v = u32::try_from(field).map_err(|_| MdmError::Checkpoint("header field overflows u32".into()))?;
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    w.write_all(&seed.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(params.theta.len() as u64).to_le_bytes()).map_err(io_err)?;
    let mut buf = Vec::with_capacity(params.theta.len() * 8);
    for x in &params.theta {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf).map_err(io_err)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, MdmError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, MdmError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads parameters and the seed they were initialized from.
pub fn read_params<R: Read>(r: &mut R) -> Result<(DenoiserParams, u64), MdmError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(MdmError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(MdmError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut fields = [0usize; 6];
    for f in fields.iter_mut() {
        *f = read_u32(r)? as usize;
    }
    let arch = Architecture {
        vocab_size: fields[0],
        window: fields[1],
        hidden: fields[2],
        embed_dim: fields[3],
        positions: fields[4],
        prompt_positions: fields[5],
    };
    let seed = read_u64(r)?;
    let count = read_u64(r)? as usize;
    if count != arch.num_params() {
        return Err(MdmError::DimensionMismatch(format!(
            "header declares {count} parameters, architecture needs {}",
            arch.num_params()
        )));
    }
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf).map_err(io_err)?;
    let theta = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((DenoiserParams::from_theta(arch, theta)?, seed))
}
