//! Binary checkpoint format.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "TSGR"
//! 4       4     format version, u32 LE (currently 1)
//! 8       1     axis: 0 = row, 1 = column
//! 9       1     cell: 0 = GRU, 1 = LSTM
//! 10      4     input dim D, u32 LE
//! 14      4     hidden dim H, u32 LE
//! 18      ...   parameters, f32 LE, blocks in order:
//!               layer1-fwd W, U, b; layer1-bwd W, U, b;
//!               layer2-fwd W, U, b; layer2-bwd W, U, b; dense W; dense b
//! end-4   4     CRC-32 (IEEE) of every preceding byte, u32 LE
//! ```
//!
//! Each `W`/`U` block stacks its gate matrices row-major in gate order
//! (GRU: z, r, h; LSTM: i, f, o, c), so e.g. a GRU `W` block is
//! `W_z, W_r, W_h` back to back.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil;
use crate::types::Axis;

use super::{CellType, ModelConfig, ModelParams};

pub const MAGIC: &[u8; 4] = b"TSGR";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 18;

fn axis_code(a: Axis) -> u8 {
    match a {
        Axis::Row => 0,
        Axis::Column => 1,
    }
}

fn cell_code(c: CellType) -> u8 {
    match c {
        CellType::Gru => 0,
        CellType::Lstm => 1,
    }
}

pub fn to_bytes(m: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.num_params() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(axis_code(m.axis()));
    out.push(cell_code(m.cell()));
    out.extend_from_slice(&(m.input_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(m.hidden() as u32).to_le_bytes());
    for block in m.blocks() {
        for &v in block {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelParams> {
    let bad = |msg: &str| Error::Checkpoint(msg.to_string());
    if bytes.len() < HEADER_LEN + 4 {
        return Err(bad("file too short"));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32_at(tail, 0);
    let actual = crc32fast::hash(payload);
    if stored != actual {
        return Err(Error::Checkpoint(format!(
            "CRC mismatch (stored {stored:08x}, computed {actual:08x})"
        )));
    }
    let version = u32_at(payload, 4);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let axis = match payload[8] {
        0 => Axis::Row,
        1 => Axis::Column,
        c => return Err(Error::Checkpoint(format!("unknown axis code {c}"))),
    };
    let cell = match payload[9] {
        0 => CellType::Gru,
        1 => CellType::Lstm,
        c => return Err(Error::Checkpoint(format!("unknown cell code {c}"))),
    };
    let config = ModelConfig {
        axis,
        cell,
        input_dim: u32_at(payload, 10) as usize,
        hidden: u32_at(payload, 14) as usize,
    };
    config.validate()?;
    let mut m = ModelParams::zeros(config);
    let expected = HEADER_LEN + 4 * m.num_params();
    if payload.len() != expected {
        return Err(Error::Checkpoint(format!(
            "payload is {} bytes, expected {expected} for D={} H={}",
            payload.len(),
            config.input_dim,
            config.hidden
        )));
    }
    let mut floats = payload[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64);
    for block in m.blocks_mut() {
        for v in block.iter_mut() {
            *v = floats.next().expect("length checked above");
        }
    }
    m.validate()?;
    Ok(m)
}

pub fn save(m: &ModelParams, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, &to_bytes(m))
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
