//! Versioned parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 0..8      magic  b"SGANCKPT"
//! 8..12     u32    format version (currently 1)
//! 12..20    u64    header length in bytes
//! 20..      header UTF-8 JSON: {"metadata": <any>, "tensors": [{"name", "shape": [rows, cols], "offset"}]}
//! then      payload: every tensor's f64 values, row-major, little-endian,
//!           concatenated in header order; `offset` counts f64 elements
//! ```

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use super::NeuralError;

pub const MAGIC: &[u8; 8] = b"SGANCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    metadata: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

fn bad(msg: impl Into<String>) -> NeuralError {
    NeuralError::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(mut w: W, params: &ModelParams, metadata: &serde_json::Value) -> Result<(), NeuralError> {
    let mut offset = 0;
    let tensors = params
        .iter()
        .map(|(name, v)| {
            let e = TensorEntry {
                name: name.to_string(),
                shape: [v.nrows(), v.ncols()],
                offset,
            };
            offset += v.len();
            e
        })
        .collect();
    let header = serde_json::to_vec(&Header {
        metadata: metadata.clone(),
        tensors,
    })
    .map_err(|e| bad(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(offset * 8);
    for (_, v) in params.iter() {
        for x in v.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ModelParams, serde_json::Value), NeuralError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut header = vec![0u8; len];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header).map_err(|e| bad(format!("header: {e}")))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() % 8 != 0 {
        return Err(bad("payload is not a whole number of f64 values"));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut params = ModelParams::new();
    for t in header.tensors {
        let n = t.shape[0] * t.shape[1];
        let slice = data
            .get(t.offset..t.offset + n)
            .ok_or_else(|| bad(format!("tensor `{}` runs past the payload", t.name)))?;
        let arr = Array2::from_shape_vec((t.shape[0], t.shape[1]), slice.to_vec()).map_err(|e| bad(e.to_string()))?;
        params.insert(t.name, arr)?;
    }
    Ok((params, header.metadata))
}
