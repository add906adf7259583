//! Checkpoint layout (little-endian):
//!
//! ```text
//! magic        4 bytes  "BFNW"
//! version      u32      1
//! input_dim    u32
//! hidden       u32      must be 25
//! layers       u32      must be 3
//! classes      u32      must be 3
//! param_count  u32
//! params       param_count x f32, in NetworkWeights layout order
//! ```

use std::path::Path;

use super::{Architecture, NetworkWeights, HIDDEN_SIZE, NUM_CLASSES, NUM_LAYERS};
use crate::error::{Error, Result};
use crate::io::atomic_write;

const MAGIC: &[u8; 4] = b"BFNW";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 28;

pub fn weights_to_bytes(weights: &NetworkWeights<f32>) -> Vec<u8> {
    let arch = weights.architecture();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * weights.params().len());
    out.extend_from_slice(MAGIC);
    for v in [
        VERSION,
        arch.input_dim as u32,
        arch.hidden as u32,
        arch.layers as u32,
        NUM_CLASSES as u32,
        weights.params().len() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for p in weights.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn weights_from_bytes(bytes: &[u8]) -> Result<NetworkWeights<f32>> {
    let incompatible = |m: String| Error::IncompatibleCheckpoint(m);
    if bytes.len() < HEADER_LEN {
        return Err(incompatible("truncated header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(incompatible("bad magic".into()));
    }
    let word = |i: usize| {
        let o = 4 + 4 * i;
        u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize
    };
    let (version, input_dim, hidden, layers, classes, count) = (word(0), word(1), word(2), word(3), word(4), word(5));
    if version != VERSION as usize {
        return Err(incompatible(format!("unsupported version {version}")));
    }
    if hidden != HIDDEN_SIZE || layers != NUM_LAYERS || classes != NUM_CLASSES {
        return Err(incompatible(format!(
            "architecture {layers} layers x {hidden} units x {classes} classes, expected {NUM_LAYERS} x {HIDDEN_SIZE} x {NUM_CLASSES}"
        )));
    }
    let arch = Architecture::standard(input_dim);
    if count != arch.param_count() {
        return Err(incompatible(format!(
            "{count} parameters recorded, architecture needs {}",
            arch.param_count()
        )));
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != 4 * count {
        return Err(incompatible(format!(
            "payload is {} bytes, expected {}",
            body.len(),
            4 * count
        )));
    }
    let params = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    NetworkWeights::from_params(arch, params).map_err(|e| incompatible(e.to_string()))
}

pub fn save_weights(weights: &NetworkWeights<f32>, path: &Path) -> Result<()> {
    atomic_write(path, &weights_to_bytes(weights))
}

pub fn load_weights(path: &Path) -> Result<NetworkWeights<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    weights_from_bytes(&bytes)
}
