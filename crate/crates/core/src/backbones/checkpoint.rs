//! Backbone checkpoints (JSON) and capture files (binary).
//!
//! Capture layout, all little-endian:
//!
//! ```text
//! [0..8)    magic "GNNCAP01"
//! [8..40)   u64 rows_prev, cols_prev, rows_k, cols_k
//! [40..)    h_prev data (f64, row-major) then h_k data
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbones::{BackboneKind, Capture, Hyper};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const CAPTURE_MAGIC: &[u8; 8] = b"GNNCAP01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: BackboneKind,
    pub hyper: Hyper,
    pub weights: Vec<Matrix>,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, e.line() as u64, e.to_string()))?;
        if ckpt.version != 1 {
            return Err(Error::parse(
                path,
                1,
                format!("unsupported version {}", ckpt.version),
            ));
        }
        Ok(ckpt)
    }
}

pub fn write_capture(path: impl AsRef<Path>, capture: &Capture) -> Result<()> {
    let path = path.as_ref();
    let (a, b) = (&capture.h_prev, &capture.h_k);
    let mut buf = Vec::with_capacity(40 + 8 * (a.data().len() + b.data().len()));
    buf.extend_from_slice(CAPTURE_MAGIC);
    for dim in [a.rows(), a.cols(), b.rows(), b.cols()] {
        buf.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    for x in a.data().iter().chain(b.data()) {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_capture(path: impl AsRef<Path>) -> Result<Capture> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::parse(path, 0, msg.to_string());
    if buf.len() < 40 || &buf[..8] != CAPTURE_MAGIC {
        return Err(bad("not a capture file"));
    }
    let dims: Vec<usize> = buf[8..40]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")) as usize)
        .collect();
    let (na, nb) = (dims[0] * dims[1], dims[2] * dims[3]);
    if buf.len() != 40 + 8 * (na + nb) {
        return Err(bad("capture payload length does not match header"));
    }
    let mut values = buf[40..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let h_prev = Matrix::from_vec(dims[0], dims[1], values.by_ref().take(na).collect())?;
    let h_k = Matrix::from_vec(dims[2], dims[3], values.collect())?;
    Ok(Capture { h_prev, h_k })
}
