//! Parameter files: one JSON header line `{"arch": ..., "count": n}` followed by `n`
//! little-endian `f64` values.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, NetworkParams};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Header {
    arch: Architecture,
    count: usize,
}

pub fn save_params(params: &NetworkParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = Header {
        arch: params.arch.clone(),
        count: params.theta.len(),
    };
    let mut bytes = serde_json::to_vec(&header).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })?;
    bytes.push(b'\n');
    for v in &params.theta {
        bytes.write_all(&v.to_le_bytes()).expect("write to vec");
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<NetworkParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: &str| Error::Format {
        path: path.into(),
        reason: reason.into(),
    };
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line"))?;
    let header: Header = serde_json::from_slice(&bytes[..nl]).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })?;
    let payload = &bytes[nl + 1..];
    if payload.len() != header.count * 8 {
        return Err(bad("payload length does not match header count"));
    }
    let theta = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    NetworkParams::from_flat(header.arch, theta)
}
