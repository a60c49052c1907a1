//! CIFAR-10 binary batches: 1 label byte followed by 3072 channel-major RGB bytes.

use std::path::Path;

use crate::error::{Error, Result};

use super::Dataset;

pub const CIFAR_RECORD_LEN: usize = 1 + 3 * 32 * 32;

pub fn load_cifar_bin<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset> {
    let mut bytes = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let chunk = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        if chunk.len() % CIFAR_RECORD_LEN != 0 {
            return Err(Error::format(
                bytes.len() + chunk.len() - chunk.len() % CIFAR_RECORD_LEN,
                format!(
                    "{} is {} bytes, not a multiple of {CIFAR_RECORD_LEN}",
                    p.display(),
                    chunk.len()
                ),
            ));
        }
        bytes.extend_from_slice(&chunk);
    }
    parse_cifar_bin(&bytes)
}

/// Samples come out as `[3, 32, 32]` with pixels scaled to `[0, 1]`.
pub fn parse_cifar_bin(bytes: &[u8]) -> Result<Dataset> {
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD_LEN != 0 {
        return Err(Error::format(
            bytes.len() - bytes.len() % CIFAR_RECORD_LEN,
            format!("length {} is not a positive multiple of {CIFAR_RECORD_LEN}", bytes.len()),
        ));
    }
    let n = bytes.len() / CIFAR_RECORD_LEN;
    let mut features = Vec::with_capacity(n * (CIFAR_RECORD_LEN - 1));
    let mut labels = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
        if rec[0] >= 10 {
            return Err(Error::format(
                i * CIFAR_RECORD_LEN,
                format!("label byte {} out of range", rec[0]),
            ));
        }
        labels.push(rec[0] as usize);
        features.extend(rec[1..].iter().map(|&b| b as f32 / 255.0));
    }
    Dataset::new(vec![3, 32, 32], 10, features, labels)
}

pub fn encode_cifar_bin(d: &Dataset) -> Result<Vec<u8>> {
    if d.input_shape() != [3, 32, 32] {
        return Err(Error::Dimension(format!(
            "CIFAR records need [3, 32, 32] samples, got {:?}",
            d.input_shape()
        )));
    }
    let mut out = Vec::with_capacity(d.len() * CIFAR_RECORD_LEN);
    for i in 0..d.len() {
        out.push(d.labels()[i] as u8);
        out.extend(d.input(i).iter().map(|&v| (v * 255.0).round() as u8));
    }
    Ok(out)
}
