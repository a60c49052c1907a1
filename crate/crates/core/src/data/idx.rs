//! IDX (MNIST-style) big-endian image/label files.

use std::path::Path;

use crate::error::{Error, Result};

use super::Dataset;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(offset, format!("truncated {what} header")))
}

pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let (images, labels) = (images.as_ref(), labels.as_ref());
    let img = std::fs::read(images).map_err(|e| Error::io(images, e))?;
    let lbl = std::fs::read(labels).map_err(|e| Error::io(labels, e))?;
    parse_idx(&img, &lbl)
}

/// Parses an image file (`0x00000803`, `n × rows × cols` bytes) and a label file
/// (`0x00000801`, `n` bytes). Pixels are scaled to `[0, 1]`; samples have shape
/// `[1, rows, cols]`.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let magic = read_u32(images, 0, "image")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(0, format!("bad image magic {magic:#010x}")));
    }
    let n = read_u32(images, 4, "image")? as usize;
    let rows = read_u32(images, 8, "image")? as usize;
    let cols = read_u32(images, 12, "image")? as usize;
    let pixels = n * rows * cols;
    let body = &images[16..];
    if body.len() < pixels {
        return Err(Error::format(
            16 + body.len(),
            format!("image data truncated: expected {pixels} bytes, found {}", body.len()),
        ));
    }
    if body.len() > pixels {
        return Err(Error::format(16 + pixels, "trailing bytes after image data"));
    }

    let magic = read_u32(labels, 0, "label")?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(0, format!("bad label magic {magic:#010x}")));
    }
    let nl = read_u32(labels, 4, "label")? as usize;
    if nl != n {
        return Err(Error::format(
            4,
            format!("label count {nl} does not match image count {n}"),
        ));
    }
    let lbody = &labels[8..];
    if lbody.len() != n {
        return Err(Error::format(
            8 + lbody.len().min(n),
            format!("label data has {} bytes, expected {n}", lbody.len()),
        ));
    }

    let features = body.iter().map(|&b| b as f32 / 255.0).collect();
    let labels: Vec<usize> = lbody.iter().map(|&b| b as usize).collect();
    let classes = labels.iter().max().map_or(1, |&m| m + 1).max(10);
    Dataset::new(vec![1, rows, cols], classes, features, labels)
}

/// Re-encodes `[1, rows, cols]` samples as an IDX image file.
pub fn encode_idx_images(d: &Dataset) -> Result<Vec<u8>> {
    let shape = d.input_shape();
    if shape.len() != 3 || shape[0] != 1 {
        return Err(Error::Dimension(format!(
            "IDX images need [1, rows, cols] samples, got {shape:?}"
        )));
    }
    let mut out = Vec::with_capacity(16 + d.features().len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(d.len() as u32).to_be_bytes());
    out.extend_from_slice(&(shape[1] as u32).to_be_bytes());
    out.extend_from_slice(&(shape[2] as u32).to_be_bytes());
    out.extend(d.features().iter().map(|&v| (v * 255.0).round() as u8));
    Ok(out)
}

pub fn encode_idx_labels(d: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + d.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(d.len() as u32).to_be_bytes());
    out.extend(d.labels().iter().map(|&y| y as u8));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        img.extend_from_slice(&[0, 255, 255, 0, 255, 255, 0, 0]);
        let lbl = vec![0, 0, 8, 1, 0, 0, 0, 2, 3, 9];
        (img, lbl)
    }

    #[test]
    fn parses_crafted_fixture() {
        let (img, lbl) = fixture();
        let d = parse_idx(&img, &lbl).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.input_shape(), &[1, 2, 2]);
        assert_eq!(d.input(0), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(d.input(1), &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(d.labels(), &[3, 9]);
    }

    #[test]
    fn re_encoding_is_bit_exact() {
        let (img, lbl) = fixture();
        let d = parse_idx(&img, &lbl).unwrap();
        assert_eq!(encode_idx_images(&d).unwrap(), img);
        assert_eq!(encode_idx_labels(&d), lbl);
    }

    #[test]
    fn count_mismatch_is_format_error() {
        let (img, mut lbl) = fixture();
        lbl[7] = 3;
        lbl.push(1);
        let err = parse_idx(&img, &lbl).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 4, .. }), "{err}");
    }

    #[test]
    fn bad_magic_and_truncation() {
        let (mut img, lbl) = fixture();
        img[3] = 0x04;
        assert!(matches!(parse_idx(&img, &lbl), Err(Error::Format { offset: 0, .. })));
        let (img, lbl) = fixture();
        assert!(matches!(
            parse_idx(&img[..img.len() - 1], &lbl),
            Err(Error::Format { .. })
        ));
        assert!(matches!(parse_idx(&img[..10], &lbl), Err(Error::Format { offset: 8, .. })));
    }
}
