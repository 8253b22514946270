//! Raw tensor container: 16-byte header of four big-endian u32 (N, C, H, W)
//! followed by N·C·H·W little-endian f32 values in `[0, 1]`.
//!
//! Datasets without an in-tree parser (SVHN) are converted to this format by
//! an external script. Labels, when present, live in a sibling container of
//! shape (N, 1, 1, 1) whose floats are class indices.

use std::fs;
use std::path::Path;

use ndarray::Array4;

use crate::error::{Error, Result};

use super::Dataset;

fn parse_header(bytes: &[u8], what: &str) -> Result<(usize, usize, usize, usize)> {
    if bytes.len() < 16 {
        return Err(Error::Dataset(format!("{what}: header shorter than 16 bytes")));
    }
    let dim = |i: usize| -> usize {
        u32::from_be_bytes([bytes[4 * i], bytes[4 * i + 1], bytes[4 * i + 2], bytes[4 * i + 3]])
            as usize
    };
    Ok((dim(0), dim(1), dim(2), dim(3)))
}

fn parse_payload(bytes: &[u8], count: usize, what: &str) -> Result<Vec<f64>> {
    let payload = &bytes[16..];
    if payload.len() != count * 4 {
        return Err(Error::Dataset(format!(
            "{what}: payload has {} bytes, header promises {}",
            payload.len(),
            count * 4
        )));
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Loads a raw-container dataset, optionally with a label container.
pub fn load_raw(images: &Path, labels: Option<&Path>, n_classes: usize) -> Result<Dataset> {
    let bytes = fs::read(images)?;
    let (n, c, h, w) = parse_header(&bytes, "raw images")?;
    let values = parse_payload(&bytes, n * c * h * w, "raw images")?;
    let imgs = Array4::from_shape_vec((n, c, h, w), values)
        .map_err(|e| Error::Dataset(e.to_string()))?;

    let label_ids = match labels {
        Some(path) => {
            let bytes = fs::read(path)?;
            let (ln, lc, lh, lw) = parse_header(&bytes, "raw labels")?;
            if (lc, lh, lw) != (1, 1, 1) || ln != n {
                return Err(Error::Dataset(format!(
                    "raw labels shape ({ln},{lc},{lh},{lw}) does not match {n} images"
                )));
            }
            parse_payload(&bytes, n, "raw labels")?
                .into_iter()
                .map(|v| v as usize)
                .collect()
        }
        None => vec![0usize; n],
    };
    let name = images
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "raw".to_string());
    Dataset::new(imgs, label_ids, name, n_classes)
}

/// Writes a raw container; the counterpart of [`load_raw`].
pub fn write_raw(path: &Path, shape: (usize, usize, usize, usize), values: &[f64]) -> Result<()> {
    let (n, c, h, w) = shape;
    if values.len() != n * c * h * w {
        return Err(Error::Dataset(format!(
            "{} values for shape {shape:?}",
            values.len()
        )));
    }
    let mut bytes = Vec::with_capacity(16 + values.len() * 4);
    for d in [n, c, h, w] {
        bytes.extend_from_slice(&(d as u32).to_be_bytes());
    }
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}
