//! CIFAR-10 binary batches: 3073-byte records (1 label byte + 3×32×32
//! channel-planar pixels).

use std::fs;
use std::path::Path;

use ndarray::Array4;

use crate::error::{Error, Result};

use super::Dataset;

pub const RECORD_LEN: usize = 1 + 3 * 32 * 32;

/// Parses one binary batch file into (labels, pixel bytes per record).
pub fn parse_cifar_batch(bytes: &[u8], what: &str) -> Result<(Vec<usize>, Vec<u8>)> {
    if bytes.is_empty() || bytes.len() % RECORD_LEN != 0 {
        return Err(Error::Dataset(format!(
            "{what}: {} bytes is not a multiple of the {RECORD_LEN}-byte record",
            bytes.len()
        )));
    }
    let n = bytes.len() / RECORD_LEN;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * (RECORD_LEN - 1));
    for rec in bytes.chunks_exact(RECORD_LEN) {
        labels.push(rec[0] as usize);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok((labels, pixels))
}

/// Loads the five training batches plus the test batch and pools them into
/// one 60k dataset of 3×32×32 images scaled by 1/255.
pub fn load_cifar10(dir: &Path) -> Result<Dataset> {
    let files = [
        "data_batch_1.bin",
        "data_batch_2.bin",
        "data_batch_3.bin",
        "data_batch_4.bin",
        "data_batch_5.bin",
        "test_batch.bin",
    ];
    let mut labels: Vec<usize> = Vec::new();
    let mut pixels: Vec<f64> = Vec::new();
    for name in files {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(Error::Dataset(format!("missing {}", path.display())));
        }
        let bytes = fs::read(&path)?;
        let (lbls, pix) = parse_cifar_batch(&bytes, name)?;
        labels.extend(lbls);
        pixels.extend(pix.iter().map(|&b| b as f64 / 255.0));
    }
    let n = labels.len();
    let images = Array4::from_shape_vec((n, 3, 32, 32), pixels)
        .map_err(|e| Error::Dataset(e.to_string()))?;
    Dataset::new(images, labels, "cifar10", 10)
}
