//! MNIST IDX parsing: big-endian magic and dimensions, u8 payload.
//!
//! Image files carry magic `0x00000803` (u8 data, 3 dims: N×rows×cols);
//! label files carry `0x00000801` (u8 data, 1 dim).

use std::fs;
use std::path::Path;

use ndarray::Array4;

use crate::error::{Error, Result};

use super::Dataset;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Dataset(format!("{what}: truncated header")))
}

/// Parses an IDX image file into (count, rows, cols, pixels).
pub fn parse_idx_images<'a>(bytes: &'a [u8], what: &str) -> Result<(usize, usize, usize, &'a [u8])> {
    let magic = read_u32_be(bytes, 0, what)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Dataset(format!(
            "{what}: bad magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"
        )));
    }
    let n = read_u32_be(bytes, 4, what)? as usize;
    let rows = read_u32_be(bytes, 8, what)? as usize;
    let cols = read_u32_be(bytes, 12, what)? as usize;
    let payload = &bytes[16..];
    if payload.len() != n * rows * cols {
        return Err(Error::Dataset(format!(
            "{what}: payload has {} bytes, header promises {}",
            payload.len(),
            n * rows * cols
        )));
    }
    Ok((n, rows, cols, payload))
}

/// Parses an IDX label file into its label bytes.
pub fn parse_idx_labels<'a>(bytes: &'a [u8], what: &str) -> Result<&'a [u8]> {
    let magic = read_u32_be(bytes, 0, what)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Dataset(format!(
            "{what}: bad magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"
        )));
    }
    let n = read_u32_be(bytes, 4, what)? as usize;
    let payload = &bytes[8..];
    if payload.len() != n {
        return Err(Error::Dataset(format!(
            "{what}: payload has {} labels, header promises {n}",
            payload.len()
        )));
    }
    Ok(payload)
}

fn find_file(dir: &Path, names: &[&str]) -> Result<Vec<u8>> {
    for name in names {
        let path = dir.join(name);
        if path.is_file() {
            return Ok(fs::read(&path)?);
        }
    }
    Err(Error::Dataset(format!(
        "none of {names:?} found under {}",
        dir.display()
    )))
}

/// Loads MNIST from a directory holding the four standard IDX files and
/// pools train and test into one 70k dataset, pixels scaled by 1/255.
pub fn load_mnist(dir: &Path) -> Result<Dataset> {
    let splits = [
        ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    ];
    let mut pixels: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut dims: Option<(usize, usize)> = None;
    for (img_name, lbl_name) in splits {
        // Some distributions replace the last hyphen with a dot.
        let img_alt = img_name.replacen("-idx", ".idx", 1);
        let lbl_alt = lbl_name.replacen("-idx", ".idx", 1);
        let img_bytes = find_file(dir, &[img_name, &img_alt])?;
        let lbl_bytes = find_file(dir, &[lbl_name, &lbl_alt])?;
        let (n, rows, cols, payload) = parse_idx_images(&img_bytes, img_name)?;
        let lbls = parse_idx_labels(&lbl_bytes, lbl_name)?;
        if lbls.len() != n {
            return Err(Error::Dataset(format!(
                "{img_name}: {n} images but {} labels",
                lbls.len()
            )));
        }
        match dims {
            None => dims = Some((rows, cols)),
            Some(d) if d != (rows, cols) => {
                return Err(Error::Dataset(format!(
                    "{img_name}: image size {rows}×{cols} differs from {d:?}"
                )))
            }
            _ => {}
        }
        pixels.extend(payload.iter().map(|&b| b as f64 / 255.0));
        labels.extend(lbls.iter().map(|&b| b as usize));
    }
    let (rows, cols) = dims.expect("at least one split parsed");
    let n = labels.len();
    let images = Array4::from_shape_vec((n, 1, rows, cols), pixels)
        .map_err(|e| Error::Dataset(e.to_string()))?;
    Dataset::new(images, labels, "mnist", 10)
}

/// Serializes images/labels back into IDX files (used by tests and the raw
/// conversion tooling).
pub fn write_idx_images(path: &Path, n: usize, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + pixels.len());
    bytes.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(n as u32).to_be_bytes());
    bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    bytes.extend_from_slice(&(cols as u32).to_be_bytes());
    bytes.extend_from_slice(pixels);
    fs::write(path, bytes)?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    fs::write(path, bytes)?;
    Ok(())
}
