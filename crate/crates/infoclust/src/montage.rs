//! Cluster montages: a grid with one row per cluster, each row filled with
//! random members of that cluster. Homogeneous rows mean the clustering
//! found class structure.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ClusterModel;
use crate::trainer::predict_all;

/// Picks up to `per_cluster` random member indices for every cluster of one
/// head. Empty clusters yield empty rows.
pub fn montage_rows(
    model: &ClusterModel,
    dataset: &Dataset,
    head: usize,
    per_cluster: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if per_cluster == 0 {
        return Err(Error::InvalidParameter(
            "per_cluster must be ≥ 1".to_string(),
        ));
    }
    let k = *model
        .descriptor()
        .heads
        .get(head)
        .ok_or(Error::UnknownHead(head))?;
    let preds = predict_all(model, dataset, head, 256)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &p) in preds.iter().enumerate() {
        members[p].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for row in members.iter_mut() {
        row.shuffle(&mut rng);
        row.truncate(per_cluster);
    }
    Ok(members)
}

/// Renders the montage of one head to a PNG: K rows × S columns, blank
/// cells for missing samples (degenerate clusterings are a finding, not a
/// crash).
pub fn montage(
    model: &ClusterModel,
    dataset: &Dataset,
    head: usize,
    per_cluster: usize,
    seed: u64,
    path: &Path,
) -> Result<()> {
    let rows = montage_rows(model, dataset, head, per_cluster, seed)?;
    let (c, h, w) = dataset.sample_shape();
    let k = rows.len();
    let (height, width) = (k * h, per_cluster * w);
    let images = dataset.images();

    let to_u8 = |v: f64| -> u8 { (v.clamp(0.0, 1.0) * 255.0).round() as u8 };
    if c == 3 {
        let mut img = image::RgbImage::new(width as u32, height as u32);
        for (row, cells) in rows.iter().enumerate() {
            for (col, &i) in cells.iter().enumerate() {
                for y in 0..h {
                    for x in 0..w {
                        let px = image::Rgb([
                            to_u8(images[(i, 0, y, x)]),
                            to_u8(images[(i, 1, y, x)]),
                            to_u8(images[(i, 2, y, x)]),
                        ]);
                        img.put_pixel((col * w + x) as u32, (row * h + y) as u32, px);
                    }
                }
            }
        }
        img.save(path).map_err(|e| Error::Image(e.to_string()))?;
    } else {
        // Single-channel (or anything else) rendered as grayscale of
        // channel 0.
        let mut img = image::GrayImage::new(width as u32, height as u32);
        for (row, cells) in rows.iter().enumerate() {
            for (col, &i) in cells.iter().enumerate() {
                for y in 0..h {
                    for x in 0..w {
                        let px = image::Luma([to_u8(images[(i, 0, y, x)])]);
                        img.put_pixel((col * w + x) as u32, (row * h + y) as u32, px);
                    }
                }
            }
        }
        img.save(path).map_err(|e| Error::Image(e.to_string()))?;
    }
    Ok(())
}
