//! Dataset loading and batching.
//!
//! Labels are quarantined: a [`Dataset`] hands out images freely, but labels
//! are only reachable through [`Dataset::eval_view`], which the training
//! loop never touches. Training code takes a [`TrainView`], a wrapper that
//! structurally cannot produce labels.

use std::path::{Path, PathBuf};

use ndarray::{Array4, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, tag};
use crate::transforms::ImageBatch;

mod cifar;
mod idx;
mod raw;

pub use idx::{load_mnist, write_idx_images, write_idx_labels};
pub use cifar::load_cifar10;
pub use raw::{load_raw, write_raw};

/// Environment variable naming the dataset root directory.
pub const DATA_DIR_ENV: &str = "INFOCLUST_DATA_DIR";

/// An immutable dataset: images in `[0,1]`, labels held back for evaluation.
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Array4<f64>,
    labels: Vec<usize>,
    pub name: String,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(
        images: Array4<f64>,
        labels: Vec<usize>,
        name: impl Into<String>,
        n_classes: usize,
    ) -> Result<Self> {
        let n = images.dim().0;
        if n == 0 {
            return Err(Error::Dataset("dataset has no samples".to_string()));
        }
        if labels.len() != n {
            return Err(Error::Dataset(format!(
                "{n} images but {} labels",
                labels.len()
            )));
        }
        if n_classes < 2 {
            return Err(Error::Dataset(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::Dataset(format!(
                "label {bad} out of range 0..{n_classes}"
            )));
        }
        if images.iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
            return Err(Error::Dataset(
                "image values must lie in [0, 1]".to_string(),
            ));
        }
        Ok(Self {
            images,
            labels,
            name: name.into(),
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.images.dim().0
    }

    pub fn is_empty(&self) -> bool {
        false // N ≥ 1 by construction
    }

    /// (C, H, W) of one sample.
    pub fn sample_shape(&self) -> (usize, usize, usize) {
        let (_, c, h, w) = self.images.dim();
        (c, h, w)
    }

    pub fn images(&self) -> &Array4<f64> {
        &self.images
    }

    /// Copies the given samples into a batch.
    pub fn gather(&self, indices: &[usize]) -> Result<ImageBatch> {
        let (_, c, h, w) = self.images.dim();
        let mut out = Array4::zeros((indices.len(), c, h, w));
        for (row, &i) in indices.iter().enumerate() {
            out.index_axis_mut(Axis(0), row)
                .assign(&self.images.index_axis(Axis(0), i));
        }
        ImageBatch::new(out)
    }

    /// Label access for evaluation code only.
    pub fn eval_view(&self) -> EvalView<'_> {
        EvalView {
            images: &self.images,
            labels: &self.labels,
            n_classes: self.n_classes,
        }
    }

    /// Image-only view handed to the training loop.
    pub fn train_view(&self) -> TrainView<'_> {
        TrainView { dataset: self }
    }

    /// Per-class sample counts.
    pub fn label_histogram(&self) -> Vec<usize> {
        let mut h = vec![0usize; self.n_classes];
        for &y in &self.labels {
            h[y] += 1;
        }
        h
    }

    /// Replaces labels with random ones. The canary for label quarantine:
    /// training on a poisoned dataset must produce bit-identical models.
    pub fn poison_labels(mut self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for y in self.labels.iter_mut() {
            *y = rng.random_range(0..self.n_classes);
        }
        self
    }
}

/// Evaluation-side view: images plus ground-truth labels.
#[derive(Clone, Copy)]
pub struct EvalView<'a> {
    pub images: &'a Array4<f64>,
    pub labels: &'a [usize],
    pub n_classes: usize,
}

/// Training-side view: no labels interface exists on this type.
#[derive(Clone, Copy)]
pub struct TrainView<'a> {
    dataset: &'a Dataset,
}

impl<'a> TrainView<'a> {
    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sample_shape(&self) -> (usize, usize, usize) {
        self.dataset.sample_shape()
    }

    pub fn gather(&self, indices: &[usize]) -> Result<ImageBatch> {
        self.dataset.gather(indices)
    }
}

/// Deterministic epoch shuffling: each epoch visits every index exactly
/// once, in an order derived from (seed, epoch).
#[derive(Debug, Clone)]
pub struct BatchIterator {
    n: usize,
    batch_size: usize,
    seed: u64,
    pub epoch: usize,
}

impl BatchIterator {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        if batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be ≥ 1".to_string()));
        }
        Ok(Self {
            n,
            batch_size,
            seed,
            epoch: 0,
        })
    }

    /// The index batches of the given epoch (a partition of `0..n`).
    pub fn epoch_batches(&self, epoch: usize) -> Vec<Vec<usize>> {
        let mut idx: Vec<usize> = (0..self.n).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[tag("shuffle"), epoch as u64]));
        for i in (1..self.n).rev() {
            let j = rng.random_range(0..=i);
            idx.swap(i, j);
        }
        idx.chunks(self.batch_size).map(|c| c.to_vec()).collect()
    }

    /// Batches for the current epoch, advancing the counter.
    pub fn next_epoch(&mut self) -> Vec<Vec<usize>> {
        let batches = self.epoch_batches(self.epoch);
        self.epoch += 1;
        batches
    }
}

/// Synthetic Gaussian blobs reshaped into image layout; the desk-scale
/// oracle dataset. Class means are `separation` apart in units of the
/// within-cluster standard deviation.
pub fn synth_blobs(
    classes: usize,
    per_class: usize,
    shape: (usize, usize, usize),
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::Dataset(format!(
            "need at least 2 blob classes, got {classes}"
        )));
    }
    if per_class == 0 {
        return Err(Error::Dataset("per_class must be ≥ 1".to_string()));
    }
    let (c, h, w) = shape;
    let dim = c * h * w;
    if dim == 0 {
        return Err(Error::Dataset("blob shape has a zero dimension".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::StandardNormal;

    // Random unit directions scaled by the separation; with unit noise this
    // puts class means ~`separation`·σ apart.
    let mut means = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut m: Vec<f64> = (0..dim)
            .map(|_| rand_distr::Distribution::sample(&normal, &mut rng))
            .collect();
        let norm: f64 = m.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for v in m.iter_mut() {
            *v = *v / norm * separation;
        }
        means.push(m);
    }

    let n = classes * per_class;
    let mut raw = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (cls, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            for &mu in mean {
                let noise: f64 = rand_distr::Distribution::sample(&normal, &mut rng);
                raw.push(mu + noise);
            }
            labels.push(cls);
        }
    }

    // Min-max normalize into [0, 1].
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    for v in raw.iter_mut() {
        *v = (*v - lo) / span;
    }

    let images = Array4::from_shape_vec((n, c, h, w), raw)
        .map_err(|e| Error::Dataset(e.to_string()))?;
    Dataset::new(images, labels, format!("blobs{classes}"), classes)
}

/// Declarative dataset choice, stored in experiment configs and checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    /// Pooled train+test MNIST from IDX files under the data dir.
    Mnist,
    /// Pooled train+test CIFAR-10 from binary batches under the data dir.
    Cifar10,
    /// Raw-container images (+ optional labels; without them every label is
    /// 0 and evaluation is meaningless but training still works).
    Raw {
        images: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<PathBuf>,
        n_classes: usize,
    },
    /// Synthetic Gaussian blobs.
    Blobs {
        classes: usize,
        per_class: usize,
        shape: (usize, usize, usize),
        separation: f64,
        seed: u64,
    },
}

impl DatasetConfig {
    /// The blob setting used by fast end-to-end checks.
    pub fn default_blobs() -> Self {
        DatasetConfig::Blobs {
            classes: 3,
            per_class: 200,
            shape: (1, 8, 8),
            separation: 10.0,
            seed: 7,
        }
    }

    /// Loads the dataset, resolving `mnist`/`cifar10` under `data_dir`
    /// (falling back to [`DATA_DIR_ENV`], then the current directory).
    pub fn load(&self, data_dir: Option<&Path>) -> Result<Dataset> {
        let root = || -> PathBuf {
            data_dir.map(Path::to_path_buf).unwrap_or_else(|| {
                std::env::var_os(DATA_DIR_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("."))
            })
        };
        match self {
            DatasetConfig::Mnist => load_mnist(&root().join("mnist")),
            DatasetConfig::Cifar10 => load_cifar10(&root().join("cifar10")),
            DatasetConfig::Raw {
                images,
                labels,
                n_classes,
            } => load_raw(images, labels.as_deref(), *n_classes),
            DatasetConfig::Blobs {
                classes,
                per_class,
                shape,
                separation,
                seed,
            } => synth_blobs(*classes, *per_class, *shape, *separation, *seed),
        }
    }

    /// Parses CLI shorthand: `mnist`, `cifar10`, `blobs`, or
    /// `raw:<images>[:<labels>]:<classes>`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetConfig::Mnist),
            "cifar10" => Ok(DatasetConfig::Cifar10),
            "blobs" => Ok(DatasetConfig::default_blobs()),
            other if other.starts_with("raw:") => {
                let parts: Vec<&str> = other.splitn(4, ':').collect();
                match parts.as_slice() {
                    ["raw", images, classes] => Ok(DatasetConfig::Raw {
                        images: PathBuf::from(images),
                        labels: None,
                        n_classes: classes.parse().map_err(|_| {
                            Error::Config(format!("bad class count '{classes}'"))
                        })?,
                    }),
                    ["raw", images, labels, classes] => Ok(DatasetConfig::Raw {
                        images: PathBuf::from(images),
                        labels: Some(PathBuf::from(labels)),
                        n_classes: classes.parse().map_err(|_| {
                            Error::Config(format!("bad class count '{classes}'"))
                        })?,
                    }),
                    _ => Err(Error::Config(format!("cannot parse dataset '{other}'"))),
                }
            }
            other => Err(Error::Config(format!(
                "unknown dataset '{other}' (expected mnist|cifar10|blobs|raw:...)"
            ))),
        }
    }
}
