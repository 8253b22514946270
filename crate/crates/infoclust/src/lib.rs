//! Information-based deep clustering.
//!
//! This crate implements a family of unsupervised clustering objectives built
//! from two mutual-information losses, KL-divergence regularizers, and a set
//! of input transformations (geometric, adversarial, mixup). A small
//! convolutional network with one or more softmax heads is trained to
//! maximize the configured information objective, and clusterings are scored
//! by Hungarian-matched classification accuracy.
//!
//! The pieces:
//!
//! - [`math`] — entropy, marginal, mutual-information and KL estimators over
//!   mini-batches of cluster posteriors, with analytic gradients.
//! - [`transforms`] — geometric and weak-geometric augmentation, mixup, and
//!   (information-)virtual-adversarial perturbations.
//! - [`model`] — the cluster network: conv encoder, softmax heads,
//!   backpropagation, Adam updates, binary checkpoints.
//! - [`eval`] — Hungarian assignment, cluster accuracy, linear probes.
//! - [`data`] — MNIST IDX / CIFAR-10 binary / raw-container loaders and a
//!   synthetic blob generator for fast experiments.
//! - [`config`], [`presets`], [`trainer`] — the experiment runner: loss
//!   compositions as declarative configs, a deterministic training loop,
//!   metrics CSV, checkpoints, montages, fine-tuning.
//!
//! A narrative guide lives in `book/`; its code snippets are compiled as
//! doc-tests (see `src/book.rs`).

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod math;
pub mod model;
pub mod montage;
pub mod presets;
pub mod trainer;
pub mod transforms;

mod rng;

#[cfg(doctest)]
mod book;

pub use error::{Error, Result};
