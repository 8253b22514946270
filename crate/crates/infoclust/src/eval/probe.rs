//! Linear probe: a multinomial logistic regression trained on frozen
//! features to measure how linearly separable a representation is.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::grad::softmax;

/// Probe protocol knobs. Table-style probes are full-batch gradient descent;
/// the defaults (500 epochs, lr 0.1) are the artifact's fixed protocol.
#[derive(Debug, Clone)]
pub struct ProbeOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.1,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Trains a linear classifier on `features` (N×D, frozen) against `labels`
/// and returns held-out accuracy.
pub fn linear_probe(
    features: &Array2<f64>,
    labels: &[usize],
    n_classes: usize,
    opts: &ProbeOptions,
) -> Result<f64> {
    let n = features.nrows();
    if n != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{n} feature rows vs {} labels",
            labels.len()
        )));
    }
    if labels.iter().any(|&y| y >= n_classes) {
        return Err(Error::InvalidParameter("label out of range".to_string()));
    }
    let n_train = ((n as f64) * opts.train_fraction).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::InvalidParameter(format!(
            "degenerate split: {n_train} train of {n} total"
        )));
    }

    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    idx.shuffle(&mut rng);
    let (train_idx, test_idx) = idx.split_at(n_train);

    let d = features.ncols();
    let select = |ids: &[usize]| -> (Array2<f64>, Vec<usize>) {
        let mut x = Array2::zeros((ids.len(), d));
        let mut y = Vec::with_capacity(ids.len());
        for (row, &i) in ids.iter().enumerate() {
            x.row_mut(row).assign(&features.row(i));
            y.push(labels[i]);
        }
        (x, y)
    };
    let (x_train, y_train) = select(train_idx);
    let (x_test, y_test) = select(test_idx);

    // Standardize by train statistics so the fixed learning rate is usable
    // across feature scales.
    let mean = x_train.mean_axis(Axis(0)).expect("non-empty train split");
    let mut std = Array1::zeros(d);
    for j in 0..d {
        let col = x_train.column(j);
        let var: f64 =
            col.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / (x_train.nrows() as f64);
        std[j] = var.sqrt().max(1e-8);
    }
    let normalize = |x: &Array2<f64>| -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for j in 0..d {
                row[j] = (row[j] - mean[j]) / std[j];
            }
        }
        out
    };
    let xt = normalize(&x_train);
    let xe = normalize(&x_test);

    let mut w = Array2::<f64>::zeros((d, n_classes));
    let mut b = Array1::<f64>::zeros(n_classes);
    let bt = xt.nrows() as f64;
    for _ in 0..opts.epochs {
        let logits = xt.dot(&w) + &b;
        let probs = softmax(&logits);
        // dCE/dlogits = probs − onehot, averaged over the batch.
        let mut dz = probs;
        for (row, &y) in y_train.iter().enumerate() {
            dz[(row, y)] -= 1.0;
        }
        dz /= bt;
        let dw = xt.t().dot(&dz);
        let db = dz.sum_axis(Axis(0));
        w -= &(opts.learning_rate * &dw);
        b -= &(opts.learning_rate * &db);
    }

    let logits = xe.dot(&w) + &b;
    let correct = logits
        .rows()
        .into_iter()
        .zip(y_test.iter().copied())
        .filter(|(row, y)| {
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
                .map(|(i, _)| i)
                .expect("non-empty row");
            pred == *y
        })
        .count();
    Ok(correct as f64 / y_test.len() as f64)
}
