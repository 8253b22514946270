//! Probability, entropy, and mutual-information estimators over mini-batches.
//!
//! Everything here is a pure function of its inputs and uses natural
//! logarithms, so all information quantities are in nats. Two mutual
//! information estimators are provided:
//!
//! - [`mi_xy`]: `λ·H(Y) − H(Y|X)` over a batch of cluster posteriors, where
//!   `H(Y)` is the entropy of the batch marginal and `H(Y|X)` the mean
//!   per-sample entropy.
//! - [`mi_yy`]: the discrete MI of a `K×K` joint matrix built by averaging
//!   outer products of a sample's posterior and its transformed version's
//!   posterior (see [`joint`]).
//!
//! Training maximizes MI terms by minimizing their negation; [`compose_loss`]
//! owns the signs so experiment configs only carry positive weights.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod grad;

/// Probabilities are clamped to at least this value before any `ln`, so
/// one-hot outputs cannot produce NaN.
pub const PROB_FLOOR: f64 = 1e-12;

/// Row-sum tolerance for a vector to count as a distribution.
pub const ROW_SUM_TOL: f64 = 1e-6;

fn checked_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution(format!("{what}: empty vector")));
    }
    let mut sum = 0.0;
    for (i, &v) in p.iter().enumerate() {
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidDistribution(format!(
                "{what}: entry {i} = {v} outside [0, 1]"
            )));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::InvalidDistribution(format!(
            "{what}: entries sum to {sum}, not 1"
        )));
    }
    Ok(())
}

/// A `B×K` row-stochastic matrix of per-sample cluster posteriors.
///
/// Each row is `p(Y|x_b)` for one sample: entries in `[0, 1]` summing to 1
/// within `1e-6`. `B ≥ 1` and `K ≥ 2` are enforced at construction, so every
/// operation taking a `ProbBatch` can rely on them.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbBatch(Array2<f64>);

impl ProbBatch {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::EmptyBatch);
        }
        if rows.ncols() < 2 {
            return Err(Error::InvalidDistribution(format!(
                "cluster count must be at least 2, got {}",
                rows.ncols()
            )));
        }
        for (b, row) in rows.rows().into_iter().enumerate() {
            checked_distribution(row.as_slice().expect("contiguous row"), &format!("row {b}"))?;
        }
        Ok(Self(rows))
    }

    /// Builds a batch from row slices; convenient in tests and examples.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let k = rows[0].len();
        let mut data = Array2::zeros((rows.len(), k));
        for (b, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::ShapeMismatch(format!(
                    "row {b} has length {}, expected {k}",
                    row.len()
                )));
            }
            data.row_mut(b).assign(&Array1::from(row.to_vec()));
        }
        Self::new(data)
    }

    pub fn batch_size(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_clusters(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    /// Index of the most probable cluster for each row.
    pub fn argmax(&self) -> Vec<usize> {
        self.0
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probs"))
                    .map(|(i, _)| i)
                    .expect("non-empty row")
            })
            .collect()
    }
}

/// A `K×K` nonnegative matrix estimating the joint `p(Y, Ỹ)`, with cached
/// marginals. Entries sum to 1 within `1e-6`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMatrix {
    entries: Array2<f64>,
    marginal_row: Array1<f64>,
    marginal_col: Array1<f64>,
}

impl JointMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "joint matrix must be square, got {}×{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let mut sum = 0.0;
        for &v in entries.iter() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "joint entry {v} is negative or non-finite"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "joint entries sum to {sum}, not 1"
            )));
        }
        let marginal_row = entries.sum_axis(ndarray::Axis(1));
        let marginal_col = entries.sum_axis(ndarray::Axis(0));
        Ok(Self {
            entries,
            marginal_row,
            marginal_col,
        })
    }

    pub fn k(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn marginal_row(&self) -> &Array1<f64> {
        &self.marginal_row
    }

    pub fn marginal_col(&self) -> &Array1<f64> {
        &self.marginal_col
    }
}

/// A scalar loss along with its named components.
///
/// `scalar` is the quantity the optimizer sees; `terms` records the raw
/// (unsigned, unweighted) component values so metrics can log them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub scalar: f64,
    pub terms: BTreeMap<String, f64>,
}

/// Shannon entropy of a distribution, in nats. `0·ln 0` is taken as 0.
///
/// ```
/// let h = infoclust::math::entropy(&[0.5, 0.5]).unwrap();
/// assert!((h - std::f64::consts::LN_2).abs() < 1e-12);
/// ```
pub fn entropy(p: &[f64]) -> Result<f64> {
    checked_distribution(p, "entropy input")?;
    Ok(entropy_unchecked(p))
}

fn entropy_unchecked(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &v in p {
        if v > 0.0 {
            h -= v * v.max(PROB_FLOOR).ln();
        }
    }
    h
}

/// Mean per-row entropy: the mini-batch estimate of `H(Y|X)`.
pub fn conditional_entropy(batch: &ProbBatch) -> f64 {
    let b = batch.batch_size() as f64;
    batch
        .as_array()
        .rows()
        .into_iter()
        .map(|row| entropy_unchecked(row.as_slice().expect("contiguous row")))
        .sum::<f64>()
        / b
}

/// Column-wise mean of the batch: the mini-batch estimate of `p(Y)`.
pub fn marginal(batch: &ProbBatch) -> Array1<f64> {
    let b = batch.batch_size() as f64;
    batch.as_array().sum_axis(ndarray::Axis(0)) / b
}

/// `λ·H(Y) − H(Y|X)` over the batch, with both components in `terms`
/// (`h_y`, `h_y_given_x`). Training maximizes this, i.e. minimizes its
/// negation.
pub fn mi_xy(batch: &ProbBatch, lambda: f64) -> Result<LossValue> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be finite and ≥ 0, got {lambda}"
        )));
    }
    let m = marginal(batch);
    let h_y = entropy_unchecked(m.as_slice().expect("contiguous"));
    let h_y_given_x = conditional_entropy(batch);
    let mut terms = BTreeMap::new();
    terms.insert("h_y".to_string(), h_y);
    terms.insert("h_y_given_x".to_string(), h_y_given_x);
    Ok(LossValue {
        scalar: lambda * h_y - h_y_given_x,
        terms,
    })
}

/// Empirical joint `p(Y, Ỹ) = (1/B) Σ_b p_b p̃_bᵀ`, optionally symmetrized
/// as `(P + Pᵀ)/2` so the MI is invariant under swapping the two arguments.
pub fn joint(batch: &ProbBatch, batch_t: &ProbBatch, symmetrize: bool) -> Result<JointMatrix> {
    if batch.batch_size() != batch_t.batch_size() || batch.num_clusters() != batch_t.num_clusters()
    {
        return Err(Error::ShapeMismatch(format!(
            "joint inputs {}×{} vs {}×{}",
            batch.batch_size(),
            batch.num_clusters(),
            batch_t.batch_size(),
            batch_t.num_clusters()
        )));
    }
    let b = batch.batch_size() as f64;
    // P = (1/B) Aᵀ·Ã, rows of A being per-sample posteriors.
    let mut p = batch.as_array().t().dot(batch_t.as_array());
    p /= b;
    if symmetrize {
        p = (&p + &p.t()) / 2.0;
    }
    JointMatrix::new(p)
}

/// Discrete mutual information of a joint matrix, in nats:
/// `Σ_ij P_ij ln(P_ij / (r_i c_j))`, zero-entry terms taken as 0.
pub fn mi_yy(j: &JointMatrix) -> f64 {
    let r = j.marginal_row();
    let c = j.marginal_col();
    let mut mi = 0.0;
    for ((i, jj), &p) in j.entries().indexed_iter() {
        if p > 0.0 {
            let denom = (r[i].max(PROB_FLOOR)) * (c[jj].max(PROB_FLOOR));
            mi += p * (p.max(PROB_FLOOR) / denom).ln();
        }
    }
    mi
}

/// KL divergence `Σ p_i ln(p_i / q_i)` in nats; `q` is floored at
/// [`PROB_FLOOR`] so it is finite for any pair of valid distributions.
pub fn kl_div(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch(format!(
            "kl_div lengths {} vs {}",
            p.len(),
            q.len()
        )));
    }
    checked_distribution(p, "kl_div p")?;
    checked_distribution(q, "kl_div q")?;
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            kl += pi * (pi.max(PROB_FLOOR) / qi.max(PROB_FLOOR)).ln();
        }
    }
    Ok(kl)
}

/// Mean per-row KL divergence between two batches of posteriors; the batch
/// form of the transformation regularizer.
pub fn kl_batch(p: &ProbBatch, q: &ProbBatch) -> Result<f64> {
    if p.batch_size() != q.batch_size() || p.num_clusters() != q.num_clusters() {
        return Err(Error::ShapeMismatch(format!(
            "kl_batch {}×{} vs {}×{}",
            p.batch_size(),
            p.num_clusters(),
            q.batch_size(),
            q.num_clusters()
        )));
    }
    let b = p.batch_size() as f64;
    let mut total = 0.0;
    for (rp, rq) in p
        .as_array()
        .rows()
        .into_iter()
        .zip(q.as_array().rows().into_iter())
    {
        for (&pi, &qi) in rp.iter().zip(rq.iter()) {
            if pi > 0.0 {
                total += pi * (pi.max(PROB_FLOOR) / qi.max(PROB_FLOOR)).ln();
            }
        }
    }
    Ok(total / b)
}

/// The kind of one configured loss term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossTermKind {
    /// `MI(X,Y) = λ·H(Y) − H(Y|X)`; maximized.
    MiXy,
    /// `MI(Y,Ỹ)` via the empirical joint matrix; maximized.
    MiYy,
    /// `D_KL(p(Y|X) ‖ p(Y|T(X)))`; minimized.
    KlReg,
}

impl LossTermKind {
    /// Sign applied when folding the raw term into the minimized scalar:
    /// MI terms are maximized, so they enter negated.
    pub fn sign(self) -> f64 {
        match self {
            LossTermKind::MiXy | LossTermKind::MiYy => -1.0,
            LossTermKind::KlReg => 1.0,
        }
    }
}

/// One term of a composed objective: kind, nonnegative weight, and an
/// optional transform binding (required for `mi_yy` and `kl_reg`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTerm {
    pub term: LossTermKind,
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<String>,
    /// Weight on `H(Y)` inside `mi_xy`; ignored for other kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

fn default_weight() -> f64 {
    1.0
}

impl LossTerm {
    /// Key under which this term appears in `parts`, `LossValue::terms`, and
    /// the metrics CSV: `mi_xy`, `mi_yy:<transform>`, or `kl:<transform>`.
    pub fn key(&self) -> String {
        match (self.term, &self.transform) {
            (LossTermKind::MiXy, _) => "mi_xy".to_string(),
            (LossTermKind::MiYy, Some(t)) => format!("mi_yy:{t}"),
            (LossTermKind::MiYy, None) => "mi_yy".to_string(),
            (LossTermKind::KlReg, Some(t)) => format!("kl:{t}"),
            (LossTermKind::KlReg, None) => "kl".to_string(),
        }
    }
}

/// Folds named raw term values into the single minimized scalar.
///
/// `scalar = Σ_t weight_t · sign_t · parts[key_t]`, where MI terms carry
/// sign −1 (maximize) and KL terms +1 (minimize). Every configured term must
/// be present in `parts`, and `parts` must not contain unconfigured names.
pub fn compose_loss(terms: &[LossTerm], parts: &BTreeMap<String, f64>) -> Result<LossValue> {
    let mut scalar = 0.0;
    let mut out_terms = BTreeMap::new();
    for t in terms {
        let key = t.key();
        let v = *parts.get(&key).ok_or_else(|| Error::MissingTerm(key.clone()))?;
        scalar += t.weight * t.term.sign() * v;
        out_terms.insert(key, v);
    }
    for name in parts.keys() {
        if !out_terms.contains_key(name) {
            return Err(Error::UnknownTerm(name.clone()));
        }
    }
    Ok(LossValue {
        scalar,
        terms: out_terms,
    })
}
