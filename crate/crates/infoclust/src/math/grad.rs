//! Analytic gradients of the loss terms with respect to posterior batches.
//!
//! Each function returns the term value together with `∂term/∂p` for the
//! batches it depends on. Gradients are with respect to the *probabilities*;
//! [`prob_grad_to_logit_grad`] chains them through a softmax when the model
//! needs `∂term/∂logits`.
//!
//! Derivations (writing `P` for the joint, `r`/`c` for its marginals,
//! `m` for the batch marginal):
//!
//! - `H(Y) = −Σ_k m_k ln m_k`, `∂/∂p_bk = −(ln m_k + 1)/B`
//! - `H(Y|X) = (1/B) Σ_b H(p_b)`, `∂/∂p_bk = −(ln p_bk + 1)/B`
//! - `MI = Σ_ij P_ij (ln P_ij − ln r_i − ln c_j)`, `∂MI/∂P_ij = ln P_ij −
//!   ln r_i − ln c_j − 1`; this matrix is pushed back through
//!   `P = (1/B) Σ_b p_b p̃_bᵀ` (and through the optional symmetrization,
//!   under which it is already symmetric).
//! - mean-row KL: `∂/∂p_bk = (ln(p_bk/q_bk) + 1)/B`, `∂/∂q_bk = −p_bk/(B q_bk)`.

use ndarray::Array2;

use super::{joint, mi_xy, JointMatrix, LossValue, ProbBatch, PROB_FLOOR};
use crate::error::Result;

/// Value and gradient of `λ·H(Y) − H(Y|X)` w.r.t. the batch probabilities.
pub fn mi_xy_grad(batch: &ProbBatch, lambda: f64) -> Result<(LossValue, Array2<f64>)> {
    let value = mi_xy(batch, lambda)?;
    let p = batch.as_array();
    let b = batch.batch_size() as f64;
    let m = super::marginal(batch);
    let mut g = Array2::zeros(p.raw_dim());
    for ((bi, k), gv) in g.indexed_iter_mut() {
        let d_hy = -(m[k].max(PROB_FLOOR).ln() + 1.0) / b;
        let d_hyx = -(p[(bi, k)].max(PROB_FLOOR).ln() + 1.0) / b;
        *gv = lambda * d_hy - d_hyx;
    }
    Ok((value, g))
}

/// `∂ mi_yy(P) / ∂ P_ij` for a joint matrix.
fn mi_joint_grad(j: &JointMatrix) -> Array2<f64> {
    let r = j.marginal_row();
    let c = j.marginal_col();
    let mut g = Array2::zeros(j.entries().raw_dim());
    for ((i, jj), gv) in g.indexed_iter_mut() {
        let p = j.entries()[(i, jj)];
        *gv = p.max(PROB_FLOOR).ln() - r[i].max(PROB_FLOOR).ln() - c[jj].max(PROB_FLOOR).ln() - 1.0;
    }
    g
}

/// Value of `mi_yy(joint(batch, batch_t))` and its gradients w.r.t. both
/// posterior batches.
pub fn mi_yy_grad(
    batch: &ProbBatch,
    batch_t: &ProbBatch,
    symmetrize: bool,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let j = joint(batch, batch_t, symmetrize)?;
    let value = super::mi_yy(&j);
    let mut g_joint = mi_joint_grad(&j);
    if symmetrize {
        // ∂/∂P_ab of MI((P+Pᵀ)/2) = (G_ab + G_ba)/2; G is symmetric here, so
        // this is a no-op, but keep it explicit for the raw asymmetric case.
        g_joint = (&g_joint + &g_joint.t()) / 2.0;
    }
    let b = batch.batch_size() as f64;
    // P = (1/B) Aᵀ·Ã  ⇒  dA = (1/B) Ã·Gᵀ, dÃ = (1/B) A·G.
    let d_batch = batch_t.as_array().dot(&g_joint.t()) / b;
    let d_batch_t = batch.as_array().dot(&g_joint) / b;
    Ok((value, d_batch, d_batch_t))
}

/// Mean-row KL value and gradients w.r.t. both batches.
///
/// The trainer treats the first batch (the clean posterior) as a constant
/// target and only propagates the `q` gradient; both are returned so the
/// choice stays at the call site.
pub fn kl_batch_grad(
    p: &ProbBatch,
    q: &ProbBatch,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let value = super::kl_batch(p, q)?;
    let b = p.batch_size() as f64;
    let pa = p.as_array();
    let qa = q.as_array();
    let mut dp = Array2::zeros(pa.raw_dim());
    let mut dq = Array2::zeros(qa.raw_dim());
    for ((bi, k), dv) in dp.indexed_iter_mut() {
        let pv = pa[(bi, k)];
        let qv = qa[(bi, k)].max(PROB_FLOOR);
        if pv > 0.0 {
            *dv = ((pv.max(PROB_FLOOR) / qv).ln() + 1.0) / b;
        } else {
            // lim p→0 of p ln(p/q) has derivative ln(p/q)+1 → −∞; the floor
            // keeps it finite and consistent with the floored value.
            *dv = ((PROB_FLOOR / qv).ln() + 1.0) / b;
        }
        dq[(bi, k)] = -pa[(bi, k)] / (b * qv);
    }
    Ok((value, dp, dq))
}

/// Chains a gradient w.r.t. softmax outputs back to the pre-softmax logits:
/// `∂L/∂z_k = p_k (g_k − Σ_j g_j p_j)` per row.
pub fn prob_grad_to_logit_grad(probs: &Array2<f64>, d_probs: &Array2<f64>) -> Array2<f64> {
    let mut dz = Array2::zeros(probs.raw_dim());
    for bi in 0..probs.nrows() {
        let p = probs.row(bi);
        let g = d_probs.row(bi);
        let dot: f64 = p.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
        for k in 0..probs.ncols() {
            dz[(bi, k)] = p[k] * (g[k] - dot);
        }
    }
    dz
}

/// Row-wise stable softmax.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}
