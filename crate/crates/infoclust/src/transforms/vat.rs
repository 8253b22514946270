//! Virtual adversarial perturbations by the power method.
//!
//! The perturbation direction is estimated by repeatedly taking the gradient
//! of the chosen divergence at a small probe offset `xi·d` and renormalizing:
//! near the clean input the divergence is approximately quadratic, so this
//! is a power iteration on its curvature. `Kl` attacks the consistency
//! regularizer; `NegMi` attacks the mutual-information objective itself
//! (maximizing `−MI(Y,Ỹ)` finds the perturbation that most destroys the
//! information between clean and perturbed assignments).
//!
//! Model parameters are read-only here: the backward pass only transports
//! gradients to the input, and nothing flows back into the weights.

use ndarray::{Array2, Array4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ImageBatch, TransformSpec};
use crate::error::{Error, Result};
use crate::math::grad::{kl_batch_grad, mi_yy_grad};
use crate::math::ProbBatch;
use crate::model::ClusterModel;

/// Which divergence the perturbation maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VatDivergence {
    /// `D = mean-row KL(p(y|x) ‖ p(y|x+r))` — standard VAT.
    Kl,
    /// `D = −MI(Y, Ỹ)` over the batch joint — IVAT.
    NegMi,
}

fn normalize_rows(d: &mut Array4<f64>, previous: Option<&Array4<f64>>) -> Result<()> {
    let b = d.dim().0;
    for bi in 0..b {
        let mut sample = d.index_axis_mut(Axis(0), bi);
        let norm: f64 = sample.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite("vat power-iteration gradient".to_string()));
        }
        if norm < 1e-30 {
            // Flat divergence surface for this sample: keep the previous
            // direction so the output still has the required norm.
            if let Some(prev) = previous {
                let keep = prev.index_axis(Axis(0), bi).to_owned();
                sample.assign(&keep);
            }
            continue;
        }
        sample.mapv_inplace(|v| v / norm);
    }
    Ok(())
}

/// Divergence gradient w.r.t. the perturbed-branch posteriors, head-averaged.
fn divergence_grads(
    clean: &[ProbBatch],
    perturbed: &[Array2<f64>],
    divergence: VatDivergence,
    symmetrize: bool,
) -> Result<Vec<Option<Array2<f64>>>> {
    let n_heads = clean.len() as f64;
    let mut out = Vec::with_capacity(clean.len());
    for (p_clean, q_raw) in clean.iter().zip(perturbed) {
        let q = ProbBatch::new(q_raw.clone())?;
        let mut dq = match divergence {
            VatDivergence::Kl => kl_batch_grad(p_clean, &q)?.2,
            VatDivergence::NegMi => {
                let (_, _, d_t) = mi_yy_grad(p_clean, &q, symmetrize)?;
                -d_t
            }
        };
        dq /= n_heads;
        out.push(Some(dq));
    }
    Ok(out)
}

/// Divergence value (head-averaged) between clean posteriors and the
/// posteriors of a perturbed batch; exposed for the adversarialness tests.
pub fn divergence_value(
    model: &ClusterModel,
    clean: &[ProbBatch],
    x: &Array4<f64>,
    divergence: VatDivergence,
    symmetrize: bool,
) -> Result<f64> {
    let trace = model.forward_trace(x)?;
    let mut total = 0.0;
    for (p_clean, q_raw) in clean.iter().zip(&trace.head_probs) {
        let q = ProbBatch::new(q_raw.clone())?;
        total += match divergence {
            VatDivergence::Kl => crate::math::kl_batch(p_clean, &q)?,
            VatDivergence::NegMi => -crate::math::mi_yy(&crate::math::joint(p_clean, &q, symmetrize)?),
        };
    }
    Ok(total / clean.len() as f64)
}

fn vat_impl(
    model: &ClusterModel,
    batch: &ImageBatch,
    spec: &TransformSpec,
    divergence: VatDivergence,
    symmetrize: bool,
    seed: u64,
) -> Result<(Array4<f64>, ImageBatch)> {
    let (epsilon, power_iterations, xi_opt) = match (spec, divergence) {
        (
            TransformSpec::Vat {
                epsilon,
                power_iterations,
                xi,
            },
            VatDivergence::Kl,
        )
        | (
            TransformSpec::Ivat {
                epsilon,
                power_iterations,
                xi,
            },
            VatDivergence::NegMi,
        ) => (*epsilon, *power_iterations, *xi),
        _ => {
            return Err(Error::InvalidParameter(format!(
                "divergence {divergence:?} does not match spec {spec:?}"
            )))
        }
    };
    spec.validate()?;
    if epsilon == 0.0 {
        return Ok((Array4::zeros(batch.as_array().raw_dim()), batch.clone()));
    }

    let x = batch.as_array();
    let (b, c, h, w) = batch.dim();
    let input_dim = (c * h * w) as f64;
    let xi = xi_opt.unwrap_or(1e-6 * input_dim.sqrt());

    let clean_trace = model.forward_trace(x)?;
    let clean: Vec<ProbBatch> = clean_trace
        .head_probs
        .iter()
        .map(|p| ProbBatch::new(p.clone()))
        .collect::<Result<_>>()?;

    // Random unit start direction per sample.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Array4::zeros((b, c, h, w));
    for v in d.iter_mut() {
        *v = StandardNormal.sample(&mut rng);
    }
    normalize_rows(&mut d, None)?;

    for _ in 0..power_iterations {
        let probe = x + &(xi * &d);
        let trace = model.forward_trace(&probe)?;
        let d_probs = divergence_grads(&clean, &trace.head_probs, divergence, symmetrize)?;
        let back = model.backward(&trace, &d_probs, true)?;
        let g = back
            .d_input
            .ok_or_else(|| Error::NonFinite("missing input gradient".to_string()))?;
        let prev = d.clone();
        d = g;
        normalize_rows(&mut d, Some(&prev))?;
    }

    let r = epsilon * &d;
    debug_assert!(super::per_sample_norms(&r)
        .iter()
        .all(|n| (n - epsilon).abs() <= 1e-6 * epsilon.max(1.0)));
    let out = (x + &r).mapv(|v| v.clamp(0.0, 1.0));
    Ok((r, ImageBatch::new(out)?))
}

/// Returns `clamp(x + r)` where `‖r‖₂ = ε` per sample (asserted before the
/// clamp) and `r` points along the estimated adversarial direction of
/// `divergence`.
///
/// `spec.kind` must match the divergence: `vat` with [`VatDivergence::Kl`],
/// `ivat` with [`VatDivergence::NegMi`]. `ε = 0` returns the input
/// unchanged. Deterministic given identical parameters and seed.
pub fn vat_perturbation(
    model: &ClusterModel,
    batch: &ImageBatch,
    spec: &TransformSpec,
    divergence: VatDivergence,
    symmetrize: bool,
    seed: u64,
) -> Result<ImageBatch> {
    vat_impl(model, batch, spec, divergence, symmetrize, seed).map(|(_, out)| out)
}

/// The pre-clamp perturbation `r`, for norm and direction checks.
pub fn vat_direction(
    model: &ClusterModel,
    batch: &ImageBatch,
    spec: &TransformSpec,
    divergence: VatDivergence,
    symmetrize: bool,
    seed: u64,
) -> Result<Array4<f64>> {
    vat_impl(model, batch, spec, divergence, symmetrize, seed).map(|(r, _)| r)
}
