//! Input transformations `T(X)`: geometric augmentation, weak geometric
//! cropping, mixup, and (information-)virtual-adversarial perturbations.
//!
//! Every transform is deterministic given its seed, preserves the batch
//! shape, and keeps values in `[0, 1]`. Geometric-family transforms draw
//! per-sample randomness from independent seed streams so samples can be
//! processed in parallel without changing results.

use ndarray::{Array1, Array4};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::ProbBatch;
use crate::rng::derive_seed;

mod vat;

pub use vat::{divergence_value, vat_direction, vat_perturbation, VatDivergence};

/// A batch of images: `B×C×H×W`, all values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch(Array4<f64>);

impl ImageBatch {
    pub fn new(data: Array4<f64>) -> Result<Self> {
        let (b, _, _, _) = data.dim();
        if b == 0 {
            return Err(Error::EmptyBatch);
        }
        if data.iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter(
                "image values must lie in [0, 1]".to_string(),
            ));
        }
        Ok(Self(data))
    }

    pub fn dim(&self) -> (usize, usize, usize, usize) {
        self.0.dim()
    }

    pub fn len(&self) -> usize {
        self.0.dim().0
    }

    pub fn is_empty(&self) -> bool {
        false // B ≥ 1 by construction
    }

    pub fn as_array(&self) -> &Array4<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array4<f64> {
        self.0
    }
}

/// Parameters of one transformation. Chains of these make up a named
/// transform binding in an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformSpec {
    Identity,
    /// Random crop → resize back → horizontal flip → brightness/contrast
    /// jitter, each drawn independently per sample.
    Geometric {
        /// Crop side as a fraction of the original, sampled uniformly in
        /// `[crop_min, crop_max]` (unless `scale_set` is non-empty).
        crop_min: f64,
        crop_max: f64,
        /// Optional discrete set of crop scales; overrides the range.
        #[serde(default)]
        scale_set: Vec<f64>,
        flip_prob: f64,
        /// Additive brightness jitter, drawn in `±brightness`.
        brightness: f64,
        /// Multiplicative contrast jitter, drawn in `1 ± contrast`.
        contrast: f64,
    },
    /// Random crop `margin` pixels smaller than the input, resized back.
    WeakGeometric { margin: usize },
    /// Convex combination of sample pairs with Beta(alpha, alpha) weights.
    Mixup { alpha: f64 },
    /// Adversarial perturbation maximizing KL divergence (power method).
    Vat {
        epsilon: f64,
        power_iterations: usize,
        /// Probe radius inside the power iteration; defaults to
        /// `1e-6·√(input dimension)` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        xi: Option<f64>,
    },
    /// Adversarial perturbation maximizing −MI(Y,Ỹ) instead of KL.
    Ivat {
        epsilon: f64,
        power_iterations: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        xi: Option<f64>,
    },
}

impl TransformSpec {
    /// Sensible geometric defaults for digit-style datasets: flips change
    /// digit identity, so they stay off.
    pub fn geometric_default(flips: bool) -> Self {
        TransformSpec::Geometric {
            crop_min: 0.6,
            crop_max: 1.0,
            scale_set: Vec::new(),
            flip_prob: if flips { 0.5 } else { 0.0 },
            brightness: 0.125,
            contrast: 0.125,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TransformSpec::Identity => Ok(()),
            TransformSpec::Geometric {
                crop_min,
                crop_max,
                scale_set,
                flip_prob,
                brightness,
                contrast,
            } => {
                if !(0.0 < *crop_min && crop_min <= crop_max && *crop_max <= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "crop range [{crop_min}, {crop_max}] must satisfy 0 < min ≤ max ≤ 1"
                    )));
                }
                if scale_set.iter().any(|s| !(0.0 < *s && *s <= 1.0)) {
                    return Err(Error::InvalidParameter(
                        "scale_set entries must lie in (0, 1]".to_string(),
                    ));
                }
                if !(0.0..=1.0).contains(flip_prob) {
                    return Err(Error::InvalidParameter(format!(
                        "flip probability {flip_prob} outside [0, 1]"
                    )));
                }
                if *brightness < 0.0 || *contrast < 0.0 {
                    return Err(Error::InvalidParameter(
                        "jitter ranges must be ≥ 0".to_string(),
                    ));
                }
                Ok(())
            }
            TransformSpec::WeakGeometric { .. } => Ok(()),
            TransformSpec::Mixup { alpha } => {
                if *alpha <= 0.0 || !alpha.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "mixup alpha must be positive, got {alpha}"
                    )));
                }
                Ok(())
            }
            TransformSpec::Vat {
                epsilon,
                power_iterations,
                xi,
            }
            | TransformSpec::Ivat {
                epsilon,
                power_iterations,
                xi,
            } => {
                if *epsilon < 0.0 || !epsilon.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "vat epsilon must be finite and ≥ 0, got {epsilon}"
                    )));
                }
                if *power_iterations == 0 {
                    return Err(Error::InvalidParameter(
                        "vat power_iterations must be ≥ 1".to_string(),
                    ));
                }
                if let Some(xi) = xi {
                    if *xi <= 0.0 || !xi.is_finite() {
                        return Err(Error::InvalidParameter(format!(
                            "vat xi must be positive, got {xi}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Mixup bookkeeping: mixed images plus the pairing and coefficients, so
/// outputs can be mixed the same way.
#[derive(Debug, Clone)]
pub struct MixupPair {
    pub mixed_input: ImageBatch,
    /// Random permutation of `0..B`; self-pairing allowed.
    pub partner_indices: Vec<usize>,
    /// Beta(alpha, alpha) draws, one per sample.
    pub alphas: Vec<f64>,
}

fn per_sample_rng(seed: u64, sample: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[sample as u64]))
}

/// Bilinear resample of one channel plane from `src` (h_s×w_s starting at
/// `(top, left)` within the full image) to `dst_h×dst_w`.
#[allow(clippy::too_many_arguments)]
fn resize_region(
    src: &ndarray::ArrayView2<f64>,
    top: usize,
    left: usize,
    h_s: usize,
    w_s: usize,
    dst_h: usize,
    dst_w: usize,
    out: &mut ndarray::ArrayViewMut2<f64>,
) {
    if h_s == dst_h && w_s == dst_w {
        for y in 0..dst_h {
            for x in 0..dst_w {
                out[(y, x)] = src[(top + y, left + x)];
            }
        }
        return;
    }
    let sy = h_s as f64 / dst_h as f64;
    let sx = w_s as f64 / dst_w as f64;
    for y in 0..dst_h {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h_s - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h_s - 1);
        let wy = fy - y0 as f64;
        for x in 0..dst_w {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (w_s - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w_s - 1);
            let wx = fx - x0 as f64;
            let v00 = src[(top + y0, left + x0)];
            let v01 = src[(top + y0, left + x1)];
            let v10 = src[(top + y1, left + x0)];
            let v11 = src[(top + y1, left + x1)];
            out[(y, x)] = v00 * (1.0 - wy) * (1.0 - wx)
                + v01 * (1.0 - wy) * wx
                + v10 * wy * (1.0 - wx)
                + v11 * wy * wx;
        }
    }
}

/// Geometric augmentation: per-sample random crop, resize back to the
/// original size, horizontal flip, and brightness/contrast jitter.
pub fn geometric(batch: &ImageBatch, spec: &TransformSpec, seed: u64) -> Result<ImageBatch> {
    let TransformSpec::Geometric {
        crop_min,
        crop_max,
        scale_set,
        flip_prob,
        brightness,
        contrast,
    } = spec
    else {
        return Err(Error::InvalidParameter(format!(
            "geometric() requires a geometric spec, got {spec:?}"
        )));
    };
    spec.validate()?;
    let (b, c, h, w) = batch.dim();
    let mut out = Array4::zeros((b, c, h, w));
    let src = batch.as_array();
    for bi in 0..b {
        let mut rng = per_sample_rng(seed, bi);
        let frac = if scale_set.is_empty() {
            rng.random_range(*crop_min..=*crop_max)
        } else {
            scale_set[rng.random_range(0..scale_set.len())]
        };
        let ch = ((h as f64 * frac).round() as usize).clamp(1, h);
        let cw = ((w as f64 * frac).round() as usize).clamp(1, w);
        if ch > h || cw > w {
            return Err(Error::InvalidParameter(format!(
                "crop {ch}×{cw} larger than image {h}×{w}"
            )));
        }
        let top = rng.random_range(0..=(h - ch));
        let left = rng.random_range(0..=(w - cw));
        let flip = rng.random_range(0.0..1.0) < *flip_prob;
        let bright = if *brightness > 0.0 {
            rng.random_range(-*brightness..=*brightness)
        } else {
            0.0
        };
        let contr = if *contrast > 0.0 {
            rng.random_range(1.0 - *contrast..=1.0 + *contrast)
        } else {
            1.0
        };
        let identity_photo = bright == 0.0 && contr == 1.0;

        for ci in 0..c {
            let plane = src.index_axis(ndarray::Axis(0), bi);
            let plane = plane.index_axis(ndarray::Axis(0), ci);
            let mut dst = out.index_axis_mut(ndarray::Axis(0), bi);
            let mut dst = dst.index_axis_mut(ndarray::Axis(0), ci);
            resize_region(&plane, top, left, ch, cw, h, w, &mut dst);
            if flip {
                for y in 0..h {
                    for x in 0..w / 2 {
                        dst.swap((y, x), (y, w - 1 - x));
                    }
                }
            }
            if !identity_photo {
                let mean = dst.sum() / (h * w) as f64;
                for v in dst.iter_mut() {
                    *v = (mean + contr * (*v - mean) + bright).clamp(0.0, 1.0);
                }
            }
        }
    }
    ImageBatch::new(out)
}

/// Weak geometric transform: a random crop `margin` pixels smaller than the
/// input, resized back. Margin 0 is the identity.
pub fn weak_geometric(batch: &ImageBatch, spec: &TransformSpec, seed: u64) -> Result<ImageBatch> {
    let TransformSpec::WeakGeometric { margin } = spec else {
        return Err(Error::InvalidParameter(format!(
            "weak_geometric() requires a weak_geometric spec, got {spec:?}"
        )));
    };
    let (b, c, h, w) = batch.dim();
    let m = *margin;
    if m >= h.min(w) {
        return Err(Error::InvalidParameter(format!(
            "margin {m} must be smaller than min(H, W) = {}",
            h.min(w)
        )));
    }
    if m == 0 {
        return Ok(batch.clone());
    }
    let (ch, cw) = (h - m, w - m);
    let src = batch.as_array();
    let mut out = Array4::zeros((b, c, h, w));
    for bi in 0..b {
        let mut rng = per_sample_rng(seed, bi);
        let top = rng.random_range(0..=m);
        let left = rng.random_range(0..=m);
        for ci in 0..c {
            let plane = src.index_axis(ndarray::Axis(0), bi);
            let plane = plane.index_axis(ndarray::Axis(0), ci);
            let mut dst = out.index_axis_mut(ndarray::Axis(0), bi);
            let mut dst = dst.index_axis_mut(ndarray::Axis(0), ci);
            resize_region(&plane, top, left, ch, cw, h, w, &mut dst);
        }
    }
    // Bilinear interpolation of in-range values stays in range; clamp guards
    // rounding at the boundary.
    ImageBatch::new(out.mapv(|v| v.clamp(0.0, 1.0)))
}

/// Draws a mixup pairing and returns mixed images together with the
/// pairing, so posteriors can be mixed with the same coefficients.
pub fn mixup(batch: &ImageBatch, spec: &TransformSpec, seed: u64) -> Result<MixupPair> {
    let TransformSpec::Mixup { alpha } = spec else {
        return Err(Error::InvalidParameter(format!(
            "mixup() requires a mixup spec, got {spec:?}"
        )));
    };
    spec.validate()?;
    let (b, _, _, _) = batch.dim();
    if b < 2 {
        return Err(Error::InvalidParameter(
            "mixup needs a batch of at least 2 samples".to_string(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[crate::rng::tag("mixup")]));
    let mut partners: Vec<usize> = (0..b).collect();
    for i in (1..b).rev() {
        let j = rng.random_range(0..=i);
        partners.swap(i, j);
    }
    let beta = rand_distr::Beta::new(*alpha, *alpha)
        .map_err(|e| Error::InvalidParameter(format!("beta distribution: {e}")))?;
    let alphas: Vec<f64> = (0..b).map(|_| rng.sample(beta)).collect();

    let src = batch.as_array();
    let mut mixed = src.clone();
    for bi in 0..b {
        let a = alphas[bi];
        let partner = src.index_axis(ndarray::Axis(0), partners[bi]).to_owned();
        let mut dst = mixed.index_axis_mut(ndarray::Axis(0), bi);
        dst.zip_mut_with(&partner, |x, &p| *x = a * *x + (1.0 - a) * p);
    }
    Ok(MixupPair {
        mixed_input: ImageBatch::new(mixed)?,
        partner_indices: partners,
        alphas,
    })
}

/// Mixes posteriors with the pairing drawn by [`mixup`]:
/// `row_b = α_b·p_b + (1−α_b)·p_partner(b)`. Rows stay valid distributions
/// by convexity.
pub fn mixup_output(posteriors: &ProbBatch, pair: &MixupPair) -> Result<ProbBatch> {
    let b = posteriors.batch_size();
    if b != pair.partner_indices.len() {
        return Err(Error::ShapeMismatch(format!(
            "{b} posterior rows vs {} mixup partners",
            pair.partner_indices.len()
        )));
    }
    let src = posteriors.as_array();
    let mut out = src.clone();
    for bi in 0..b {
        let a = pair.alphas[bi];
        let partner = src.row(pair.partner_indices[bi]).to_owned();
        let mut row = out.row_mut(bi);
        row.zip_mut_with(&partner, |x, &p| *x = a * *x + (1.0 - a) * p);
    }
    ProbBatch::new(out)
}

/// Scatters a gradient on mixed posteriors back onto the unmixed ones
/// (the adjoint of [`mixup_output`]).
pub fn mixup_output_backward(
    d_mixed: &ndarray::Array2<f64>,
    pair: &MixupPair,
) -> ndarray::Array2<f64> {
    let mut d = ndarray::Array2::zeros(d_mixed.raw_dim());
    for bi in 0..d_mixed.nrows() {
        let a = pair.alphas[bi];
        let g = d_mixed.row(bi).to_owned();
        d.row_mut(bi).zip_mut_with(&g, |x, &v| *x += a * v);
        d.row_mut(pair.partner_indices[bi])
            .zip_mut_with(&g, |x, &v| *x += (1.0 - a) * v);
    }
    d
}

/// Per-sample L2 norms over the C×H×W axes, used by the adversarial
/// transforms and their tests.
pub fn per_sample_norms(batch: &Array4<f64>) -> Array1<f64> {
    let b = batch.dim().0;
    let mut norms = Array1::zeros(b);
    for bi in 0..b {
        let v: f64 = batch
            .index_axis(ndarray::Axis(0), bi)
            .iter()
            .map(|x| x * x)
            .sum();
        norms[bi] = v.sqrt();
    }
    norms
}

#[cfg(test)]
mod tests;
