//! Adaptive-moment parameter updates.

use serde::{Deserialize, Serialize};

use super::{ClusterModel, ModelGrads};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, congruent with the model parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: ModelGrads,
    pub v: ModelGrads,
    pub t: u64,
}

impl AdamState {
    pub fn new(model: &ClusterModel) -> Self {
        Self {
            m: model.zero_grads(),
            v: model.zero_grads(),
            t: 0,
        }
    }
}

/// One Adam step: `θ ← θ − lr·m̂ / (√v̂ + eps)` with bias-corrected moments.
/// Deterministic; zero gradients on a fresh state leave parameters intact.
pub fn step(
    model: &mut ClusterModel,
    grads: &ModelGrads,
    state: &mut AdamState,
    hp: &AdamParams,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradients in optimizer step".to_string()));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);

    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
        *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
        let mhat = *m / bc1;
        let vhat = *v / bc2;
        *p -= hp.learning_rate * mhat / (vhat.sqrt() + hp.eps);
    };

    let g_layers: Vec<_> = grads.convs.iter().chain(grads.fc.iter()).chain(grads.heads.iter()).collect();
    let m_layers: Vec<_> = state
        .m
        .convs
        .iter_mut()
        .chain(state.m.fc.iter_mut())
        .chain(state.m.heads.iter_mut())
        .collect();
    let v_layers: Vec<_> = state
        .v
        .convs
        .iter_mut()
        .chain(state.v.fc.iter_mut())
        .chain(state.v.heads.iter_mut())
        .collect();
    let p_layers: Vec<_> = model.layers_mut().collect();
    if g_layers.len() != p_layers.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} gradient layers for {} parameter layers",
            g_layers.len(),
            p_layers.len()
        )));
    }
    for (((p, g), m), v) in p_layers.into_iter().zip(g_layers).zip(m_layers).zip(v_layers) {
        if p.w.raw_dim() != g.w.raw_dim() || p.b.raw_dim() != g.b.raw_dim() {
            return Err(Error::ShapeMismatch(
                "gradient tensor shape differs from parameter".to_string(),
            ));
        }
        for ((pw, &gw), (mw, vw)) in p
            .w
            .iter_mut()
            .zip(g.w.iter())
            .zip(m.w.iter_mut().zip(v.w.iter_mut()))
        {
            update(pw, gw, mw, vw);
        }
        for ((pb, &gb), (mb, vb)) in p
            .b
            .iter_mut()
            .zip(g.b.iter())
            .zip(m.b.iter_mut().zip(v.b.iter_mut()))
        {
            update(pb, gb, mb, vb);
        }
    }
    Ok(())
}
