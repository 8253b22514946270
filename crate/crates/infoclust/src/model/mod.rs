//! The clustering network: a small convolutional encoder with one or more
//! softmax heads, over-clustering support, manual backpropagation, and
//! Adam updates.
//!
//! Convolutions are fixed at 3×3, stride 2, zero padding 1, each followed by
//! ReLU, then an optional hidden fully-connected ReLU layer, then one affine
//! + softmax per head. The layout is described by [`ArchDescriptor`]; an
//! empty `conv_channels` with no hidden layer yields a plain linear softmax
//! model, which the adversarial-transform tests rely on.
//!
//! All forward/backward passes are pure with respect to the parameters, so
//! they may run concurrently against a frozen model; [`adam::step`] requires
//! exclusive access.

use ndarray::{Array1, Array2, Array4, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::grad::{prob_grad_to_logit_grad, softmax};
use crate::math::ProbBatch;
use crate::transforms::ImageBatch;

pub mod adam;
pub mod checkpoint;
mod conv;
mod linalg;

pub use adam::{AdamParams, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};

use conv::{conv_backward, conv_forward, conv_out_side};
use linalg::par_dot;

/// Shape of the network. `conv_channels` lists output channels of the
/// stride-2 conv stack; `heads` lists the cluster count of each softmax
/// head. Heads whose width equals `n_classes` are primary; wider heads are
/// over-clustering heads and never enter accuracy evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchDescriptor {
    pub input_shape: (usize, usize, usize),
    pub conv_channels: Vec<usize>,
    pub fc_hidden: Option<usize>,
    pub heads: Vec<usize>,
    pub n_classes: usize,
}

impl ArchDescriptor {
    /// Desk-scale default backbone: conv 32/64, hidden 128.
    pub fn desk(input_shape: (usize, usize, usize), heads: Vec<usize>, n_classes: usize) -> Self {
        Self {
            input_shape,
            conv_channels: vec![32, 64],
            fc_hidden: Some(128),
            heads,
            n_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (c, h, w) = self.input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidParameter(format!(
                "input shape {:?} has a zero dimension",
                self.input_shape
            )));
        }
        if self.heads.is_empty() {
            return Err(Error::InvalidParameter(
                "descriptor has no layers: at least one head is required".to_string(),
            ));
        }
        if self.n_classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "n_classes must be ≥ 2, got {}",
                self.n_classes
            )));
        }
        if self.heads.iter().any(|&k| k < 2) {
            return Err(Error::InvalidParameter(
                "every head needs at least 2 clusters".to_string(),
            ));
        }
        if !self.heads.contains(&self.n_classes) {
            return Err(Error::InvalidParameter(format!(
                "no primary head: none of {:?} equals n_classes {}",
                self.heads, self.n_classes
            )));
        }
        if self.conv_channels.iter().any(|&ch| ch == 0) {
            return Err(Error::InvalidParameter("conv layer with 0 channels".to_string()));
        }
        if self.fc_hidden == Some(0) {
            return Err(Error::InvalidParameter("fc_hidden must be ≥ 1".to_string()));
        }
        Ok(())
    }

    /// Flattened width of the representation feeding the FC/head stack.
    pub fn conv_flat_dim(&self) -> usize {
        let (c, mut h, mut w) = self.input_shape;
        let mut ch = c;
        for &oc in &self.conv_channels {
            h = conv_out_side(h);
            w = conv_out_side(w);
            ch = oc;
        }
        ch * h * w
    }

    /// Input width of the head affines.
    pub fn head_in_dim(&self) -> usize {
        self.fc_hidden.unwrap_or_else(|| self.conv_flat_dim())
    }

    /// Indices of heads evaluated against labels (width == n_classes).
    pub fn primary_heads(&self) -> Vec<usize> {
        self.heads
            .iter()
            .enumerate()
            .filter(|(_, &k)| k == self.n_classes)
            .map(|(i, _)| i)
            .collect()
    }
}

/// One affine layer; convolution weights are stored flattened as
/// `out_channels × in_channels·9`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Dense {
        Dense {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }
}

/// Gradient (or moment) structure congruent with the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub convs: Vec<Dense>,
    pub fc: Option<Dense>,
    pub heads: Vec<Dense>,
}

impl ModelGrads {
    pub fn add_assign(&mut self, other: &ModelGrads) {
        for (a, b) in self.convs.iter_mut().zip(&other.convs) {
            a.w += &b.w;
            a.b += &b.b;
        }
        if let (Some(a), Some(b)) = (self.fc.as_mut(), other.fc.as_ref()) {
            a.w += &b.w;
            a.b += &b.b;
        }
        for (a, b) in self.heads.iter_mut().zip(&other.heads) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.for_each_mut(|t| *t *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.layers()
            .all(|l| l.w.iter().all(|v| v.is_finite()) && l.b.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for l in self.layers() {
            for v in l.w.iter().chain(l.b.iter()) {
                m = m.max(v.abs());
            }
        }
        m
    }

    pub(crate) fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.convs.iter().chain(self.fc.iter()).chain(self.heads.iter())
    }

    pub(crate) fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.convs
            .iter_mut()
            .chain(self.fc.iter_mut())
            .chain(self.heads.iter_mut())
    }

    fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for l in self.layers_mut() {
            for v in l.w.iter_mut() {
                f(v);
            }
            for v in l.b.iter_mut() {
                f(v);
            }
        }
    }
}

/// The parameterized clustering network.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    desc: ArchDescriptor,
    convs: Vec<Dense>,
    fc: Option<Dense>,
    heads: Vec<Dense>,
}

/// Intermediate activations of one forward pass, kept for backpropagation.
pub struct ForwardTrace {
    input: Array4<f64>,
    /// Post-ReLU output of each conv layer.
    conv_outputs: Vec<Array4<f64>>,
    /// Flattened representation feeding the FC/head stack.
    flat: Array2<f64>,
    /// Post-ReLU hidden FC output, when the layer exists.
    fc_out: Option<Array2<f64>>,
    /// Softmax output per head.
    pub head_probs: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.input.dim().0
    }

    pub fn probs(&self, head: usize) -> Result<ProbBatch> {
        let p = self
            .head_probs
            .get(head)
            .ok_or(Error::UnknownHead(head))?;
        ProbBatch::new(p.clone())
    }
}

/// Feature taps for linear probing.
pub struct Taps {
    /// Flattened output of the conv stack.
    pub conv: Array2<f64>,
    /// Hidden fully-connected activations (equals `conv` when the model has
    /// no hidden layer).
    pub fc: Array2<f64>,
}

/// Result of a backward pass.
pub struct BackwardOutput {
    pub grads: ModelGrads,
    /// Gradient w.r.t. the input images, when requested.
    pub d_input: Option<Array4<f64>>,
}

impl ClusterModel {
    /// Fan-in-scaled uniform initialization (He bound `√(6/fan_in)`, the
    /// ReLU-preserving scale), deterministic given the seed.
    pub fn init(desc: ArchDescriptor, seed: u64) -> Result<Self> {
        desc.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rows: usize, cols: usize| -> Dense {
            let bound = (6.0 / cols as f64).sqrt();
            let mut w = Array2::zeros((rows, cols));
            for v in w.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
            Dense {
                w,
                b: Array1::zeros(rows),
            }
        };

        let mut convs = Vec::new();
        let mut in_ch = desc.input_shape.0;
        for &oc in &desc.conv_channels {
            convs.push(draw(oc, in_ch * 9));
            in_ch = oc;
        }
        let flat_dim = desc.conv_flat_dim();
        let fc = desc.fc_hidden.map(|hdim| {
            let mut l = draw(hdim, flat_dim);
            // Stored transposed (in × out) so forward is x·w.
            l.w = l.w.t().to_owned();
            l
        });
        let head_in = desc.head_in_dim();
        let heads = desc
            .heads
            .iter()
            .map(|&k| {
                let mut l = draw(k, head_in);
                l.w = l.w.t().to_owned();
                l
            })
            .collect();
        Ok(Self {
            desc,
            convs,
            fc,
            heads,
        })
    }

    pub fn descriptor(&self) -> &ArchDescriptor {
        &self.desc
    }

    pub fn n_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            convs: self.convs.iter().map(Dense::zeros_like).collect(),
            fc: self.fc.as_ref().map(Dense::zeros_like),
            heads: self.heads.iter().map(Dense::zeros_like).collect(),
        }
    }

    /// Full forward pass over every head, keeping activations for backward.
    pub fn forward_trace(&self, x: &Array4<f64>) -> Result<ForwardTrace> {
        let (_, c, h, w) = x.dim();
        if (c, h, w) != self.desc.input_shape {
            return Err(Error::ShapeMismatch(format!(
                "input {:?} does not match descriptor {:?}",
                (c, h, w),
                self.desc.input_shape
            )));
        }
        let mut conv_outputs = Vec::with_capacity(self.convs.len());
        let mut cur = x.clone();
        for conv in &self.convs {
            let mut out = conv_forward(&cur, &conv.w, &conv.b);
            out.mapv_inplace(|v| v.max(0.0));
            conv_outputs.push(out.clone());
            cur = out;
        }
        let b = x.dim().0;
        let flat = cur
            .into_shape_with_order((b, self.desc.conv_flat_dim()))
            .expect("conv output is contiguous");
        let fc_out = self.fc.as_ref().map(|fc| {
            let mut z = par_dot(&flat, &fc.w);
            z += &fc.b;
            z.mapv_inplace(|v| v.max(0.0));
            z
        });
        let head_in = fc_out.as_ref().unwrap_or(&flat);
        let head_probs = self
            .heads
            .iter()
            .map(|head| {
                let mut z = par_dot(head_in, &head.w);
                z += &head.b;
                softmax(&z)
            })
            .collect();
        Ok(ForwardTrace {
            input: x.clone(),
            conv_outputs,
            flat,
            fc_out,
            head_probs,
        })
    }

    /// Posterior of one head over a batch.
    pub fn forward(&self, batch: &ImageBatch, head: usize) -> Result<ProbBatch> {
        if head >= self.heads.len() {
            return Err(Error::UnknownHead(head));
        }
        let trace = self.forward_trace(batch.as_array())?;
        trace.probs(head)
    }

    /// Posterior plus feature taps for the probe protocol.
    pub fn forward_taps(&self, batch: &ImageBatch, head: usize) -> Result<(ProbBatch, Taps)> {
        if head >= self.heads.len() {
            return Err(Error::UnknownHead(head));
        }
        let trace = self.forward_trace(batch.as_array())?;
        let probs = trace.probs(head)?;
        let fc = trace.fc_out.clone().unwrap_or_else(|| trace.flat.clone());
        Ok((
            probs,
            Taps {
                conv: trace.flat,
                fc,
            },
        ))
    }

    /// Backpropagates per-head gradients w.r.t. the softmax outputs down to
    /// parameter gradients (and optionally the input).
    ///
    /// `d_probs[h]` is `∂L/∂p_h`; heads without a contribution pass `None`.
    /// Contributions are additive across heads: backward of a sum of
    /// injections equals the sum of backward passes.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        d_probs: &[Option<Array2<f64>>],
        want_input_grad: bool,
    ) -> Result<BackwardOutput> {
        if d_probs.len() != self.heads.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} gradient slots for {} heads",
                d_probs.len(),
                self.heads.len()
            )));
        }
        let b = trace.batch_size();
        let mut grads = self.zero_grads();
        let head_in = trace.fc_out.as_ref().unwrap_or(&trace.flat);
        let mut d_head_in: Array2<f64> = Array2::zeros(head_in.raw_dim());

        for (h, (head, d_p)) in self.heads.iter().zip(d_probs).enumerate() {
            let Some(d_p) = d_p else { continue };
            let probs = &trace.head_probs[h];
            if d_p.raw_dim() != probs.raw_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "head {h} gradient {:?} vs probs {:?}",
                    d_p.dim(),
                    probs.dim()
                )));
            }
            let dz = prob_grad_to_logit_grad(probs, d_p);
            grads.heads[h].w = par_dot(&head_in.t().to_owned(), &dz);
            grads.heads[h].b = dz.sum_axis(Axis(0));
            d_head_in += &par_dot(&dz, &head.w.t().to_owned());
        }

        let mut d_flat = if let (Some(fc), Some(fc_out)) = (&self.fc, &trace.fc_out) {
            // ReLU mask, then affine backward.
            let mut dz = d_head_in;
            dz.zip_mut_with(fc_out, |g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
            let gfc = grads.fc.as_mut().expect("fc grads exist when fc exists");
            gfc.w = par_dot(&trace.flat.t().to_owned(), &dz);
            gfc.b = dz.sum_axis(Axis(0));
            par_dot(&dz, &fc.w.t().to_owned())
        } else {
            d_head_in
        };

        if self.convs.is_empty() {
            let d_input = if want_input_grad {
                let (_, c, h, w) = trace.input.dim();
                Some(
                    d_flat
                        .into_shape_with_order((b, c, h, w))
                        .expect("contiguous"),
                )
            } else {
                None
            };
            return Ok(BackwardOutput { grads, d_input });
        }

        // Reshape into the last conv output and walk the stack backwards.
        let last = self.convs.len() - 1;
        let (_, lc, lh, lw) = trace.conv_outputs[last].dim();
        let mut d_out = d_flat
            .view_mut()
            .to_owned()
            .into_shape_with_order((b, lc, lh, lw))
            .expect("contiguous");
        for i in (0..self.convs.len()).rev() {
            // ReLU mask on this layer's output.
            d_out.zip_mut_with(&trace.conv_outputs[i], |g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
            let layer_in = if i == 0 {
                &trace.input
            } else {
                &trace.conv_outputs[i - 1]
            };
            let need_d_in = i > 0 || want_input_grad;
            let (dw, db, d_in) = conv_backward(layer_in, &self.convs[i].w, &d_out, need_d_in);
            grads.convs[i].w = dw;
            grads.convs[i].b = db;
            match d_in {
                Some(d) => d_out = d,
                None => {
                    return Ok(BackwardOutput {
                        grads,
                        d_input: None,
                    })
                }
            }
        }
        Ok(BackwardOutput {
            grads,
            d_input: Some(d_out),
        })
    }

    /// Evaluates a loss closure on the head posteriors and returns its value
    /// with gradients for all trainable parameters.
    ///
    /// The closure receives one [`ProbBatch`] per head and returns the loss
    /// scalar together with `∂loss/∂p` per head (`None` for heads the loss
    /// ignores).
    pub fn grad<F>(&self, x: &Array4<f64>, loss: F) -> Result<(f64, ModelGrads)>
    where
        F: FnOnce(&[ProbBatch]) -> Result<(f64, Vec<Option<Array2<f64>>>)>,
    {
        let trace = self.forward_trace(x)?;
        let probs: Vec<ProbBatch> = trace
            .head_probs
            .iter()
            .map(|p| ProbBatch::new(p.clone()))
            .collect::<Result<_>>()?;
        let (value, d_probs) = loss(&probs)?;
        if !value.is_finite() {
            return Err(Error::NonFinite("loss value".to_string()));
        }
        let out = self.backward(&trace, &d_probs, false)?;
        if !out.grads.is_finite() {
            return Err(Error::NonFinite("parameter gradients".to_string()));
        }
        Ok((value, out.grads))
    }

    pub(crate) fn layers(&self) -> impl Iterator<Item = (&Dense, String)> {
        self.convs
            .iter()
            .enumerate()
            .map(|(i, l)| (l, format!("conv{i}")))
            .chain(self.fc.iter().map(|l| (l, "fc".to_string())))
            .chain(
                self.heads
                    .iter()
                    .enumerate()
                    .map(|(i, l)| (l, format!("head{i}"))),
            )
    }

    pub(crate) fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.convs
            .iter_mut()
            .chain(self.fc.iter_mut())
            .chain(self.heads.iter_mut())
    }

    /// Overwrites one head's affine parameters: `w` is `in_dim × K`, so the
    /// head computes `softmax(x·w + b)`. Handy for constructing models with
    /// known weights.
    pub fn set_head_affine(&mut self, head: usize, w: Array2<f64>, b: &[f64]) {
        assert_eq!(w.raw_dim(), self.heads[head].w.raw_dim(), "weight shape");
        assert_eq!(b.len(), self.heads[head].b.len(), "bias length");
        self.heads[head].w = w;
        self.heads[head].b = Array1::from(b.to_vec());
    }

    /// Replaces every head with `heads` freshly initialized ones; used by the
    /// fine-tuning mode.
    pub fn reset_heads(&mut self, heads: Vec<usize>, n_classes: usize, seed: u64) -> Result<()> {
        self.desc.heads = heads;
        self.desc.n_classes = n_classes;
        self.desc.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head_in = self.desc.head_in_dim();
        self.heads = self
            .desc
            .heads
            .iter()
            .map(|&k| {
                let bound = 1.0 / (head_in as f64).sqrt();
                let mut w = Array2::zeros((head_in, k));
                for v in w.iter_mut() {
                    *v = rng.random_range(-bound..bound);
                }
                Dense {
                    w,
                    b: Array1::zeros(k),
                }
            })
            .collect();
        Ok(())
    }
}
