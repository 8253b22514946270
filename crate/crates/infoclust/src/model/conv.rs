//! 3×3 stride-2 pad-1 convolution via im2col and one GEMM per batch chunk.
//!
//! Chunk boundaries are a fixed constant, so results are bit-identical
//! regardless of how many rayon workers run them.

use ndarray::{Array1, Array2, Array4, Axis};
use rayon::prelude::*;

pub const KERNEL: usize = 3;
pub const STRIDE: usize = 2;
pub const PAD: usize = 1;
const CHUNK: usize = 32;

/// Output side length for one conv layer.
pub fn conv_out_side(side: usize) -> usize {
    (side + 2 * PAD - KERNEL) / STRIDE + 1
}

/// Gathers 3×3 patches of `input[b0..b0+n]` into a `(C·9) × (n·OH·OW)`
/// column matrix, zero-padding out-of-range taps.
fn im2col(input: &Array4<f64>, b0: usize, n: usize, oh: usize, ow: usize) -> Array2<f64> {
    let (_, c, h, w) = input.dim();
    let mut cols = Array2::zeros((c * KERNEL * KERNEL, n * oh * ow));
    let src = input.as_slice().expect("contiguous input");
    let plane_len = h * w;
    for row in 0..c * KERNEL * KERNEL {
        let ci = row / (KERNEL * KERNEL);
        let ky = (row / KERNEL) % KERNEL;
        let kx = row % KERNEL;
        let dst = cols.row_mut(row);
        let dst = dst.into_slice().expect("contiguous row");
        for bi in 0..n {
            let plane = &src[((b0 + bi) * c + ci) * plane_len..][..plane_len];
            for oy in 0..oh {
                let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                let src_row = &plane[iy as usize * w..][..w];
                let base = bi * oh * ow + oy * ow;
                // ix = ox·2 + kx − 1; clip ox so ix stays inside the row.
                let ox_lo = if kx < PAD { (PAD - kx).div_ceil(STRIDE) } else { 0 };
                let ox_hi = (w + PAD - kx + STRIDE - 1) / STRIDE;
                let ox_hi = ox_hi.min(ow);
                let mut ix = ox_lo * STRIDE + kx - PAD;
                for slot in dst[base + ox_lo..base + ox_hi].iter_mut() {
                    *slot = src_row[ix];
                    ix += STRIDE;
                }
            }
        }
    }
    cols
}

/// Scatters a `(C·9) × (n·OH·OW)` column gradient back onto image space
/// (the adjoint of [`im2col`]).
fn col2im(
    d_cols: &Array2<f64>,
    shape: (usize, usize, usize),
    n: usize,
    oh: usize,
    ow: usize,
) -> Array4<f64> {
    let (c, h, w) = shape;
    let mut out = Array4::zeros((n, c, h, w));
    let dst = out.as_slice_mut().expect("contiguous output");
    let plane_len = h * w;
    for row in 0..c * KERNEL * KERNEL {
        let ci = row / (KERNEL * KERNEL);
        let ky = (row / KERNEL) % KERNEL;
        let kx = row % KERNEL;
        let src = d_cols.row(row);
        let src = src.to_slice().expect("contiguous row");
        for bi in 0..n {
            let plane = &mut dst[(bi * c + ci) * plane_len..][..plane_len];
            for oy in 0..oh {
                let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                let dst_row = &mut plane[iy as usize * w..][..w];
                let base = bi * oh * ow + oy * ow;
                let ox_lo = if kx < PAD { (PAD - kx).div_ceil(STRIDE) } else { 0 };
                let ox_hi = ((w + PAD - kx + STRIDE - 1) / STRIDE).min(ow);
                let mut ix = ox_lo * STRIDE + kx - PAD;
                for &g in src[base + ox_lo..base + ox_hi].iter() {
                    dst_row[ix] += g;
                    ix += STRIDE;
                }
            }
        }
    }
    out
}

/// Forward convolution; `w` is `OC × (IC·9)`, `b` is `OC`. No activation.
pub fn conv_forward(input: &Array4<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array4<f64> {
    let (batch, _, h, win) = input.dim();
    let (oc, _) = w.dim();
    let oh = conv_out_side(h);
    let ow = conv_out_side(win);

    let starts: Vec<usize> = (0..batch).step_by(CHUNK).collect();
    let slabs: Vec<Array2<f64>> = starts
        .par_iter()
        .map(|&b0| {
            let n = CHUNK.min(batch - b0);
            let cols = im2col(input, b0, n, oh, ow);
            w.dot(&cols)
        })
        .collect();

    let mut out = Array4::zeros((batch, oc, oh, ow));
    let dst = out.as_slice_mut().expect("contiguous output");
    let cell = oh * ow;
    for (&b0, slab) in starts.iter().zip(&slabs) {
        let n = slab.ncols() / cell;
        for o in 0..oc {
            let src_row = slab.row(o);
            let src_row = src_row.to_slice().expect("contiguous row");
            let bias = b[o];
            for bi in 0..n {
                let dst_cell = &mut dst[((b0 + bi) * oc + o) * cell..][..cell];
                for (d, &s) in dst_cell.iter_mut().zip(&src_row[bi * cell..][..cell]) {
                    *d = s + bias;
                }
            }
        }
    }
    out
}

/// Backward convolution: weight/bias gradients and, when requested, the
/// input gradient. `d_out` is `B × OC × OH × OW`.
pub fn conv_backward(
    input: &Array4<f64>,
    w: &Array2<f64>,
    d_out: &Array4<f64>,
    need_d_input: bool,
) -> (Array2<f64>, Array1<f64>, Option<Array4<f64>>) {
    let (batch, c, h, win) = input.dim();
    let (_, oc, oh, ow) = d_out.dim();

    let starts: Vec<usize> = (0..batch).step_by(CHUNK).collect();
    let parts: Vec<(Array2<f64>, Array1<f64>, Option<Array4<f64>>)> = starts
        .par_iter()
        .map(|&b0| {
            let n = CHUNK.min(batch - b0);
            let cols = im2col(input, b0, n, oh, ow);
            // Pack this chunk's d_out as OC × (n·OH·OW).
            let cell = oh * ow;
            let d_src = d_out.as_slice().expect("contiguous gradient");
            let mut dmat = Array2::zeros((oc, n * cell));
            for o in 0..oc {
                let row = dmat.row_mut(o);
                let row = row.into_slice().expect("contiguous row");
                for bi in 0..n {
                    row[bi * cell..][..cell]
                        .copy_from_slice(&d_src[((b0 + bi) * oc + o) * cell..][..cell]);
                }
            }
            let dw = dmat.dot(&cols.t());
            let db = dmat.sum_axis(Axis(1));
            let d_in = need_d_input.then(|| {
                let d_cols = w.t().dot(&dmat);
                col2im(&d_cols, (c, h, win), n, oh, ow)
            });
            (dw, db, d_in)
        })
        .collect();

    let mut dw = Array2::zeros(w.raw_dim());
    let mut db = Array1::zeros(oc);
    let mut d_input = need_d_input.then(|| Array4::zeros((batch, c, h, win)));
    for (&b0, (pdw, pdb, pdin)) in starts.iter().zip(&parts) {
        dw += pdw;
        db += pdb;
        if let (Some(acc), Some(p)) = (d_input.as_mut(), pdin.as_ref()) {
            let n = p.dim().0;
            acc.slice_mut(ndarray::s![b0..b0 + n, .., .., ..]).assign(p);
        }
    }
    (dw, db, d_input)
}
