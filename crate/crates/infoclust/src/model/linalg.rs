//! Deterministic chunk-parallel matrix multiply.

use ndarray::Array2;
use rayon::prelude::*;

const ROW_CHUNK: usize = 64;

/// `a · b`, splitting `a` into fixed-size row chunks processed in parallel.
/// Each output element is produced by exactly one single-threaded GEMM, so
/// the result does not depend on the worker count.
pub fn par_dot(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, _) = a.dim();
    let m = b.ncols();
    if n <= ROW_CHUNK {
        return a.dot(b);
    }
    let starts: Vec<usize> = (0..n).step_by(ROW_CHUNK).collect();
    let slabs: Vec<Array2<f64>> = starts
        .par_iter()
        .map(|&r0| {
            let r1 = (r0 + ROW_CHUNK).min(n);
            a.slice(ndarray::s![r0..r1, ..]).dot(b)
        })
        .collect();
    let mut out = Array2::zeros((n, m));
    for (&r0, slab) in starts.iter().zip(&slabs) {
        out.slice_mut(ndarray::s![r0..r0 + slab.nrows(), ..]).assign(slab);
    }
    out
}
