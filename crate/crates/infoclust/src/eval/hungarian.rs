//! Minimum-cost assignment via shortest augmenting paths with potentials
//! (the O(n³) form of the Hungarian method).

use ndarray::Array2;

use crate::error::{Error, Result};

/// Returns the permutation `π` minimizing `Σ_i cost[i][π(i)]` for a square
/// cost matrix. Costs may be negative; entries must be finite.
pub fn hungarian(cost: &Array2<f64>) -> Result<Vec<usize>> {
    let n = cost.nrows();
    if n != cost.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "cost matrix must be square, got {}×{}",
            n,
            cost.ncols()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("hungarian cost matrix".to_string()));
    }

    // 1-based arrays; p[j] = row matched to column j, 0 = unmatched.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        // Unwind the augmenting path.
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    Ok(assignment)
}

/// Total cost of an assignment under a cost matrix.
pub fn assignment_cost(cost: &Array2<f64>, assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[(i, j)])
        .sum()
}
