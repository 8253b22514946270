//! Clustering quality measurement: Hungarian-matched accuracy and the
//! linear-probe protocol on frozen features.
//!
//! Clusterings carry no label semantics, so accuracy is computed over the
//! best one-to-one cluster↔class mapping. The contingency table of
//! (predicted cluster, true class) counts is negated and fed to the
//! assignment solver; the matched count divided by N is the accuracy.

use ndarray::Array2;

use crate::error::{Error, Result};

mod hungarian;
pub mod probe;

pub use hungarian::{assignment_cost, hungarian};
pub use probe::{linear_probe, ProbeOptions};

/// K×L counts of (predicted cluster, true class) pairs.
#[derive(Debug, Clone)]
pub struct ContingencyTable {
    counts: Array2<u64>,
    n: u64,
}

impl ContingencyTable {
    /// Tallies predictions against labels. `k` is the cluster count and `l`
    /// the class count; ids outside those ranges are an error.
    pub fn new(preds: &[usize], labels: &[usize], k: usize, l: usize) -> Result<Self> {
        if preds.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} predictions vs {} labels",
                preds.len(),
                labels.len()
            )));
        }
        let mut counts = Array2::zeros((k, l));
        for (&p, &y) in preds.iter().zip(labels) {
            if p >= k {
                return Err(Error::InvalidParameter(format!(
                    "cluster id {p} out of range 0..{k}"
                )));
            }
            if y >= l {
                return Err(Error::InvalidParameter(format!(
                    "class id {y} out of range 0..{l}"
                )));
            }
            counts[(p, y)] += 1;
        }
        Ok(Self {
            counts,
            n: preds.len() as u64,
        })
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.n
    }
}

/// An injective cluster→class mapping and the accuracy it achieves.
#[derive(Debug, Clone)]
pub struct Assignment {
    /// `mapping[cluster] = class`.
    pub mapping: Vec<usize>,
    /// Matched count / N.
    pub accuracy: f64,
}

/// Best one-to-one mapping accuracy between cluster assignments and labels.
///
/// Builds the contingency table, pads it square if needed with zero-count
/// dummies, and maximizes the matched count by minimizing negated counts.
pub fn cluster_accuracy(preds: &[usize], labels: &[usize], k: usize) -> Result<Assignment> {
    if preds.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let table = ContingencyTable::new(preds, labels, k, k)?;
    assignment_from_table(&table)
}

/// Hungarian mapping for an already-built contingency table (possibly
/// rectangular; zero-cost padding keeps the solver square).
pub fn assignment_from_table(table: &ContingencyTable) -> Result<Assignment> {
    let (k, l) = table.counts().dim();
    let n = k.max(l);
    let mut cost = Array2::zeros((n, n));
    for i in 0..k {
        for j in 0..l {
            cost[(i, j)] = -(table.counts()[(i, j)] as f64);
        }
    }
    let perm = hungarian(&cost)?;
    let mut matched = 0u64;
    let mapping: Vec<usize> = perm[..k].to_vec();
    for (i, &j) in mapping.iter().enumerate() {
        if j < l {
            matched += table.counts()[(i, j)];
        }
    }
    Ok(Assignment {
        mapping,
        accuracy: matched as f64 / table.total() as f64,
    })
}

/// Picks the primary head with the lowest running loss; ties go to the
/// lowest head index.
pub fn head_select(losses: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in losses.iter().enumerate() {
        if v < losses[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(cost: &Array2<f64>) -> (Vec<usize>, f64) {
        let n = cost.nrows();
        let mut best: Option<(Vec<usize>, f64)> = None;
        let mut perm: Vec<usize> = (0..n).collect();
        permute(&mut perm, 0, cost, &mut best);
        best.unwrap()
    }

    fn permute(
        perm: &mut Vec<usize>,
        i: usize,
        cost: &Array2<f64>,
        best: &mut Option<(Vec<usize>, f64)>,
    ) {
        let n = perm.len();
        if i == n {
            let c = assignment_cost(cost, perm);
            if best.as_ref().is_none_or(|(_, bc)| c < *bc) {
                *best = Some((perm.clone(), c));
            }
            return;
        }
        for j in i..n {
            perm.swap(i, j);
            permute(perm, i + 1, cost, best);
            perm.swap(i, j);
        }
    }

    #[test]
    fn hungarian_trivial_cases() {
        let identity = arr2(&[[0.0, 1.0], [1.0, 0.0]]);
        let pi = hungarian(&identity).unwrap();
        assert_eq!(pi, vec![0, 1]);
        assert_eq!(assignment_cost(&identity, &pi), 0.0);

        let swap = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        let pi = hungarian(&swap).unwrap();
        assert_eq!(pi, vec![1, 0]);
        assert_eq!(assignment_cost(&swap, &pi), 0.0);
    }

    #[test]
    fn hungarian_rejects_bad_input() {
        assert!(hungarian(&Array2::zeros((2, 3))).is_err());
        let mut m = Array2::zeros((2, 2));
        m[(0, 0)] = f64::NAN;
        assert!(hungarian(&m).is_err());
    }

    #[test]
    fn hungarian_matches_brute_force_on_random_integer_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.random_range(1..=5);
            let mut cost = Array2::zeros((n, n));
            for v in cost.iter_mut() {
                *v = rng.random_range(0..50) as f64;
            }
            let pi = hungarian(&cost).unwrap();
            let (_, best_cost) = brute_force(&cost);
            assert_eq!(assignment_cost(&cost, &pi), best_cost);
        }
    }

    #[test]
    fn cluster_accuracy_examples() {
        let labels = vec![0, 1, 2, 0, 1, 2];
        let a = cluster_accuracy(&labels, &labels, 3).unwrap();
        assert_eq!(a.accuracy, 1.0);
        assert_eq!(a.mapping, vec![0, 1, 2]);

        // Any relabeling permutation of the predictions is still perfect.
        let permuted: Vec<usize> = labels.iter().map(|&y| (y + 1) % 3).collect();
        let a = cluster_accuracy(&permuted, &labels, 3).unwrap();
        assert_eq!(a.accuracy, 1.0);

        // Frozen from exhaustive search over both 2-cluster mappings.
        let preds = vec![0, 0, 0, 1, 1, 1];
        let labels = vec![0, 0, 1, 1, 1, 0];
        let a = cluster_accuracy(&preds, &labels, 2).unwrap();
        assert!((a.accuracy - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn cluster_accuracy_rejects_out_of_range_ids() {
        assert!(cluster_accuracy(&[0, 3], &[0, 1], 2).is_err());
        assert!(cluster_accuracy(&[0, 1], &[0, 5], 2).is_err());
    }

    #[test]
    fn head_select_rules() {
        assert_eq!(head_select(&[0.7]), 0);
        assert_eq!(head_select(&[0.5, 0.2]), 1);
        assert_eq!(head_select(&[0.3, 0.3]), 0);
    }

    proptest! {
        #[test]
        fn hungarian_beats_random_permutations(n in 2usize..7, seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cost = Array2::zeros((n, n));
            for v in cost.iter_mut() {
                *v = rng.random_range(-10.0..10.0);
            }
            let pi = hungarian(&cost).unwrap();
            let opt = assignment_cost(&cost, &pi);
            let mut perm: Vec<usize> = (0..n).collect();
            for _ in 0..50 {
                for i in (1..n).rev() {
                    let j = rng.random_range(0..=i);
                    perm.swap(i, j);
                }
                prop_assert!(opt <= assignment_cost(&cost, &perm) + 1e-9);
            }
        }

        #[test]
        fn accuracy_invariant_under_relabeling(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = rng.random_range(2..6);
            let n = rng.random_range(k..60);
            let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let base = cluster_accuracy(&preds, &labels, k).unwrap().accuracy;

            let mut sigma: Vec<usize> = (0..k).collect();
            let mut tau: Vec<usize> = (0..k).collect();
            for i in (1..k).rev() {
                sigma.swap(i, rng.random_range(0..=i));
                tau.swap(i, rng.random_range(0..=i));
            }
            let preds2: Vec<usize> = preds.iter().map(|&p| sigma[p]).collect();
            let labels2: Vec<usize> = labels.iter().map(|&y| tau[y]).collect();
            let relabeled = cluster_accuracy(&preds2, &labels2, k).unwrap().accuracy;
            prop_assert!((base - relabeled).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&base));
        }
    }
}
