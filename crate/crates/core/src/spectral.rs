//! Gaussian kernelization of distance matrices, the symmetric normalized
//! Laplacian, normalized spectral clustering and the normalized-cut objective.
//!
//! Spectral clustering here follows the Ng–Jordan–Weiss recipe:
//!
//! 1. degrees `d_i = Σ_j W_ij`
//! 2. `L_sym = D^{-1/2} (D − W) D^{-1/2}`
//! 3. eigenvectors of the `k` smallest eigenvalues of `L_sym` as columns of `V`
//! 4. rows of `V` scaled to unit norm (zero rows stay zero)
//! 5. k-means++ with restarts on the rows

use nalgebra::DMatrix;
use rand::Rng;

use crate::assignment::ClusterAssignment;
use crate::error::{Error, Result};
use crate::kmeans::{kmeans, DEFAULT_MAX_ITER, DEFAULT_RESTARTS};
use crate::matrix::{sym_eigen, SymMatrix};
use crate::metrics::DistanceMatrix;

pub use crate::kmeans::{kmeans_plus_plus, KMeansResult};

/// Symmetric similarity matrix with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    entries: DMatrix<f64>,
    /// Kernel bandwidth, when the matrix came from [`kernelize`].
    pub bandwidth_sigma: Option<f64>,
}

impl AdjacencyMatrix {
    /// Wraps a hand-built similarity matrix. It must be square, symmetric,
    /// with entries in `[0, 1]` and every degree positive.
    pub fn from_entries(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        let n = entries.nrows();
        for i in 0..n {
            for j in 0..n {
                let v = entries[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidConfig(format!(
                        "adjacency entry ({i}, {j}) = {v} outside [0, 1]"
                    )));
                }
                if v != entries[(j, i)] {
                    return Err(Error::InvalidConfig(format!(
                        "adjacency matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
            if entries.row(i).sum() <= 0.0 {
                return Err(Error::InvalidConfig(format!("node {i} has zero degree")));
            }
        }
        Ok(AdjacencyMatrix {
            entries,
            bandwidth_sigma: None,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.entries.row_iter().map(|r| r.sum()).collect()
    }
}

/// Median of the strictly positive upper-triangle entries (mean of the two
/// middle values for an even count). `None` if there are none.
pub fn median_bandwidth(x: &DistanceMatrix) -> Option<f64> {
    let n = x.len();
    let mut values: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| x.get(i, j))
        .filter(|&v| v > 0.0)
        .collect();
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    })
}

/// `W_ij = exp(−x_ij² / 2σ²)` applied to the stored entries. With no `sigma`
/// the median heuristic is used (σ = 1 if every distance is zero).
pub fn kernelize(x: &DistanceMatrix, sigma: Option<f64>) -> Result<AdjacencyMatrix> {
    if !x.metric.is_symmetric() {
        return Err(Error::MetricNotSymmetric(x.metric.to_string()));
    }
    let sigma = match sigma {
        Some(s) if !(s > 0.0 && s.is_finite()) => return Err(Error::InvalidBandwidth(s)),
        Some(s) => s,
        None => median_bandwidth(x).unwrap_or(1.0),
    };
    let denom = 2.0 * sigma * sigma;
    let entries = x.entries().map(|v| (-(v * v) / denom).exp());
    Ok(AdjacencyMatrix {
        entries,
        bandwidth_sigma: Some(sigma),
    })
}

/// `L_sym = D^{-1/2} (D − W) D^{-1/2}`.
pub fn normalized_laplacian(w: &AdjacencyMatrix) -> SymMatrix {
    let n = w.len();
    let degrees = w.degrees();
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let l = DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { degrees[i] } else { 0.0 };
        (d - w.get(i, j)) * inv_sqrt[i] * inv_sqrt[j]
    });
    SymMatrix::new(l)
}

/// Rows of the bottom-`k` eigenvector matrix of `L_sym`, each scaled to unit
/// norm.
pub fn spectral_embedding(w: &AdjacencyMatrix, k: usize) -> Result<Vec<Vec<f64>>> {
    let n = w.len();
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!(
            "spectral embedding needs 1 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    let eig = sym_eigen(&normalized_laplacian(w))?;
    let v = eig.eigenvectors.columns(0, k);
    Ok(v
        .row_iter()
        .map(|row| {
            let norm = row.norm();
            if norm > 0.0 {
                row.iter().map(|x| x / norm).collect()
            } else {
                vec![0.0; k]
            }
        })
        .collect())
}

/// Normalized spectral clustering of `w` into `k` groups.
pub fn spectral_cluster<R: Rng + ?Sized>(
    w: &AdjacencyMatrix,
    k: usize,
    rng: &mut R,
) -> Result<ClusterAssignment> {
    spectral_cluster_with(w, k, rng, DEFAULT_RESTARTS, DEFAULT_MAX_ITER)
}

pub fn spectral_cluster_with<R: Rng + ?Sized>(
    w: &AdjacencyMatrix,
    k: usize,
    rng: &mut R,
    restarts: usize,
    max_iter: usize,
) -> Result<ClusterAssignment> {
    let rows = spectral_embedding(w, k)?;
    Ok(kmeans(&rows, k, rng, restarts, max_iter)?.assignment)
}

/// `½ Σ_j W(A_j, Ā_j) / vol(A_j)`; clusters of zero volume contribute 0.
pub fn ncut(w: &AdjacencyMatrix, a: &ClusterAssignment) -> Result<f64> {
    if a.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            found: a.len(),
        });
    }
    let k = a.k();
    let labels = a.labels();
    let mut cut = vec![0.0; k];
    let mut vol = vec![0.0; k];
    for i in 0..w.len() {
        for j in 0..w.len() {
            let v = w.get(i, j);
            vol[labels[i]] += v;
            if labels[i] != labels[j] {
                cut[labels[i]] += v;
            }
        }
    }
    Ok(0.5
        * cut
            .iter()
            .zip(&vol)
            .map(|(c, v)| if *v > 0.0 { c / v } else { 0.0 })
            .sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::nmi;
    use crate::metrics::Metric;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dm(rows: &[Vec<f64>]) -> DistanceMatrix {
        DistanceMatrix::from_rows(Metric::WassersteinSq, rows).unwrap()
    }

    pub(crate) fn two_blocks(size: usize, off: f64) -> AdjacencyMatrix {
        let n = 2 * size;
        AdjacencyMatrix::from_entries(DMatrix::from_fn(n, n, |i, j| {
            if (i < size) == (j < size) {
                1.0
            } else {
                off
            }
        }))
        .unwrap()
    }

    #[test]
    fn kernelize_zero_matrix() {
        let w = kernelize(&dm(&[vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]), Some(1.0)).unwrap();
        assert!(w.entries().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn kernelize_unit_exponent() {
        let s = 1.3;
        let x = s * 2f64.sqrt();
        let w = kernelize(&dm(&[vec![0.0, x], vec![x, 0.0]]), Some(s)).unwrap();
        assert!((w.get(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((w.get(0, 1) - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn kernelize_median_default() {
        let x = dm(&[vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 3.0], vec![2.0, 3.0, 0.0]]);
        let w = kernelize(&x, None).unwrap();
        assert_eq!(w.bandwidth_sigma, Some(2.0));
        assert!((w.get(0, 1) - (-1.0f64 / 8.0).exp()).abs() < 1e-15);
        assert!((w.get(0, 2) - (-4.0f64 / 8.0).exp()).abs() < 1e-15);
        assert!((w.get(1, 2) - (-9.0f64 / 8.0).exp()).abs() < 1e-15);
        assert_eq!(w.get(1, 1), 1.0);
    }

    #[test]
    fn median_of_even_count() {
        let x = dm(&[
            vec![0.0, 1.0, 2.0, 0.0],
            vec![1.0, 0.0, 3.0, 5.0],
            vec![2.0, 3.0, 0.0, 4.0],
            vec![0.0, 5.0, 4.0, 0.0],
        ]);
        // positive upper entries {1,2,3,5,4} → 3
        assert_eq!(median_bandwidth(&x), Some(3.0));
    }

    #[test]
    fn kernelize_rejects_kl_and_bad_sigma() {
        let kl = DistanceMatrix::from_rows(Metric::Kl, &[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap();
        assert!(matches!(kernelize(&kl, None), Err(Error::MetricNotSymmetric(_))));
        let x = dm(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(matches!(kernelize(&x, Some(0.0)), Err(Error::InvalidBandwidth(_))));
        assert!(matches!(kernelize(&x, Some(-1.0)), Err(Error::InvalidBandwidth(_))));
    }

    #[test]
    fn kernelize_monotone() {
        let x = dm(&[vec![0.0, 0.5, 2.0], vec![0.5, 0.0, 1.0], vec![2.0, 1.0, 0.0]]);
        let w = kernelize(&x, Some(0.7)).unwrap();
        assert!(w.get(0, 1) > w.get(1, 2));
        assert!(w.get(1, 2) > w.get(0, 2));
    }

    #[test]
    fn laplacian_of_identity_is_zero() {
        let w = AdjacencyMatrix::from_entries(DMatrix::identity(4, 4)).unwrap();
        assert_eq!(normalized_laplacian(&w), SymMatrix::zeros(4));
    }

    #[test]
    fn laplacian_of_all_ones() {
        let w = AdjacencyMatrix::from_entries(DMatrix::from_element(2, 2, 1.0)).unwrap();
        let l = normalized_laplacian(&w);
        let expected = SymMatrix::from_rows(&[vec![0.5, -0.5], vec![-0.5, 0.5]]).unwrap();
        assert!((l.as_matrix() - expected.as_matrix()).amax() < 1e-15);
    }

    #[test]
    fn two_blocks_recovered() {
        let w = two_blocks(5, 1e-12);
        let a = spectral_cluster(&w, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let l = a.labels();
        assert!(l[..5].iter().all(|&x| x == l[0]));
        assert!(l[5..].iter().all(|&x| x == l[5]));
        assert_ne!(l[0], l[5]);
    }

    #[test]
    fn n_equals_k_gives_singletons() {
        let x = dm(&[vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.5], vec![2.0, 1.5, 0.0]]);
        let w = kernelize(&x, Some(1.0)).unwrap();
        let a = spectral_cluster(&w, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut l = a.labels().to_vec();
        l.sort();
        assert_eq!(l, vec![0, 1, 2]);
    }

    #[test]
    fn ncut_examples() {
        let w = two_blocks(3, 0.0);
        let a = ClusterAssignment::new(vec![0, 0, 0, 1, 1, 1], 2).unwrap();
        assert_eq!(ncut(&w, &a).unwrap(), 0.0);

        let ones = AdjacencyMatrix::from_entries(DMatrix::from_element(4, 4, 1.0)).unwrap();
        let a = ClusterAssignment::new(vec![0, 0, 1, 1], 2).unwrap();
        assert!((ncut(&ones, &a).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn block_recovery_scores_perfect_nmi() {
        let w = two_blocks(8, 1e-6);
        let truth = ClusterAssignment::new((0..16).map(|i| usize::from(i >= 8)).collect(), 2).unwrap();
        for seed in 0..5 {
            let a = spectral_cluster(&w, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(nmi(&a, &truth).unwrap(), 1.0);
        }
    }
}
