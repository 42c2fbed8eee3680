//! Dense symmetric matrix utilities.
//!
//! Everything downstream (divergences, Laplacians, sampling) goes through the
//! symmetric eigendecomposition here: Householder reduction to tridiagonal form
//! followed by implicit QL iterations, with eigenvalues sorted ascending and a
//! fixed sign convention on the eigenvectors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::config::{Tolerances, DEFAULT_TOLERANCES};
use crate::error::{Error, Result};

/// A dense real symmetric matrix. Construction symmetrizes the input as
/// `(M + Mᵀ) / 2`, so `m[(i, j)] == m[(j, i)]` holds bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Symmetrizes a square matrix.
    ///
    /// Panics if `m` is not square or is empty.
    pub fn new(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "SymMatrix requires a square matrix");
        assert!(m.nrows() >= 1, "SymMatrix requires dim >= 1");
        let n = m.nrows();
        let mut out = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = (out[(i, j)] + out[(j, i)]) / 2.0;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        SymMatrix(out)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        Ok(Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j])))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.0.row(i).iter().copied().collect())
            .collect()
    }

    /// `U · self · Uᵀ`, symmetrized.
    pub fn congruence(&self, u: &DMatrix<f64>) -> SymMatrix {
        SymMatrix::new(u * &self.0 * u.transpose())
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        SymMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Eigenvalues ascending, eigenvectors as orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    /// `V · diag(f(λ)) · Vᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let s = f(lambda);
            scaled.column_mut(j).scale_mut(s);
        }
        SymMatrix::new(scaled * v.transpose())
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.map_spectrum(|l| l)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }
}

/// Full symmetric eigendecomposition.
///
/// Each eigenvector column is sign-normalized so that its largest-magnitude
/// entry is non-negative; entries within a relative `1e-12` of the maximum
/// magnitude count as tied and the lowest row index wins.
pub fn sym_eigen(m: &SymMatrix) -> Result<EigenDecomposition> {
    sym_eigen_with(m, &DEFAULT_TOLERANCES)
}

pub fn sym_eigen_with(m: &SymMatrix, tol: &Tolerances) -> Result<EigenDecomposition> {
    if !m.is_finite() {
        return Err(Error::InvalidMatrix);
    }
    let n = m.dim();
    // Row-major working copy.
    let mut v: Vec<f64> = (0..n * n).map(|idx| m.get(idx / n, idx % n)).collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    tridiagonal_ql(n, &mut v, &mut d, &mut e, tol.max_ql_iterations)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&j| d[j]));
    let mut eigenvectors = DMatrix::from_fn(n, n, |i, j| v[i * n + order[j]]);
    for mut col in eigenvectors.column_iter_mut() {
        let max_abs = col.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        if max_abs == 0.0 {
            continue;
        }
        let pivot = col
            .iter()
            .position(|x| x.abs() >= max_abs * (1.0 - 1e-12))
            .expect("max entry exists");
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Householder reduction of the symmetric matrix in `v` (row-major, n×n) to
/// tridiagonal form. On return `d` holds the diagonal, `e[1..]` the
/// subdiagonal, and `v` the accumulated orthogonal transformation.
fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n.saturating_sub(1) {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL with Wilkinson-style shifts on the tridiagonal (d, e),
/// accumulating rotations into `v`.
fn tridiagonal_ql(
    n: usize,
    v: &mut [f64],
    d: &mut [f64],
    e: &mut [f64],
    max_iterations: usize,
) -> Result<()> {
    let at = |i: usize, j: usize| i * n + j;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0_f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > max_iterations {
                    return Err(Error::EigenNotConverged { iterations: iter });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[at(k, i + 1)];
                        v[at(k, i + 1)] = s * v[at(k, i)] + c * h;
                        v[at(k, i)] = c * v[at(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

fn check_psd(eig: &EigenDecomposition, tol: &Tolerances) -> Result<()> {
    let min = eig.min_eigenvalue();
    let floor = -tol.psd_relative * eig.max_eigenvalue().max(1.0);
    if min < floor {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min,
        });
    }
    Ok(())
}

/// Symmetric square root of a PSD matrix; slightly negative eigenvalues
/// (within tolerance) are clamped to zero.
pub fn spd_sqrt(m: &SymMatrix) -> Result<SymMatrix> {
    spd_sqrt_with(m, &DEFAULT_TOLERANCES)
}

pub fn spd_sqrt_with(m: &SymMatrix, tol: &Tolerances) -> Result<SymMatrix> {
    let eig = sym_eigen_with(m, tol)?;
    check_psd(&eig, tol)?;
    Ok(eig.map_spectrum(|l| l.max(0.0).sqrt()))
}

/// Sum of `sqrt(max(λ, 0))` over the spectrum, i.e. `Tr(M^{1/2})`.
pub fn trace_sqrt_with(m: &SymMatrix, tol: &Tolerances) -> Result<f64> {
    let eig = sym_eigen_with(m, tol)?;
    check_psd(&eig, tol)?;
    Ok(eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum())
}

fn require_positive(eig: &EigenDecomposition) -> Result<()> {
    let min = eig.min_eigenvalue();
    if min <= 0.0 {
        return Err(Error::SingularMatrix {
            min_eigenvalue: min,
        });
    }
    Ok(())
}

pub fn spd_logdet(m: &SymMatrix) -> Result<f64> {
    let eig = sym_eigen(m)?;
    require_positive(&eig)?;
    Ok(eig.eigenvalues.iter().map(|l| l.ln()).sum())
}

pub fn spd_inverse(m: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eigen(m)?;
    require_positive(&eig)?;
    Ok(eig.map_spectrum(|l| 1.0 / l))
}

/// Inverse and log-determinant from a single decomposition.
#[derive(Debug, Clone)]
pub struct SpdFactors {
    pub inverse: SymMatrix,
    pub logdet: f64,
}

pub fn spd_factors(m: &SymMatrix) -> Result<SpdFactors> {
    let eig = sym_eigen(m)?;
    require_positive(&eig)?;
    Ok(SpdFactors {
        inverse: eig.map_spectrum(|l| 1.0 / l),
        logdet: eig.eigenvalues.iter().map(|l| l.ln()).sum(),
    })
}

/// `m + ε·I` with `ε = eps_scale · trace(m) / dim`, or `ε = eps_scale` when the
/// trace is not positive.
pub fn regularize(m: &SymMatrix, eps_scale: f64) -> SymMatrix {
    let dim = m.dim();
    let mean_diag = m.trace() / dim as f64;
    let eps = if mean_diag > 0.0 {
        eps_scale * mean_diag
    } else {
        eps_scale
    };
    let mut out = m.0.clone();
    for i in 0..dim {
        out[(i, i)] += eps;
    }
    SymMatrix(out)
}

/// `‖a − b‖_F / max(‖b‖_F, 1e-300)`.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
