//! Closed-form divergences between Gaussian models and pairwise distance
//! matrices over a collection of models.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Tolerances, DEFAULT_TOLERANCES};
use crate::error::{Error, Result};
use crate::gaussian::GaussianModel;
use crate::matrix::{spd_factors, spd_sqrt_with, trace_sqrt_with, SpdFactors, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Squared 2-Wasserstein (Bures) distance.
    WassersteinSq,
    Bhattacharyya,
    /// `KL(row ‖ column)`; asymmetric.
    Kl,
    /// Euclidean distance between means; covariances are ignored.
    MeanEuclidean,
}

impl Metric {
    pub fn is_symmetric(self) -> bool {
        !matches!(self, Metric::Kl)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::WassersteinSq => "wasserstein_sq",
            Metric::Bhattacharyya => "bhattacharyya",
            Metric::Kl => "kl",
            Metric::MeanEuclidean => "mean_euclidean",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wasserstein_sq" | "wasserstein" => Ok(Metric::WassersteinSq),
            "bhattacharyya" => Ok(Metric::Bhattacharyya),
            "kl" => Ok(Metric::Kl),
            "mean_euclidean" | "euclidean" => Ok(Metric::MeanEuclidean),
            other => Err(Error::InvalidConfig(format!("unknown metric {other:?}"))),
        }
    }
}

fn same_dim(g1: &GaussianModel, g2: &GaussianModel) -> Result<()> {
    if g1.dim() != g2.dim() {
        return Err(Error::DimensionMismatch {
            expected: g1.dim(),
            found: g2.dim(),
        });
    }
    Ok(())
}

fn guard_negative(value: f64, what: &str, tol: &Tolerances) -> Result<f64> {
    if value.is_nan() {
        return Err(Error::Numerical(format!("{what} evaluated to NaN")));
    }
    if value < -tol.negative_guard {
        return Err(Error::Numerical(format!(
            "{what} evaluated to {value:e}, below the round-off guard"
        )));
    }
    Ok(value.max(0.0))
}

fn mean_sq_dist(g1: &GaussianModel, g2: &GaussianModel) -> f64 {
    (&g1.mean - &g2.mean).norm_squared()
}

/// `Tr(A·B)` for symmetric A, B.
fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn wasserstein_with_root(
    g1: &GaussianModel,
    root1: &SymMatrix,
    g2: &GaussianModel,
    tol: &Tolerances,
) -> Result<f64> {
    let r = root1.as_matrix();
    let cross = SymMatrix::new(r * g2.covariance.as_matrix() * r);
    let cross_trace = trace_sqrt_with(&cross, tol)?;
    let traces = g1.covariance.trace() + g2.covariance.trace();
    let value = mean_sq_dist(g1, g2) + traces - 2.0 * cross_trace;
    // The trace terms cancel to within a few ulps of their size when the
    // covariances coincide; anything that small is indistinguishable from 0.
    let roundoff = 32.0 * g1.dim() as f64 * f64::EPSILON * traces;
    if value.abs() <= roundoff {
        return Ok(0.0);
    }
    guard_negative(value, "wasserstein_sq", tol)
}

/// `‖m₁−m₂‖² + Tr(Σ₁ + Σ₂ − 2(Σ₁^{1/2} Σ₂ Σ₁^{1/2})^{1/2})`.
pub fn wasserstein_sq(g1: &GaussianModel, g2: &GaussianModel) -> Result<f64> {
    same_dim(g1, g2)?;
    let tol = DEFAULT_TOLERANCES;
    let root1 = spd_sqrt_with(&g1.covariance, &tol)?;
    wasserstein_with_root(g1, &root1, g2, &tol)
}

/// Square root of [`wasserstein_sq`], a true metric.
pub fn wasserstein(g1: &GaussianModel, g2: &GaussianModel) -> Result<f64> {
    wasserstein_sq(g1, g2).map(f64::sqrt)
}

fn bhattacharyya_with_logdets(
    g1: &GaussianModel,
    logdet1: f64,
    g2: &GaussianModel,
    logdet2: f64,
    tol: &Tolerances,
) -> Result<f64> {
    let avg = SymMatrix::new((g1.covariance.as_matrix() + g2.covariance.as_matrix()) * 0.5);
    let f = spd_factors(&avg)?;
    let diff = &g1.mean - &g2.mean;
    let maha = diff.dot(&(f.inverse.as_matrix() * &diff));
    let value = maha / 8.0 + 0.5 * (f.logdet - 0.5 * (logdet1 + logdet2));
    guard_negative(value, "bhattacharyya", tol)
}

/// `⅛ (m₁−m₂)ᵀ Σ̄⁻¹ (m₁−m₂) + ½ ln(|Σ̄| / √(|Σ₁||Σ₂|))` with `Σ̄ = (Σ₁+Σ₂)/2`.
pub fn bhattacharyya(g1: &GaussianModel, g2: &GaussianModel) -> Result<f64> {
    same_dim(g1, g2)?;
    let l1 = spd_factors(&g1.covariance)?.logdet;
    let l2 = spd_factors(&g2.covariance)?.logdet;
    bhattacharyya_with_logdets(g1, l1, g2, l2, &DEFAULT_TOLERANCES)
}

pub(crate) fn kl_with_factors(
    g1: &GaussianModel,
    logdet1: f64,
    g2: &GaussianModel,
    f2: &SpdFactors,
    tol: &Tolerances,
) -> Result<f64> {
    let inv2 = f2.inverse.as_matrix();
    let diff = &g2.mean - &g1.mean;
    let maha = diff.dot(&(inv2 * &diff));
    let trace = trace_of_product(inv2, g1.covariance.as_matrix());
    let d = g1.dim() as f64;
    let value = 0.5 * (f2.logdet - logdet1 - d + trace + maha);
    guard_negative(value, "kl", tol)
}

/// `KL(g1 ‖ g2) = ½[ln(|Σ₂|/|Σ₁|) − d + Tr(Σ₂⁻¹Σ₁) + (m₂−m₁)ᵀΣ₂⁻¹(m₂−m₁)]`.
pub fn kl(g1: &GaussianModel, g2: &GaussianModel) -> Result<f64> {
    same_dim(g1, g2)?;
    let l1 = spd_factors(&g1.covariance)?.logdet;
    let f2 = spd_factors(&g2.covariance)?;
    kl_with_factors(g1, l1, g2, &f2, &DEFAULT_TOLERANCES)
}

/// A Gaussian with the factorizations the divergences reuse across pairs.
#[derive(Debug, Clone)]
pub struct PreparedModel<'a> {
    pub model: &'a GaussianModel,
    pub factors: Option<SpdFactors>,
    pub root: Option<SymMatrix>,
}

impl<'a> PreparedModel<'a> {
    pub fn new(model: &'a GaussianModel, metric: Metric, tol: &Tolerances) -> Result<Self> {
        let (factors, root) = match metric {
            Metric::WassersteinSq => (None, Some(spd_sqrt_with(&model.covariance, tol)?)),
            Metric::Bhattacharyya | Metric::Kl => (Some(spd_factors(&model.covariance)?), None),
            Metric::MeanEuclidean => (None, None),
        };
        Ok(PreparedModel {
            model,
            factors,
            root,
        })
    }

    pub fn divergence(&self, other: &PreparedModel<'_>, metric: Metric, tol: &Tolerances) -> Result<f64> {
        same_dim(self.model, other.model)?;
        match metric {
            Metric::WassersteinSq => wasserstein_with_root(
                self.model,
                self.root.as_ref().expect("prepared for wasserstein"),
                other.model,
                tol,
            ),
            Metric::Bhattacharyya => bhattacharyya_with_logdets(
                self.model,
                self.logdet(),
                other.model,
                other.logdet(),
                tol,
            ),
            Metric::Kl => kl_with_factors(
                self.model,
                self.logdet(),
                other.model,
                other.factors.as_ref().expect("prepared for kl"),
                tol,
            ),
            Metric::MeanEuclidean => Ok(mean_sq_dist(self.model, other.model).sqrt()),
        }
    }

    fn logdet(&self) -> f64 {
        self.factors.as_ref().expect("prepared with factors").logdet
    }
}

/// Dense `n × n` matrix of pairwise divergences.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub metric: Metric,
    entries: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct DistanceMatrixJson {
    metric: Metric,
    n: usize,
    rows: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    /// Validates the invariants: square, zero diagonal (forced to exactly 0
    /// when within 1e-9), no entry below −1e-9, symmetric for symmetric metrics.
    pub fn new(metric: Metric, mut entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        let n = entries.nrows();
        for i in 0..n {
            if entries[(i, i)].abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "distance matrix diagonal entry {i} is {}",
                    entries[(i, i)]
                )));
            }
            entries[(i, i)] = 0.0;
            for j in 0..n {
                let v = entries[(i, j)];
                if !v.is_finite() || v < -1e-9 {
                    return Err(Error::InvalidConfig(format!(
                        "distance matrix entry ({i}, {j}) is {v}"
                    )));
                }
                if metric.is_symmetric() && (v - entries[(j, i)]).abs() > 1e-9 {
                    return Err(Error::MetricNotSymmetric(format!(
                        "{metric} (entry ({i}, {j}) differs from ({j}, {i}))"
                    )));
                }
            }
        }
        Ok(DistanceMatrix { metric, entries })
    }

    pub fn from_rows(metric: Metric, rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        Self::new(metric, DMatrix::from_fn(n, n, |i, j| rows[i][j]))
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

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| self.entries.row(i).iter().copied().collect())
            .collect()
    }

    /// Entry-wise square root; used to kernelize distances rather than
    /// squared distances.
    pub fn sqrt_entries(&self) -> DistanceMatrix {
        DistanceMatrix {
            metric: self.metric,
            entries: self.entries.map(|v| v.max(0.0).sqrt()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&DistanceMatrixJson {
            metric: self.metric,
            n: self.len(),
            rows: self.to_rows(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: DistanceMatrixJson = serde_json::from_str(s)?;
        if raw.n != raw.rows.len() {
            return Err(Error::Schema(format!(
                "distance matrix declares n = {} but has {} rows",
                raw.n,
                raw.rows.len()
            )));
        }
        Self::from_rows(raw.metric, &raw.rows)
    }

    /// Header-less CSV, one line per row.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for row in self.to_rows() {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(metric: Metric, reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
        let rows = r
            .deserialize::<Vec<f64>>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::from_rows(metric, &rows)
    }
}

/// `X[i][j] = metric(models[i], models[j])`. Symmetric metrics evaluate the
/// upper triangle and mirror it; the diagonal is exactly zero. Rows are
/// evaluated in parallel; entries are independent so the result does not
/// depend on scheduling.
pub fn distance_matrix(models: &[GaussianModel], metric: Metric) -> Result<DistanceMatrix> {
    distance_matrix_with(models, metric, &DEFAULT_TOLERANCES)
}

pub fn distance_matrix_with(
    models: &[GaussianModel],
    metric: Metric,
    tol: &Tolerances,
) -> Result<DistanceMatrix> {
    let n = models.len();
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "distance matrix needs at least 2 models, got {n}"
        )));
    }
    let d = models[0].dim();
    if let Some(bad) = models.iter().find(|m| m.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.dim(),
        });
    }
    let prepared = models
        .iter()
        .enumerate()
        .map(|(i, m)| PreparedModel::new(m, metric, tol).map_err(|e| e.at_pair(i, i)))
        .collect::<Result<Vec<_>>>()?;

    let rows: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let start = if metric.is_symmetric() { i + 1 } else { 0 };
            (start..n)
                .map(|j| {
                    if i == j {
                        Ok(0.0)
                    } else {
                        prepared[i]
                            .divergence(&prepared[j], metric, tol)
                            .map_err(|e| e.at_pair(i, j))
                    }
                })
                .collect()
        })
        .collect();

    let mut entries = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        let start = n - row.len();
        for (offset, v) in row.into_iter().enumerate() {
            let j = start + offset;
            entries[(i, j)] = v;
            if metric.is_symmetric() {
                entries[(j, i)] = v;
            }
        }
    }
    for i in 0..n {
        entries[(i, i)] = 0.0;
    }
    Ok(DistanceMatrix { metric, entries })
}
