//! Gaussian models, their unbiased estimation from sample groups, densities
//! and sampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{regularize, spd_factors, spd_sqrt, SymMatrix};

/// One clustering object: an ordered list of equal-length sample vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGroup {
    pub id: String,
    samples: Vec<Vec<f64>>,
}

impl SampleGroup {
    /// Fails if the samples do not share one dimension or that dimension is 0.
    pub fn new(id: impl Into<String>, samples: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(first) = samples.first() {
            let d = first.len();
            if d == 0 {
                return Err(Error::DimensionMismatch {
                    expected: 1,
                    found: 0,
                });
            }
            if let Some(bad) = samples.iter().find(|s| s.len() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: bad.len(),
                });
            }
        }
        Ok(SampleGroup {
            id: id.into(),
            samples,
        })
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Vec<f64>> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample dimension, or 0 for an empty group.
    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }
}

/// `N(mean, covariance)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct GaussianModel {
    pub mean: DVector<f64>,
    pub covariance: SymMatrix,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    mean: Vec<f64>,
    cov: SymMatrix,
}

impl TryFrom<ModelRepr> for GaussianModel {
    type Error = Error;

    fn try_from(r: ModelRepr) -> Result<Self> {
        GaussianModel::new(DVector::from_vec(r.mean), r.cov)
    }
}

impl From<GaussianModel> for ModelRepr {
    fn from(g: GaussianModel) -> Self {
        ModelRepr {
            mean: g.mean.iter().copied().collect(),
            cov: g.covariance,
        }
    }
}

impl GaussianModel {
    pub fn new(mean: DVector<f64>, covariance: SymMatrix) -> Result<Self> {
        if mean.len() != covariance.dim() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: covariance.dim(),
            });
        }
        if !mean.iter().all(|v| v.is_finite()) || !covariance.is_finite() {
            return Err(Error::InvalidMatrix);
        }
        Ok(GaussianModel { mean, covariance })
    }

    pub fn standard(dim: usize) -> Self {
        GaussianModel {
            mean: DVector::zeros(dim),
            covariance: SymMatrix::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Unbiased mean and covariance (divisor `q − 1`), followed by
/// [`regularize`] with `eps_scale`.
pub fn estimate_gaussian(group: &SampleGroup, eps_scale: f64) -> Result<GaussianModel> {
    let q = group.len();
    if q < 2 {
        return Err(Error::InsufficientSamples {
            id: group.id.clone(),
            count: q,
        });
    }
    let d = group.dim();
    let mut mean = DVector::zeros(d);
    for s in group.samples() {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    mean /= q as f64;

    let mut scatter = DMatrix::zeros(d, d);
    let mut centered = DVector::zeros(d);
    for s in group.samples() {
        for (c, (x, m)) in centered.iter_mut().zip(s.iter().zip(mean.iter())) {
            *c = x - m;
        }
        scatter.ger(1.0, &centered, &centered, 1.0);
    }
    scatter /= (q - 1) as f64;
    let covariance = regularize(&SymMatrix::new(scatter), eps_scale);
    GaussianModel::new(mean, covariance)
}

/// Natural-log density `−½[d·ln 2π + ln|Σ| + (x−m)ᵀΣ⁻¹(x−m)]`.
pub fn log_density(g: &GaussianModel, x: &[f64]) -> Result<f64> {
    if x.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: x.len(),
        });
    }
    let factors = spd_factors(&g.covariance)?;
    let diff = DVector::from_column_slice(x) - &g.mean;
    let maha = diff.dot(&(factors.inverse.as_matrix() * &diff));
    let d = g.dim() as f64;
    Ok(-0.5 * (d * (2.0 * std::f64::consts::PI).ln() + factors.logdet + maha))
}

/// Draws `count` samples as `m + Σ^{1/2} z` with `z` standard normal.
pub fn sample<R: Rng + ?Sized>(
    g: &GaussianModel,
    count: usize,
    id: impl Into<String>,
    rng: &mut R,
) -> Result<SampleGroup> {
    let root = spd_sqrt(&g.covariance)?;
    let d = g.dim();
    let mut z = DVector::zeros(d);
    let samples = (0..count)
        .map(|_| {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            let x = &g.mean + root.as_matrix() * &z;
            x.iter().copied().collect()
        })
        .collect();
    SampleGroup::new(id, samples)
}
