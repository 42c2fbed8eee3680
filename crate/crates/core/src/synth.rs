//! Synthetic multiple-sample benchmark: `k` random Gaussians with means drawn
//! on the unit simplex and covariances `U · diag(1, …, d) · Uᵀ` for Haar-random
//! orthogonal `U`; objects are assigned to generators round-robin.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::assignment::ClusterAssignment;
use crate::error::{Error, Result};
use crate::gaussian::{sample, GaussianModel, SampleGroup};
use crate::matrix::SymMatrix;

pub const DEFAULT_OBJECTS: usize = 200;
pub const DEFAULT_SAMPLES_PER_OBJECT: usize = 30;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed of trial `t` in a batch: `base XOR (t · 0x9E3779B97F4A7C15)`.
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    base ^ trial.wrapping_mul(GOLDEN_GAMMA)
}

/// Haar-distributed orthogonal matrix from the QR factorization of a
/// standard Gaussian matrix, with columns sign-corrected by `sign(R_ii)`.
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Uniform point on the standard simplex `{x ≥ 0, Σx = 1}` via normalized
/// exponentials.
pub fn random_simplex_point<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

/// Uniform point on the relative boundary of the standard simplex: one
/// coordinate chosen uniformly is zero, the rest uniform on that facet.
pub fn random_simplex_boundary_point<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let zero = rng.random_range(0..d);
    let facet = random_simplex_point(d - 1, rng);
    let mut out = Vec::with_capacity(d);
    let mut it = facet.into_iter();
    for i in 0..d {
        out.push(if i == zero { 0.0 } else { it.next().expect("d - 1 entries") });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimplexSampling {
    #[default]
    Uniform,
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub d: usize,
    pub k: usize,
    pub n_objects: usize,
    pub samples_per_object: usize,
    /// Generator covariance eigenvalues; `None` means `1, 2, …, d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<f64>>,
    #[serde(default)]
    pub simplex: SimplexSampling,
}

impl SynthParams {
    pub fn new(d: usize, k: usize) -> Self {
        SynthParams {
            d,
            k,
            n_objects: DEFAULT_OBJECTS,
            samples_per_object: DEFAULT_SAMPLES_PER_OBJECT,
            spectrum: None,
            simplex: SimplexSampling::Uniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.d < 2 {
            return bad(format!("d must be at least 2, got {}", self.d));
        }
        if self.k < 2 {
            return bad(format!("k must be at least 2, got {}", self.k));
        }
        if self.n_objects < self.k {
            return bad(format!("n_objects ({}) must be at least k ({})", self.n_objects, self.k));
        }
        if self.samples_per_object < 2 {
            return bad(format!("samples_per_object must be at least 2, got {}", self.samples_per_object));
        }
        if let Some(s) = &self.spectrum {
            if s.len() != self.d || s.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return bad(format!("spectrum must hold {} non-negative values", self.d));
            }
        }
        Ok(())
    }

    fn spectrum(&self) -> Vec<f64> {
        self.spectrum
            .clone()
            .unwrap_or_else(|| (1..=self.d).map(|v| v as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBenchmark {
    pub groups: Vec<SampleGroup>,
    pub truth: ClusterAssignment,
    pub generators: Vec<GaussianModel>,
    pub seed: u64,
    pub params: SynthParams,
}

pub fn generate_benchmark(params: &SynthParams, seed: u64) -> Result<SyntheticBenchmark> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spectrum = SymMatrix::from_diagonal(&params.spectrum());
    let generators = (0..params.k)
        .map(|_| {
            let mean = match params.simplex {
                SimplexSampling::Uniform => random_simplex_point(params.d, &mut rng),
                SimplexSampling::Boundary => random_simplex_boundary_point(params.d, &mut rng),
            };
            let u = random_orthogonal(params.d, &mut rng);
            GaussianModel::new(mean.into(), spectrum.congruence(&u))
        })
        .collect::<Result<Vec<_>>>()?;

    let labels: Vec<usize> = (0..params.n_objects).map(|t| t % params.k).collect();
    let groups = labels
        .iter()
        .enumerate()
        .map(|(t, &g)| sample(&generators[g], params.samples_per_object, format!("obj{t}"), &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticBenchmark {
        groups,
        truth: ClusterAssignment::new(labels, params.k)?,
        generators,
        seed,
        params: params.clone(),
    })
}
