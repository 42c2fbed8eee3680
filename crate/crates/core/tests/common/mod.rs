//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use distclust::gaussian::{log_density, sample};
use distclust::metrics::{DistanceMatrix, Metric};
use distclust::spectral::{kernelize, AdjacencyMatrix};
use distclust::{GaussianModel, SymMatrix};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn normal_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `A Aᵀ / d + floor · I`: comfortably conditioned SPD.
pub fn random_spd<R: Rng>(d: usize, floor: f64, rng: &mut R) -> SymMatrix {
    let a = normal_matrix(d, d, rng);
    SymMatrix::new(&a * a.transpose() / d as f64 + DMatrix::identity(d, d) * floor)
}

pub fn random_model<R: Rng>(d: usize, rng: &mut R) -> GaussianModel {
    let mean = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
    GaussianModel::new(mean, random_spd(d, 0.3, rng)).unwrap()
}

/// `E_{x∼g1}[ln g1(x) − ln g2(x)]` estimated from `draws` samples.
pub fn monte_carlo_kl<R: Rng>(g1: &GaussianModel, g2: &GaussianModel, draws: usize, rng: &mut R) -> f64 {
    let xs = sample(g1, draws, "mc", rng).unwrap();
    let total: f64 = xs
        .samples()
        .iter()
        .map(|x| log_density(g1, x).unwrap() - log_density(g2, x).unwrap())
        .sum();
    total / draws as f64
}

/// NMI from a hash-map contingency table, written without reference to the
/// library's implementation.
pub fn brute_force_nmi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut ca: HashMap<usize, f64> = HashMap::new();
    let mut cb: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0;
        *ca.entry(x).or_default() += 1.0;
        *cb.entry(y).or_default() += 1.0;
    }
    let h = |c: &HashMap<usize, f64>| -c.values().map(|v| v / n * (v / n).ln()).sum::<f64>();
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| c / n * ((c / n) / ((ca[&x] / n) * (cb[&y] / n))).ln())
        .sum();
    let denom = h(&ca) + h(&cb);
    if denom == 0.0 {
        1.0
    } else {
        2.0 * mi / denom
    }
}

pub fn brute_force_entropy(a: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for &x in a {
        *counts.entry(x).or_default() += 1.0;
    }
    -counts.values().map(|c| c / n * (c / n).ln()).sum::<f64>()
}

pub fn brute_force_mi(a: &[usize], b: &[usize]) -> f64 {
    brute_force_entropy(a) + brute_force_entropy(b) - {
        let pairs: Vec<usize> = a.iter().zip(b).map(|(&x, &y)| x * 1000 + y).collect();
        brute_force_entropy(&pairs)
    }
}

/// Labels in `[0, k)` with every label used.
pub fn random_labels<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    loop {
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        if (0..k).all(|c| labels.contains(&c)) {
            return labels;
        }
    }
}

/// Two all-ones 5×5 blocks joined by 1e-12 off-block weights.
pub fn two_block_kernel() -> (AdjacencyMatrix, Vec<usize>) {
    let n = 10;
    let truth: Vec<usize> = (0..n).map(|i| i / 5).collect();
    let w = DMatrix::from_fn(n, n, |i, j| if truth[i] == truth[j] { 1.0 } else { 1e-12 });
    (AdjacencyMatrix::from_entries(w).unwrap(), truth)
}

/// Median-bandwidth Gaussian kernel over random points in the plane.
pub fn random_kernel<R: Rng>(n: usize, rng: &mut R) -> AdjacencyMatrix {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0))).collect();
    let x = DMatrix::from_fn(n, n, |i, j| ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt());
    kernelize(&DistanceMatrix::new(Metric::MeanEuclidean, x).unwrap(), None).unwrap()
}
