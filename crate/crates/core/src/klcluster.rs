//! k-means over Gaussian models under the KL divergence, with either random
//! or KL++ seeding.
//!
//! Each iteration moves every center to the moment-matched Gaussian of its
//! members (mean of means; mean of `Σ_i + (m_i − a)(m_i − a)ᵀ`), which is the
//! closed-form minimizer of `Σ_i KL(μ_i ‖ ν)`, and then reassigns every
//! model to the center with the smallest `KL(μ_i ‖ ν_j)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::ClusterAssignment;
use crate::config::DEFAULT_TOLERANCES;
use crate::error::{Error, Result};
use crate::gaussian::GaussianModel;
use crate::kmeans::weighted_draw;
use crate::matrix::{spd_factors, SpdFactors, SymMatrix};
use crate::metrics::kl_with_factors;

pub const DEFAULT_KL_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Seeding {
    /// k distinct models drawn uniformly as initial centers.
    Random,
    /// KL++ careful seeding.
    KlPlusPlus,
}

impl fmt::Display for Seeding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Seeding::Random => "random",
            Seeding::KlPlusPlus => "klpp",
        })
    }
}

impl FromStr for Seeding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Seeding::Random),
            "klpp" => Ok(Seeding::KlPlusPlus),
            other => Err(Error::InvalidConfig(format!("unknown seeding {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlClusterOptions {
    pub seeding: Seeding,
    pub max_iter: usize,
    /// Weight KL++ draws by `d*²` instead of `d*`.
    pub klpp_squared: bool,
}

impl Default for KlClusterOptions {
    fn default() -> Self {
        KlClusterOptions {
            seeding: Seeding::KlPlusPlus,
            max_iter: DEFAULT_KL_MAX_ITER,
            klpp_squared: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlClusterState {
    pub assignment: ClusterAssignment,
    pub centers: Vec<GaussianModel>,
    pub iteration: usize,
    pub converged: bool,
    /// `Σ_i KL(μ_i ‖ ν_{π_i})` after every center update.
    pub objective_trace: Vec<f64>,
}

/// Model with cached log-determinant and inverse covariance.
struct Prepared<'a> {
    model: &'a GaussianModel,
    factors: SpdFactors,
}

fn prepare(models: &[GaussianModel]) -> Result<Vec<Prepared<'_>>> {
    models
        .iter()
        .enumerate()
        .map(|(i, m)| {
            Ok(Prepared {
                model: m,
                factors: spd_factors(&m.covariance).map_err(|e| e.at_pair(i, i))?,
            })
        })
        .collect()
}

fn kl_prepared(from: &Prepared<'_>, to: &Prepared<'_>) -> Result<f64> {
    kl_with_factors(
        from.model,
        from.factors.logdet,
        to.model,
        &to.factors,
        &DEFAULT_TOLERANCES,
    )
}

fn validate(models: &[GaussianModel], k: usize) -> Result<()> {
    if k == 0 || models.len() < k {
        return Err(Error::InvalidConfig(format!(
            "KL clustering needs 1 <= k <= n, got k = {k}, n = {}",
            models.len()
        )));
    }
    let d = models[0].dim();
    if let Some(bad) = models.iter().find(|m| m.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.dim(),
        });
    }
    Ok(())
}

/// Moment-matched centers: `a_j` the mean of member means and
/// `X_j = mean over members of (Σ_i + (m_i − a_j)(m_i − a_j)ᵀ)`.
pub fn center_update(
    models: &[GaussianModel],
    a: &ClusterAssignment,
    k: usize,
) -> Result<Vec<GaussianModel>> {
    if a.len() != models.len() {
        return Err(Error::DimensionMismatch {
            expected: models.len(),
            found: a.len(),
        });
    }
    let d = models.first().map_or(0, GaussianModel::dim);
    let mut centers = Vec::with_capacity(k);
    for j in 0..k {
        let members = a.members(j);
        if members.is_empty() {
            return Err(Error::EmptyCluster(j));
        }
        let count = members.len() as f64;
        let mut mean = DVector::zeros(d);
        for &i in &members {
            mean += &models[i].mean;
        }
        mean /= count;
        let mut cov = DMatrix::zeros(d, d);
        for &i in &members {
            cov += models[i].covariance.as_matrix();
            let diff = &models[i].mean - &mean;
            cov.ger(1.0, &diff, &diff, 1.0);
        }
        cov /= count;
        centers.push(GaussianModel::new(mean, SymMatrix::new(cov))?);
    }
    Ok(centers)
}

/// KL++ seeding: first center uniform; each further center drawn with
/// probability `d*_i / Σ d*` where `d*_i` is the smallest `KL(μ_i ‖ ν)` over
/// the chosen centers. Falls back to a uniform draw over unchosen indices
/// when every `d*` is zero.
pub fn klpp_seed<R: Rng + ?Sized>(models: &[GaussianModel], k: usize, rng: &mut R) -> Result<Vec<usize>> {
    klpp_seed_with(models, k, false, rng)
}

pub fn klpp_seed_with<R: Rng + ?Sized>(
    models: &[GaussianModel],
    k: usize,
    squared: bool,
    rng: &mut R,
) -> Result<Vec<usize>> {
    validate(models, k)?;
    let prepared = prepare(models)?;
    klpp_seed_prepared(&prepared, k, squared, rng)
}

fn klpp_seed_prepared<R: Rng + ?Sized>(
    prepared: &[Prepared<'_>],
    k: usize,
    squared: bool,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = prepared.len();
    let mut chosen = Vec::with_capacity(k);
    let mut is_chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    is_chosen[first] = true;
    let mut nearest = vec![f64::INFINITY; n];
    let mut latest = first;
    while chosen.len() < k {
        for (i, p) in prepared.iter().enumerate() {
            let d = kl_prepared(p, &prepared[latest]).map_err(|e| e.at_pair(i, latest))?;
            nearest[i] = nearest[i].min(d);
        }
        let weights: Vec<f64> = nearest
            .iter()
            .zip(&is_chosen)
            .map(|(&d, &c)| match (c, squared) {
                (true, _) => 0.0,
                (false, false) => d,
                (false, true) => d * d,
            })
            .collect();
        let unchosen: Vec<usize> = (0..n).filter(|&i| !is_chosen[i]).collect();
        latest = weighted_draw(&weights, &unchosen, rng);
        chosen.push(latest);
        is_chosen[latest] = true;
    }
    Ok(chosen)
}

/// `n × k` divergences `KL(μ_i ‖ ν_j)`.
fn divergences(prepared: &[Prepared<'_>], centers: &[GaussianModel]) -> Result<Vec<Vec<f64>>> {
    let center_factors = centers
        .iter()
        .map(|c| spd_factors(&c.covariance))
        .collect::<Result<Vec<_>>>()?;
    let center_prep: Vec<Prepared<'_>> = centers
        .iter()
        .zip(center_factors)
        .map(|(model, factors)| Prepared { model, factors })
        .collect();
    prepared
        .iter()
        .enumerate()
        .map(|(i, p)| {
            center_prep
                .iter()
                .enumerate()
                .map(|(j, c)| kl_prepared(p, c).map_err(|e| e.at_pair(i, j)))
                .collect()
        })
        .collect()
}

/// Argmin per row, ties to the lowest cluster index.
fn nearest(divs: &[Vec<f64>]) -> Vec<usize> {
    divs.iter()
        .map(|row| {
            let mut best = 0;
            for (j, &d) in row.iter().enumerate().skip(1) {
                if d < row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Moves the model with the largest divergence to its own center into each
/// empty cluster, taking only from clusters with at least two members.
fn repair_empty(labels: &mut [usize], divs: &[Vec<f64>], k: usize) {
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, &l) in labels.iter().enumerate() {
            if sizes[l] < 2 {
                continue;
            }
            let d = divs[i][l];
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let (i, _) = best.expect("n >= k leaves a cluster with two members");
        sizes[labels[i]] -= 1;
        labels[i] = empty;
        sizes[empty] = 1;
    }
}

pub fn kl_objective(
    models: &[GaussianModel],
    a: &ClusterAssignment,
    centers: &[GaussianModel],
) -> Result<f64> {
    let prepared = prepare(models)?;
    let divs = divergences(&prepared, centers)?;
    Ok(a.labels().iter().zip(&divs).map(|(&l, row)| row[l]).sum())
}

/// KL k-means. Stops when the assignment is unchanged or after `max_iter`
/// center updates; `converged` tells which.
pub fn kl_cluster<R: Rng + ?Sized>(
    models: &[GaussianModel],
    k: usize,
    opts: &KlClusterOptions,
    rng: &mut R,
) -> Result<KlClusterState> {
    validate(models, k)?;
    let n = models.len();
    let prepared = prepare(models)?;
    let seeds = match opts.seeding {
        Seeding::Random => index::sample(rng, n, k).into_vec(),
        Seeding::KlPlusPlus => klpp_seed_prepared(&prepared, k, opts.klpp_squared, rng)?,
    };
    let initial: Vec<GaussianModel> = seeds.iter().map(|&i| models[i].clone()).collect();
    let divs = divergences(&prepared, &initial)?;
    let mut labels = nearest(&divs);
    repair_empty(&mut labels, &divs, k);

    let mut trace = Vec::new();
    let mut iteration = 0;
    let mut converged = false;
    let mut centers;
    loop {
        let current = ClusterAssignment::new(labels.clone(), k)?;
        centers = center_update(models, &current, k)?;
        if iteration >= opts.max_iter {
            break;
        }
        iteration += 1;
        let divs = divergences(&prepared, &centers)?;
        trace.push(labels.iter().zip(&divs).map(|(&l, row)| row[l]).sum());
        let mut next = nearest(&divs);
        if next == labels {
            converged = true;
            break;
        }
        repair_empty(&mut next, &divs, k);
        labels = next;
    }
    Ok(KlClusterState {
        assignment: ClusterAssignment::new(labels, k)?,
        centers,
        iteration,
        converged,
        objective_trace: trace,
    })
}
