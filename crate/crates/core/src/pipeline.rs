//! Estimate → distance matrix → partition, for each supported algorithm.

use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::ClusterAssignment;
use crate::config::DEFAULT_TOLERANCES;
use crate::error::{Error, Result};
use crate::gaussian::{estimate_gaussian, GaussianModel, SampleGroup};
use crate::klcluster::{kl_cluster, KlClusterOptions, Seeding, DEFAULT_KL_MAX_ITER};
use crate::kmeans::{kmeans, DEFAULT_MAX_ITER, DEFAULT_RESTARTS};
use crate::metrics::{distance_matrix_with, DistanceMatrix, Metric};
use crate::spectral::{kernelize, spectral_cluster_with};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// k-means on the estimated means.
    KmeansMeans,
    /// Spectral clustering of a Gaussian kernel over Euclidean distances
    /// between means.
    SpectralMeans,
    WassersteinSpectral,
    BhattacharyyaSpectral,
    /// KL k-means with uniformly random seeding.
    Kl,
    /// KL k-means with KL++ seeding.
    Klpp,
}

/// Whether an algorithm sees only first moments or the full distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    MeanOnly,
    Distribution,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::KmeansMeans,
        Algorithm::SpectralMeans,
        Algorithm::WassersteinSpectral,
        Algorithm::BhattacharyyaSpectral,
        Algorithm::Kl,
        Algorithm::Klpp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::KmeansMeans => "kmeans_means",
            Algorithm::SpectralMeans => "spectral_means",
            Algorithm::WassersteinSpectral => "wasserstein_spectral",
            Algorithm::BhattacharyyaSpectral => "bhattacharyya_spectral",
            Algorithm::Kl => "kl",
            Algorithm::Klpp => "klpp",
        }
    }

    pub fn family(self) -> Family {
        match self {
            Algorithm::KmeansMeans | Algorithm::SpectralMeans => Family::MeanOnly,
            _ => Family::Distribution,
        }
    }

    /// Metric of the distance matrix behind the spectral variants.
    pub fn spectral_metric(self) -> Option<Metric> {
        match self {
            Algorithm::SpectralMeans => Some(Metric::MeanEuclidean),
            Algorithm::WassersteinSpectral => Some(Metric::WassersteinSq),
            Algorithm::BhattacharyyaSpectral => Some(Metric::Bhattacharyya),
            _ => None,
        }
    }

    fn is_kl(self) -> bool {
        matches!(self, Algorithm::Kl | Algorithm::Klpp)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub algorithm: Algorithm,
    pub k: usize,
    /// Kernel bandwidth for the spectral variants; median heuristic if unset.
    pub sigma: Option<f64>,
    pub eps_scale: f64,
    pub seed: u64,
    /// Lloyd iterations (k-means) or center updates (KL); each algorithm's
    /// default if unset.
    pub max_iter: Option<usize>,
    pub restarts: usize,
    /// Kernelize the Wasserstein distance instead of its square.
    pub kernel_on_sqrt: bool,
    pub klpp_squared: bool,
}

impl PipelineConfig {
    pub fn new(algorithm: Algorithm, k: usize) -> Self {
        PipelineConfig {
            algorithm,
            k,
            sigma: None,
            eps_scale: DEFAULT_TOLERANCES.eps_scale,
            seed: 0,
            max_iter: None,
            restarts: DEFAULT_RESTARTS,
            kernel_on_sqrt: false,
            klpp_squared: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidConfig(format!("k must be at least 2, got {}", self.k)));
        }
        if !(self.eps_scale >= 0.0 && self.eps_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "eps_scale must be non-negative, got {}",
                self.eps_scale
            )));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidBandwidth(s));
            }
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        if self.max_iter == Some(0) {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    /// Settings that have no effect for the chosen algorithm.
    pub fn ignored_settings(&self) -> Vec<String> {
        let alg = self.algorithm;
        let mut out = Vec::new();
        if self.sigma.is_some() && alg.spectral_metric().is_none() {
            out.push(format!("sigma ignored for {alg}"));
        }
        if self.kernel_on_sqrt && alg != Algorithm::WassersteinSpectral {
            out.push(format!("kernel_on_sqrt ignored for {alg}"));
        }
        if self.klpp_squared && alg != Algorithm::Klpp {
            out.push(format!("klpp_squared ignored for {alg}"));
        }
        out
    }
}

/// Unbiased Gaussian estimate of every group, in parallel.
pub fn estimate_models(groups: &[SampleGroup], eps_scale: f64) -> Result<Vec<GaussianModel>> {
    if let Some(first) = groups.first() {
        if let Some(bad) = groups.iter().find(|g| g.dim() != first.dim()) {
            return Err(Error::DimensionMismatch {
                expected: first.dim(),
                found: bad.dim(),
            });
        }
    }
    groups
        .par_iter()
        .map(|g| estimate_gaussian(g, eps_scale))
        .collect()
}

/// Runs the configured algorithm end to end. Settings that do not apply to
/// the algorithm are logged and ignored.
pub fn run_pipeline(groups: &[SampleGroup], cfg: &PipelineConfig) -> Result<ClusterAssignment> {
    for msg in cfg.ignored_settings() {
        warn!("{msg}");
    }
    run_quiet(groups, cfg)
}

/// [`run_pipeline`] without the warnings, for batch drivers that report
/// them once up front.
pub(crate) fn run_quiet(groups: &[SampleGroup], cfg: &PipelineConfig) -> Result<ClusterAssignment> {
    cfg.validate()?;
    check_count(groups.len(), cfg.k)?;
    let models = estimate_models(groups, cfg.eps_scale)?;
    cluster_models(&models, cfg)
}

fn check_count(n: usize, k: usize) -> Result<()> {
    if n < k {
        return Err(Error::InvalidConfig(format!("{n} objects cannot form {k} clusters")));
    }
    Ok(())
}

/// Clusters already-estimated models.
pub fn cluster_models(models: &[GaussianModel], cfg: &PipelineConfig) -> Result<ClusterAssignment> {
    cfg.validate()?;
    check_count(models.len(), cfg.k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match cfg.algorithm {
        Algorithm::KmeansMeans => {
            let means: Vec<Vec<f64>> = models.iter().map(|m| m.mean.iter().copied().collect()).collect();
            let max_iter = cfg.max_iter.unwrap_or(DEFAULT_MAX_ITER);
            Ok(kmeans(&means, cfg.k, &mut rng, cfg.restarts, max_iter)?.assignment)
        }
        Algorithm::Kl | Algorithm::Klpp => {
            let opts = KlClusterOptions {
                seeding: if cfg.algorithm == Algorithm::Klpp {
                    Seeding::KlPlusPlus
                } else {
                    Seeding::Random
                },
                max_iter: cfg.max_iter.unwrap_or(DEFAULT_KL_MAX_ITER),
                klpp_squared: cfg.klpp_squared,
            };
            Ok(kl_cluster(models, cfg.k, &opts, &mut rng)?.assignment)
        }
        alg => {
            let metric = alg.spectral_metric().expect("spectral algorithm");
            let x = distance_matrix_with(models, metric, &DEFAULT_TOLERANCES)?;
            spectral_from(&x, cfg, &mut rng)
        }
    }
}

/// Spectral clustering of a precomputed distance matrix. Only the spectral
/// algorithms apply; the matrix metric must be symmetric.
pub fn cluster_distances(x: &DistanceMatrix, cfg: &PipelineConfig) -> Result<ClusterAssignment> {
    cfg.validate()?;
    if cfg.algorithm.is_kl() || cfg.algorithm == Algorithm::KmeansMeans {
        return Err(Error::InvalidConfig(format!(
            "{} needs sample groups or models, not a distance matrix",
            cfg.algorithm
        )));
    }
    check_count(x.len(), cfg.k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    spectral_from(x, cfg, &mut rng)
}

fn spectral_from(x: &DistanceMatrix, cfg: &PipelineConfig, rng: &mut ChaCha8Rng) -> Result<ClusterAssignment> {
    let sqrt_applies = cfg.kernel_on_sqrt && x.metric == Metric::WassersteinSq;
    let w = if sqrt_applies {
        kernelize(&x.sqrt_entries(), cfg.sigma)?
    } else {
        kernelize(x, cfg.sigma)?
    };
    let max_iter = cfg.max_iter.unwrap_or(DEFAULT_MAX_ITER);
    spectral_cluster_with(&w, cfg.k, rng, cfg.restarts, max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::nmi;
    use crate::gaussian::sample;
    use crate::matrix::SymMatrix;
    use crate::synth::{generate_benchmark, SynthParams};

    fn two_far_groups() -> (Vec<SampleGroup>, ClusterAssignment) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let near = GaussianModel::standard(2);
        let far = GaussianModel::new(vec![100.0, 100.0].into(), SymMatrix::identity(2)).unwrap();
        let mut groups = Vec::new();
        let mut labels = Vec::new();
        for t in 0..8 {
            let (g, l) = if t % 2 == 0 { (&near, 0) } else { (&far, 1) };
            groups.push(sample(g, 30, format!("g{t}"), &mut rng).unwrap());
            labels.push(l);
        }
        (groups, ClusterAssignment::new(labels, 2).unwrap())
    }

    #[test]
    fn every_algorithm_separates_distant_groups() {
        let (groups, truth) = two_far_groups();
        for alg in Algorithm::ALL {
            let a = run_pipeline(&groups, &PipelineConfig::new(alg, 2)).unwrap();
            assert_eq!(nmi(&a, &truth).unwrap(), 1.0, "{alg}");
        }
    }

    #[test]
    fn bhattacharyya_single_trial_smoke() {
        let b = generate_benchmark(&SynthParams::new(7, 5), 2024).unwrap();
        let cfg = PipelineConfig::new(Algorithm::BhattacharyyaSpectral, 5).with_seed(1);
        let a = run_pipeline(&b.groups, &cfg).unwrap();
        let score = nmi(&a, &b.truth).unwrap();
        assert!(score >= 0.8, "nmi {score}");
    }

    #[test]
    fn deterministic_given_seed() {
        let b = generate_benchmark(&SynthParams { n_objects: 40, ..SynthParams::new(3, 3) }, 8).unwrap();
        for alg in Algorithm::ALL {
            let cfg = PipelineConfig::new(alg, 3).with_seed(99);
            assert_eq!(run_pipeline(&b.groups, &cfg).unwrap(), run_pipeline(&b.groups, &cfg).unwrap());
        }
    }

    #[test]
    fn ignored_settings_are_reported() {
        let cfg = PipelineConfig {
            sigma: Some(2.0),
            ..PipelineConfig::new(Algorithm::Kl, 2)
        };
        assert_eq!(cfg.ignored_settings(), vec!["sigma ignored for kl".to_string()]);
        let (groups, _) = two_far_groups();
        assert!(run_pipeline(&groups, &cfg).is_ok());
        assert!(PipelineConfig::new(Algorithm::Klpp, 2).ignored_settings().is_empty());
    }

    #[test]
    fn invalid_configs() {
        let (groups, _) = two_far_groups();
        assert!(run_pipeline(&groups, &PipelineConfig::new(Algorithm::Kl, 1)).is_err());
        assert!(run_pipeline(&groups, &PipelineConfig::new(Algorithm::Kl, 9)).is_err());
        let neg = PipelineConfig {
            eps_scale: -1.0,
            ..PipelineConfig::new(Algorithm::Kl, 2)
        };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn distance_input_only_for_spectral() {
        let (groups, truth) = two_far_groups();
        let models = estimate_models(&groups, 1e-8).unwrap();
        let x = distance_matrix_with(&models, Metric::Bhattacharyya, &DEFAULT_TOLERANCES).unwrap();
        let a = cluster_distances(&x, &PipelineConfig::new(Algorithm::BhattacharyyaSpectral, 2)).unwrap();
        assert_eq!(nmi(&a, &truth).unwrap(), 1.0);
        assert!(cluster_distances(&x, &PipelineConfig::new(Algorithm::Kl, 2)).is_err());
    }

    #[test]
    fn algorithm_names_round_trip() {
        for alg in Algorithm::ALL {
            assert_eq!(alg.as_str().parse::<Algorithm>().unwrap(), alg);
            assert_eq!(serde_json::to_string(&alg).unwrap(), format!("\"{alg}\""));
        }
        assert_eq!(Algorithm::KmeansMeans.family(), Family::MeanOnly);
        assert_eq!(Algorithm::Klpp.family(), Family::Distribution);
    }
}
