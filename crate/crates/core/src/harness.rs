//! Batch drivers: seeded trials over the synthetic benchmark grid and the
//! noise-stability experiment on price data, with JSON and CSV reports.
//!
//! Trials run on a rayon pool. Every trial owns a seed derived from the base
//! seed and its position in the grid, and results are merged by key, so the
//! report does not depend on scheduling.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::ClusterAssignment;
use crate::error::{Error, Result};
use crate::eval::nmi;
use crate::gaussian::SampleGroup;
use crate::ingest::{add_noise, log_returns};
use crate::pipeline::{run_quiet, Algorithm, Family, PipelineConfig};
use crate::synth::{generate_benchmark, trial_seed, SimplexSampling, SynthParams, DEFAULT_OBJECTS, DEFAULT_SAMPLES_PER_OBJECT};

pub const SCHEMA_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "DISTCLUST_THREADS";

/// Worker count: the explicit value if given, else `DISTCLUST_THREADS`, else
/// rayon's default (0).
pub fn resolve_threads(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var(THREADS_ENV).ok()?.trim().parse().ok())
        .unwrap_or(0)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed for a position in a grid.
fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Algorithm settings shared by every cell; `algorithm`, `k` and `seed` are
/// filled in per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedSettings {
    pub sigma: Option<f64>,
    pub eps_scale: f64,
    pub max_iter: Option<usize>,
    pub restarts: usize,
    pub kernel_on_sqrt: bool,
    pub klpp_squared: bool,
}

impl Default for SharedSettings {
    fn default() -> Self {
        let base = PipelineConfig::new(Algorithm::Kl, 2);
        SharedSettings {
            sigma: base.sigma,
            eps_scale: base.eps_scale,
            max_iter: base.max_iter,
            restarts: base.restarts,
            kernel_on_sqrt: base.kernel_on_sqrt,
            klpp_squared: base.klpp_squared,
        }
    }
}

impl SharedSettings {
    fn config(&self, algorithm: Algorithm, k: usize, seed: u64) -> PipelineConfig {
        PipelineConfig {
            algorithm,
            k,
            sigma: self.sigma,
            eps_scale: self.eps_scale,
            seed,
            max_iter: self.max_iter,
            restarts: self.restarts,
            kernel_on_sqrt: self.kernel_on_sqrt,
            klpp_squared: self.klpp_squared,
        }
    }

    fn validate(&self, algorithms: &[Algorithm]) -> Result<()> {
        for &alg in algorithms {
            let cfg = self.config(alg, 2, 0);
            cfg.validate()?;
            for msg in cfg.ignored_settings() {
                warn!("{msg}");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthGrid {
    pub dims: Vec<usize>,
    pub ks: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub n_objects: usize,
    pub samples_per_object: usize,
    pub simplex: SimplexSampling,
    pub settings: SharedSettings,
}

impl SynthGrid {
    pub fn new(dims: Vec<usize>, ks: Vec<usize>, trials: usize, base_seed: u64) -> Self {
        SynthGrid {
            dims,
            ks,
            trials,
            base_seed,
            algorithms: Algorithm::ALL.to_vec(),
            n_objects: DEFAULT_OBJECTS,
            samples_per_object: DEFAULT_SAMPLES_PER_OBJECT,
            simplex: SimplexSampling::Uniform,
            settings: SharedSettings::default(),
        }
    }

    fn params(&self, d: usize, k: usize) -> SynthParams {
        SynthParams {
            n_objects: self.n_objects,
            samples_per_object: self.samples_per_object,
            simplex: self.simplex,
            ..SynthParams::new(d, k)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockGrid {
    pub ks: Vec<usize>,
    pub noise_sigmas: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub algorithms: Vec<Algorithm>,
    /// Cluster day-over-day log returns instead of raw prices. Noise is
    /// always added to the prices.
    pub log_returns: bool,
    pub settings: SharedSettings,
}

impl StockGrid {
    pub fn new(ks: Vec<usize>, noise_sigmas: Vec<f64>, trials: usize, base_seed: u64) -> Self {
        StockGrid {
            ks,
            noise_sigmas,
            trials,
            base_seed,
            algorithms: Algorithm::ALL.to_vec(),
            log_returns: false,
            settings: SharedSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub algorithm: Algorithm,
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    pub k: usize,
    /// Successful trials.
    pub trial_count: usize,
    pub failures: usize,
    /// `None` when every trial failed.
    pub nmi_mean: Option<f64>,
    /// Population variance of the per-trial NMI.
    pub nmi_variance: Option<f64>,
    pub nmi_values: Vec<f64>,
    /// Summed wall-clock time of the cell's trials.
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Synth,
    Stock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub kind: ReportKind,
    pub version: String,
    pub timestamp: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub cells: Vec<CellRecord>,
}

/// Fields that legitimately differ between identical runs.
const VOLATILE_FIELDS: [&str; 2] = ["timestamp", "wall_time_s"];

impl BenchmarkReport {
    fn new(kind: ReportKind, seed: u64, config: serde_json::Value, cells: Vec<CellRecord>) -> Self {
        BenchmarkReport {
            schema_version: SCHEMA_VERSION,
            kind,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            seed,
            config,
            cells,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON without timestamp and timings: byte-identical across re-runs
    /// with the same inputs and seeds.
    pub fn canonical_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        strip_fields(&mut value);
        Ok(serde_json::to_string_pretty(&value)?)
    }

    pub fn cell(&self, algorithm: Algorithm, k: usize, d: Option<usize>, noise_sigma: Option<f64>) -> Option<&CellRecord> {
        self.cells
            .iter()
            .find(|c| c.algorithm == algorithm && c.k == k && c.d == d && c.noise_sigma == noise_sigma)
    }

    /// Wide tables for plotting, one per statistic: rows keyed by `(d, k)` or
    /// `(noise_sigma, k)`, one column per algorithm. Returns the paths written.
    pub fn write_plot_csvs(&self, dir: impl AsRef<Path>, stem: &str) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut algorithms: Vec<Algorithm> = self.cells.iter().map(|c| c.algorithm).collect();
        algorithms.sort();
        algorithms.dedup();
        let axis = match self.kind {
            ReportKind::Synth => "d",
            ReportKind::Stock => "noise_sigma",
        };
        // Row key rendered as text, ordered numerically.
        type Row<'a> = (String, BTreeMap<Algorithm, &'a CellRecord>);
        let mut rows: BTreeMap<(u64, usize), Row<'_>> = BTreeMap::new();
        for c in &self.cells {
            let (order, label) = match (c.d, c.noise_sigma) {
                (Some(d), _) => (d as u64, d.to_string()),
                (None, Some(s)) => (s.to_bits(), s.to_string()),
                (None, None) => (0, String::new()),
            };
            rows.entry((order, c.k)).or_insert_with(|| (label, BTreeMap::new())).1.insert(c.algorithm, c);
        }
        type Stat = fn(&CellRecord) -> Option<f64>;
        let stats: [(&str, Stat); 2] = [("nmi_mean", |c| c.nmi_mean), ("nmi_variance", |c| c.nmi_variance)];
        let mut written = Vec::new();
        for (name, stat) in stats {
            let path = dir.join(format!("{stem}_{name}.csv"));
            let mut w = csv::Writer::from_path(&path)?;
            let mut header = vec![axis.to_string(), "k".to_string()];
            header.extend(algorithms.iter().map(|a| a.to_string()));
            w.write_record(&header)?;
            for ((_, k), (label, cells)) in &rows {
                let mut record = vec![label.clone(), k.to_string()];
                record.extend(algorithms.iter().map(|a| {
                    cells.get(a).and_then(|c| stat(c)).map_or(String::new(), |v| v.to_string())
                }));
                w.write_record(&record)?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn strip_fields(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            for f in VOLATILE_FIELDS {
                map.remove(f);
            }
            map.values_mut().for_each(strip_fields);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_fields),
        _ => {}
    }
}

struct TrialOutcome {
    nmi: Result<f64>,
    seconds: f64,
}

fn timed(f: impl FnOnce() -> Result<f64>) -> TrialOutcome {
    let start = Instant::now();
    let nmi = f();
    TrialOutcome {
        nmi,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn summarize(
    algorithm: Algorithm,
    k: usize,
    d: Option<usize>,
    noise_sigma: Option<f64>,
    outcomes: Vec<TrialOutcome>,
) -> CellRecord {
    let mut values = Vec::new();
    let mut failures = 0;
    let mut seconds = 0.0;
    for (trial, o) in outcomes.into_iter().enumerate() {
        seconds += o.seconds;
        match o.nmi {
            Ok(v) => values.push(v),
            Err(e) => {
                warn!("{algorithm} k={k} trial {trial} failed: {}", e.full_message());
                failures += 1;
            }
        }
    }
    let (mean, variance) = if values.is_empty() {
        (None, None)
    } else {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        (Some(mean), Some(var))
    };
    CellRecord {
        algorithm,
        family: algorithm.family(),
        d,
        noise_sigma,
        k,
        trial_count: values.len(),
        failures,
        nmi_mean: mean,
        nmi_variance: variance,
        nmi_values: values,
        wall_time_s: seconds,
    }
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn check_common(trials: usize, ks: &[usize], algorithms: &[Algorithm], settings: &SharedSettings) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    if ks.is_empty() || algorithms.is_empty() {
        return Err(Error::InvalidConfig("grid needs at least one k and one algorithm".into()));
    }
    settings.validate(algorithms)
}

/// For every `(d, k)` cell runs `trials` synthetic benchmarks and scores each
/// algorithm against the generating labels. Trial `t` of every cell uses the
/// data seed `trial_seed(base_seed, t)`; all algorithms see the same data.
pub fn bench_synth(grid: &SynthGrid, threads: usize) -> Result<BenchmarkReport> {
    check_common(grid.trials, &grid.ks, &grid.algorithms, &grid.settings)?;
    for &d in &grid.dims {
        for &k in &grid.ks {
            grid.params(d, k).validate()?;
        }
    }
    let tasks: Vec<(usize, usize, usize)> = grid
        .dims
        .iter()
        .flat_map(|&d| grid.ks.iter().flat_map(move |&k| (0..grid.trials).map(move |t| (d, k, t))))
        .collect();

    let results: Vec<((usize, usize, usize), Vec<TrialOutcome>)> = with_pool(threads, || {
        tasks
            .par_iter()
            .map(|&(d, k, t)| {
                let seed = trial_seed(grid.base_seed, t as u64);
                let data = generate_benchmark(&grid.params(d, k), seed);
                let outcomes = grid
                    .algorithms
                    .iter()
                    .map(|&alg| {
                        timed(|| {
                            let b = data.as_ref().map_err(|e| Error::Numerical(e.full_message()))?;
                            let cfg = grid.settings.config(alg, k, trial_seed(seed, 1));
                            nmi(&run_quiet(&b.groups, &cfg)?, &b.truth)
                        })
                    })
                    .collect();
                ((d, k, t), outcomes)
            })
            .collect()
    })?;

    let mut by_cell: BTreeMap<(usize, usize, usize), Vec<TrialOutcome>> = BTreeMap::new();
    for ((d, k, _), outcomes) in results {
        for (a, o) in outcomes.into_iter().enumerate() {
            by_cell.entry((d, k, a)).or_default().push(o);
        }
    }
    let cells = by_cell
        .into_iter()
        .map(|((d, k, a), outcomes)| summarize(grid.algorithms[a], k, Some(d), None, outcomes))
        .collect();
    Ok(BenchmarkReport::new(ReportKind::Synth, grid.base_seed, serde_json::to_value(grid)?, cells))
}

/// Noise stability: each algorithm's clustering of the clean data is its own
/// ground truth; every `(σ, k, trial)` re-clusters noised data with the same
/// algorithm seed and scores agreement with that truth. The noise seed
/// depends on `(σ index, trial)` only, so all algorithms and all `k` see the
/// same noised data.
pub fn bench_stock(groups: &[SampleGroup], grid: &StockGrid, threads: usize) -> Result<BenchmarkReport> {
    check_common(grid.trials, &grid.ks, &grid.algorithms, &grid.settings)?;
    if let Some(&s) = grid.noise_sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::InvalidConfig(format!("noise sigma must be non-negative, got {s}")));
    }
    let max_k = grid.ks.iter().copied().max().unwrap_or(0);
    if groups.len() < max_k {
        return Err(Error::InvalidConfig(format!(
            "{} groups cannot form {max_k} clusters",
            groups.len()
        )));
    }
    let features = |g: &[SampleGroup]| -> Result<Vec<SampleGroup>> {
        if grid.log_returns {
            log_returns(g)
        } else {
            Ok(g.to_vec())
        }
    };
    let cluster_seed = derive_seed(grid.base_seed, &[0]);

    with_pool(threads, || -> Result<BenchmarkReport> {
        let clean = features(groups)?;
        let truth_tasks: Vec<(Algorithm, usize)> = grid
            .algorithms
            .iter()
            .flat_map(|&a| grid.ks.iter().map(move |&k| (a, k)))
            .collect();
        let truths: BTreeMap<(Algorithm, usize), ClusterAssignment> = truth_tasks
            .par_iter()
            .map(|&(a, k)| Ok(((a, k), run_quiet(&clean, &grid.settings.config(a, k, cluster_seed))?)))
            .collect::<Result<_>>()?;

        let noise_tasks: Vec<(usize, usize)> = (0..grid.noise_sigmas.len())
            .flat_map(|s| (0..grid.trials).map(move |t| (s, t)))
            .collect();
        type CellOutcomes = Vec<((Algorithm, usize), TrialOutcome)>;
        let results: Vec<((usize, usize), CellOutcomes)> = noise_tasks
            .par_iter()
            .map(|&(s, t)| {
                let seed = trial_seed(derive_seed(grid.base_seed, &[1, s as u64]), t as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let noised = features(&add_noise(groups, grid.noise_sigmas[s], &mut rng));
                let outcomes = truth_tasks
                    .iter()
                    .map(|&(a, k)| {
                        let outcome = timed(|| {
                            let data = noised.as_ref().map_err(|e| Error::Numerical(e.full_message()))?;
                            let cfg = grid.settings.config(a, k, cluster_seed);
                            nmi(&run_quiet(data, &cfg)?, &truths[&(a, k)])
                        });
                        ((a, k), outcome)
                    })
                    .collect();
                ((s, t), outcomes)
            })
            .collect();

        let mut by_cell: BTreeMap<(usize, usize, usize), Vec<TrialOutcome>> = BTreeMap::new();
        for ((s, _), outcomes) in results {
            for ((a, k), o) in outcomes {
                let a_idx = grid.algorithms.iter().position(|&x| x == a).expect("known algorithm");
                by_cell.entry((a_idx, s, k)).or_default().push(o);
            }
        }
        let cells = by_cell
            .into_iter()
            .map(|((a, s, k), outcomes)| {
                summarize(grid.algorithms[a], k, None, Some(grid.noise_sigmas[s]), outcomes)
            })
            .collect();
        Ok(BenchmarkReport::new(ReportKind::Stock, grid.base_seed, serde_json::to_value(grid)?, cells))
    })?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::synthetic_ohlc;

    fn small_synth(algorithms: Vec<Algorithm>, trials: usize) -> SynthGrid {
        SynthGrid {
            algorithms,
            n_objects: 30,
            samples_per_object: 20,
            ..SynthGrid::new(vec![3], vec![3], trials, 7)
        }
    }

    fn stock_groups(tickers: usize) -> Vec<SampleGroup> {
        let recs = synthetic_ohlc(tickers, 40, 3);
        let mut buf = Vec::new();
        crate::ingest::write_stock_csv(&recs, &mut buf).unwrap();
        crate::ingest::read_stock_csv(&buf[..], &Default::default()).unwrap().groups
    }

    #[test]
    fn single_trial_has_zero_variance() {
        let grid = SynthGrid::new(vec![7], vec![5], 1, 11);
        let grid = SynthGrid { algorithms: vec![Algorithm::KmeansMeans], ..grid };
        let report = bench_synth(&grid, 2).unwrap();
        assert_eq!(report.cells.len(), 1);
        let cell = &report.cells[0];
        assert_eq!(cell.trial_count, 1);
        assert_eq!(cell.nmi_variance, Some(0.0));
        assert_eq!(cell.family, Family::MeanOnly);
    }

    #[test]
    fn report_sanity_and_schedule_independence() {
        let grid = small_synth(Algorithm::ALL.to_vec(), 3);
        let a = bench_synth(&grid, 1).unwrap();
        let b = bench_synth(&grid, 4).unwrap();
        assert_eq!(a.canonical_json().unwrap(), b.canonical_json().unwrap());
        assert_eq!(a.cells.len(), 6);
        for c in &a.cells {
            assert_eq!(c.trial_count + c.failures, 3);
            let m = c.nmi_mean.unwrap();
            assert!((0.0..=1.0).contains(&m));
            assert!(c.nmi_variance.unwrap() >= 0.0);
        }
        let json = a.to_json().unwrap();
        assert!(json.contains("\"schema_version\": 1"));
        assert!(json.contains("\"timestamp\""));
        let canon = a.canonical_json().unwrap();
        assert!(!canon.contains("timestamp") && !canon.contains("wall_time_s"));
    }

    #[test]
    fn stock_zero_noise_reproduces_truth() {
        let groups = stock_groups(12);
        let grid = StockGrid::new(vec![3], vec![0.0, 1.0], 2, 5);
        let report = bench_stock(&groups, &grid, 2).unwrap();
        assert_eq!(report.cells.len(), 6 * 2);
        for c in report.cells.iter().filter(|c| c.noise_sigma == Some(0.0)) {
            assert_eq!(c.nmi_mean, Some(1.0), "{c:?}");
        }
    }

    #[test]
    fn stock_rejects_too_few_groups() {
        let groups = stock_groups(2);
        assert!(bench_stock(&groups, &StockGrid::new(vec![3], vec![1.0], 1, 0), 1).is_err());
    }

    #[test]
    fn plot_csvs_are_wide_tables() {
        let report = bench_synth(&small_synth(vec![Algorithm::Kl, Algorithm::KmeansMeans], 1), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = report.write_plot_csvs(dir.path(), "synth").unwrap();
        assert_eq!(paths.len(), 2);
        let text = std::fs::read_to_string(&paths[0]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("d,k,kmeans_means,kl"));
        assert!(lines.next().unwrap().starts_with("3,3,"));
    }

    #[test]
    fn thread_resolution_prefers_explicit_value() {
        assert_eq!(resolve_threads(Some(3)), 3);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, &[1, 0]), derive_seed(1, &[1, 1]));
        assert_ne!(derive_seed(1, &[0]), derive_seed(2, &[0]));
    }
}
