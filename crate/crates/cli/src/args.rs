use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};
use distclust::{Algorithm, Metric};

#[derive(Debug, Parser)]
#[command(name = "distclust", version, about = "Cluster objects observed as sets of samples")]
pub struct Cli {
    /// Worker threads (overrides DISTCLUST_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate one Gaussian per object from groups.csv.
    Estimate {
        /// groups.csv with columns object_id,sample_index,x_0,…
        groups: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        eps_scale: f64,
        /// Models JSON output (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise divergence matrix between models.
    Distmat {
        /// Models JSON.
        models: PathBuf,
        #[arg(long, value_parser = parse_metric)]
        metric: Metric,
        /// `.csv` writes a bare matrix, anything else JSON (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Partition objects into k clusters.
    Cluster(ClusterArgs),
    /// Normalized mutual information between two label files.
    Nmi { a: PathBuf, b: PathBuf },
    /// Write a synthetic benchmark (groups.csv, truth.json) to a directory.
    Synth {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = distclust::synth::DEFAULT_OBJECTS)]
        objects: usize,
        #[arg(long, default_value_t = distclust::synth::DEFAULT_SAMPLES_PER_OBJECT)]
        samples: usize,
        /// Draw generator means on the simplex boundary.
        #[arg(long)]
        simplex_boundary: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Accuracy grid over synthetic benchmarks.
    BenchSynth {
        #[arg(long, value_delimiter = ',', default_value = "4,5,6,7,8,9,10")]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "5")]
        ks: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = distclust::synth::DEFAULT_OBJECTS)]
        objects: usize,
        #[arg(long, default_value_t = distclust::synth::DEFAULT_SAMPLES_PER_OBJECT)]
        samples: usize,
        #[arg(long)]
        simplex_boundary: bool,
        #[command(flatten)]
        algorithms: AlgorithmList,
        #[command(flatten)]
        settings: SettingArgs,
        /// Directory for report.json and the plot CSVs.
        #[arg(long)]
        out: PathBuf,
    },
    /// Noise-stability grid over an OHLC price file.
    BenchStock {
        /// CSV with date,symbol,open,close,low,high columns.
        csv: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
        ks: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        sigmas: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = distclust::ingest::DEFAULT_MIN_DAYS)]
        min_days: usize,
        /// Reject malformed rows instead of skipping them.
        #[arg(long)]
        strict: bool,
        /// Cluster daily log returns instead of raw prices.
        #[arg(long)]
        log_returns: bool,
        #[command(flatten)]
        algorithms: AlgorithmList,
        #[command(flatten)]
        settings: SettingArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a deterministic synthetic OHLC price file.
    OhlcFixture {
        #[arg(long, default_value_t = 40)]
        tickers: usize,
        #[arg(long, default_value_t = 252)]
        days: usize,
        #[arg(long, default_value_t = 2016)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("input").required(true)))]
pub struct ClusterArgs {
    /// groups.csv input.
    #[arg(long, group = "input")]
    pub groups: Option<PathBuf>,
    /// Models JSON input.
    #[arg(long, group = "input")]
    pub models: Option<PathBuf>,
    /// Distance matrix input (JSON, or CSV together with --metric).
    #[arg(long, group = "input")]
    pub distances: Option<PathBuf>,
    /// Metric of a CSV distance matrix.
    #[arg(long, value_parser = parse_metric)]
    pub metric: Option<Metric>,
    #[arg(long, value_parser = parse_algorithm)]
    pub algorithm: Algorithm,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub settings: SettingArgs,
    /// Labels JSON output (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AlgorithmList {
    /// Comma-separated algorithms (default: all).
    #[arg(long, value_delimiter = ',', value_parser = parse_algorithm)]
    pub algorithms: Vec<Algorithm>,
}

impl AlgorithmList {
    pub fn resolve(&self) -> Vec<Algorithm> {
        if self.algorithms.is_empty() {
            Algorithm::ALL.to_vec()
        } else {
            self.algorithms.clone()
        }
    }
}

#[derive(Debug, Args)]
pub struct SettingArgs {
    /// Kernel bandwidth (median heuristic if omitted).
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    pub eps_scale: f64,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, default_value_t = distclust::kmeans::DEFAULT_RESTARTS)]
    pub restarts: usize,
    /// Kernelize the Wasserstein distance rather than its square.
    #[arg(long)]
    pub kernel_on_sqrt: bool,
    /// Weight KL++ seeding draws by squared divergence.
    #[arg(long)]
    pub klpp_squared: bool,
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse().map_err(|e: distclust::Error| e.to_string())
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: distclust::Error| e.to_string())
}
