//! Clustering of objects that are each observed as a set of samples from a
//! hidden Gaussian distribution.

pub mod assignment;
pub mod config;
pub mod error;
pub mod eval;
pub mod gaussian;
pub mod harness;
pub mod ingest;
pub mod io;
pub mod klcluster;
pub mod kmeans;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod spectral;
pub mod synth;

pub use assignment::ClusterAssignment;
pub use config::{Tolerances, DEFAULT_TOLERANCES};
pub use error::{Error, Result};
pub use gaussian::{estimate_gaussian, GaussianModel, SampleGroup};
pub use matrix::{EigenDecomposition, SymMatrix};
pub use metrics::{distance_matrix, DistanceMatrix, Metric};
pub use spectral::AdjacencyMatrix;
pub use eval::nmi;
pub use harness::{bench_stock, bench_synth, BenchmarkReport};
pub use pipeline::{run_pipeline, Algorithm, Family, PipelineConfig};
pub use synth::{generate_benchmark, SynthParams, SyntheticBenchmark};
