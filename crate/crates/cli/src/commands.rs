use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use distclust::harness::{resolve_threads, SharedSettings, StockGrid, SynthGrid};
use distclust::ingest::{load_stock_csv, synthetic_ohlc, write_stock_csv, IngestOptions};
use distclust::io::{read_groups, read_json, write_benchmark_dir, write_json};
use distclust::metrics::distance_matrix;
use distclust::pipeline::{cluster_distances, cluster_models, estimate_models};
use distclust::synth::SimplexSampling;
use distclust::{
    bench_stock, bench_synth, generate_benchmark, nmi, BenchmarkReport, ClusterAssignment, DistanceMatrix,
    GaussianModel, PipelineConfig, SynthParams,
};
use log::{info, warn};
use serde::Serialize;

use crate::args::{ClusterArgs, Cli, Command, SettingArgs};
use crate::Failure;

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow!(msg.into()))
}

impl SettingArgs {
    fn shared(&self) -> SharedSettings {
        SharedSettings {
            sigma: self.sigma,
            eps_scale: self.eps_scale,
            max_iter: self.max_iter,
            restarts: self.restarts,
            kernel_on_sqrt: self.kernel_on_sqrt,
            klpp_squared: self.klpp_squared,
        }
    }
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Outcome {
    match out {
        Some(path) => write_json(path, value)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, value).map_err(|e| Failure::Data(e.into()))?;
            writeln!(stdout)?;
        }
    }
    Ok(())
}

pub fn run(cli: Cli) -> Outcome {
    let threads = resolve_threads(cli.threads);
    if threads > 0 {
        // Only fails if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match cli.command {
        Command::Estimate { groups, eps_scale, out } => {
            let groups = read_groups(&groups)?;
            let models = estimate_models(&groups, eps_scale)?;
            info!("estimated {} models", models.len());
            emit_json(&models, out.as_deref())
        }
        Command::Distmat { models, metric, out } => {
            let models: Vec<GaussianModel> = read_json(&models)?;
            let x = distance_matrix(&models, metric)?;
            match out {
                Some(path) if path.extension().is_some_and(|e| e == "csv") => {
                    let file = File::create(&path).with_context(|| path.display().to_string()).map_err(Failure::Data)?;
                    x.write_csv(BufWriter::new(file))?;
                }
                Some(path) => std::fs::write(&path, x.to_json()? + "\n")?,
                None => println!("{}", x.to_json()?),
            }
            Ok(())
        }
        Command::Cluster(args) => cluster(args),
        Command::Nmi { a, b } => {
            let a: ClusterAssignment = read_json(&a)?;
            let b: ClusterAssignment = read_json(&b)?;
            println!("{:?}", nmi(&a, &b)?);
            Ok(())
        }
        Command::Synth { d, k, seed, objects, samples, simplex_boundary, out } => {
            let params = SynthParams {
                n_objects: objects,
                samples_per_object: samples,
                simplex: simplex_mode(simplex_boundary),
                ..SynthParams::new(d, k)
            };
            let bench = generate_benchmark(&params, seed)?;
            write_benchmark_dir(&out, &bench)?;
            info!("wrote {} objects to {}", bench.groups.len(), out.display());
            Ok(())
        }
        Command::BenchSynth {
            dims,
            ks,
            trials,
            seed,
            objects,
            samples,
            simplex_boundary,
            algorithms,
            settings,
            out,
        } => {
            let grid = SynthGrid {
                algorithms: algorithms.resolve(),
                n_objects: objects,
                samples_per_object: samples,
                simplex: simplex_mode(simplex_boundary),
                settings: settings.shared(),
                ..SynthGrid::new(dims, ks, trials, seed)
            };
            let report = bench_synth(&grid, threads)?;
            write_report(&report, &out, "synth")
        }
        Command::BenchStock {
            csv,
            ks,
            sigmas,
            trials,
            seed,
            min_days,
            strict,
            log_returns,
            algorithms,
            settings,
            out,
        } => {
            let data = load_stock_csv(&csv, &IngestOptions { min_days, strict })?;
            if data.skipped_rows > 0 {
                warn!("skipped {} malformed rows", data.skipped_rows);
            }
            info!("loaded {} symbols ({} samples)", data.groups.len(), data.total_samples());
            let grid = StockGrid {
                algorithms: algorithms.resolve(),
                log_returns,
                settings: settings.shared(),
                ..StockGrid::new(ks, sigmas, trials, seed)
            };
            let report = bench_stock(&data.groups, &grid, threads)?;
            write_report(&report, &out, "stock")
        }
        Command::OhlcFixture { tickers, days, seed, out } => {
            let file = File::create(&out).with_context(|| out.display().to_string()).map_err(Failure::Data)?;
            write_stock_csv(&synthetic_ohlc(tickers, days, seed), BufWriter::new(file))?;
            Ok(())
        }
    }
}

fn simplex_mode(boundary: bool) -> SimplexSampling {
    if boundary {
        SimplexSampling::Boundary
    } else {
        SimplexSampling::Uniform
    }
}

fn write_report(report: &BenchmarkReport, dir: &Path, stem: &str) -> Outcome {
    std::fs::create_dir_all(dir)?;
    write_json(dir.join("report.json"), report)?;
    for path in report.write_plot_csvs(dir, stem)? {
        info!("wrote {}", path.display());
    }
    for c in report.cells.iter().filter(|c| c.failures > 0) {
        warn!("{} k={}: {} failed trials", c.algorithm, c.k, c.failures);
    }
    Ok(())
}

fn cluster(args: ClusterArgs) -> Outcome {
    let s = &args.settings;
    let cfg = PipelineConfig {
        algorithm: args.algorithm,
        k: args.k,
        sigma: s.sigma,
        eps_scale: s.eps_scale,
        seed: args.seed,
        max_iter: s.max_iter,
        restarts: s.restarts,
        kernel_on_sqrt: s.kernel_on_sqrt,
        klpp_squared: s.klpp_squared,
    };
    cfg.validate()?;
    for msg in cfg.ignored_settings() {
        warn!("{msg}");
    }
    let assignment = if let Some(path) = &args.groups {
        let groups = read_groups(path)?;
        cluster_models(&estimate_models(&groups, cfg.eps_scale)?, &cfg)?
    } else if let Some(path) = &args.models {
        let models: Vec<GaussianModel> = read_json(path)?;
        cluster_models(&models, &cfg)?
    } else if let Some(path) = &args.distances {
        let x = if path.extension().is_some_and(|e| e == "csv") {
            let metric = args.metric.ok_or_else(|| usage("--metric is required for a CSV distance matrix"))?;
            let file = File::open(path).with_context(|| path.display().to_string()).map_err(Failure::Data)?;
            DistanceMatrix::read_csv(metric, file)?
        } else {
            let text = std::fs::read_to_string(path)
                .with_context(|| path.display().to_string())
                .map_err(Failure::Data)?;
            DistanceMatrix::from_json(&text)?
        };
        cluster_distances(&x, &cfg)?
    } else {
        return Err(usage("one of --groups, --models or --distances is required"));
    };
    emit_json(&assignment, args.out.as_deref())
}
