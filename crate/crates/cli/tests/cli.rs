use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn distclust(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distclust"))
        .args(args)
        .current_dir(dir)
        .env_remove("RUST_LOG")
        .env_remove("DISTCLUST_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\nstderr: {}", o.status.code(), stderr(o));
}

/// Small synthetic benchmark written to `dir`.
fn small_synth(dir: &Path) {
    assert_ok(&distclust(
        dir,
        &["synth", "--d", "3", "--k", "2", "--seed", "5", "--objects", "20", "--samples", "25", "--out", "."],
    ));
}

#[test]
fn nmi_of_a_partition_with_itself_is_one() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("a.json"), r#"{"k": 3, "labels": [0, 0, 1, 2, 2, 1]}"#).unwrap();
    let out = distclust(dir.path(), &["nmi", "a.json", "a.json"]);
    assert_ok(&out);
    assert_eq!(stdout(&out).trim(), "1.0");
}

#[test]
fn golden_synth_cluster_nmi_flow() {
    let dir = TempDir::new().unwrap();
    assert_ok(&distclust(dir.path(), &["synth", "--d", "7", "--k", "5", "--seed", "42"]));
    assert_ok(&distclust(
        dir.path(),
        &["cluster", "--groups", "groups.csv", "--algorithm", "klpp", "--k", "5", "--out", "labels.json"],
    ));
    let out = distclust(dir.path(), &["nmi", "labels.json", "truth.json"]);
    assert_ok(&out);
    assert_eq!(stdout(&out).trim(), "0.8661144842651309");
}

#[test]
fn ignored_sigma_warns_but_succeeds() {
    let dir = TempDir::new().unwrap();
    small_synth(dir.path());
    let out = distclust(
        dir.path(),
        &["cluster", "--groups", "groups.csv", "--algorithm", "kl", "--k", "2", "--sigma", "2"],
    );
    assert_ok(&out);
    assert!(stderr(&out).contains("warning: sigma ignored for kl"), "stderr: {}", stderr(&out));
    let labels: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(labels["k"], 2);
    assert_eq!(labels["labels"].as_array().unwrap().len(), 20);
}

#[test]
fn exit_codes_separate_usage_from_data_errors() {
    let dir = TempDir::new().unwrap();
    assert_eq!(distclust(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(distclust(dir.path(), &["cluster", "--algorithm", "kl", "--k", "2"]).status.code(), Some(1));
    assert_eq!(distclust(dir.path(), &["nmi", "a.json"]).status.code(), Some(1));

    small_synth(dir.path());
    let bad_k = distclust(dir.path(), &["cluster", "--groups", "groups.csv", "--algorithm", "kl", "--k", "0"]);
    assert_eq!(bad_k.status.code(), Some(1), "stderr: {}", stderr(&bad_k));

    let missing = distclust(dir.path(), &["nmi", "nope.json", "nope.json"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).starts_with("error: "));

    std::fs::write(dir.path().join("broken.csv"), "object_id,sample_index,x_0\nobj0,0,abc\n").unwrap();
    let broken = distclust(dir.path(), &["estimate", "broken.csv"]);
    assert_eq!(broken.status.code(), Some(2), "stderr: {}", stderr(&broken));
}

#[test]
fn estimate_distmat_cluster_round_trip() {
    let dir = TempDir::new().unwrap();
    small_synth(dir.path());
    assert_ok(&distclust(dir.path(), &["estimate", "groups.csv", "--out", "models.json"]));
    let models: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("models.json")).unwrap()).unwrap();
    assert_eq!(models.as_array().unwrap().len(), 20);

    for metric in ["wasserstein_sq", "bhattacharyya", "kl"] {
        assert_ok(&distclust(dir.path(), &["distmat", "models.json", "--metric", metric, "--out", "x.json"]));
    }
    assert_ok(&distclust(dir.path(), &["distmat", "models.json", "--metric", "bhattacharyya", "--out", "x.csv"]));
    let csv = std::fs::read_to_string(dir.path().join("x.csv")).unwrap();
    assert_eq!(csv.lines().count(), 20);

    let from_csv = distclust(
        dir.path(),
        &["cluster", "--distances", "x.csv", "--metric", "bhattacharyya", "--algorithm", "bhattacharyya_spectral", "--k", "2"],
    );
    assert_ok(&from_csv);
    let from_models = distclust(
        dir.path(),
        &["cluster", "--models", "models.json", "--algorithm", "bhattacharyya_spectral", "--k", "2"],
    );
    assert_ok(&from_models);
    assert_eq!(stdout(&from_csv), stdout(&from_models));

    // A KL matrix is asymmetric and cannot feed spectral clustering.
    assert_ok(&distclust(dir.path(), &["distmat", "models.json", "--metric", "kl", "--out", "kl.json"]));
    let asym = distclust(dir.path(), &["cluster", "--distances", "kl.json", "--algorithm", "kl", "--k", "2"]);
    assert_eq!(asym.status.code(), Some(1), "stderr: {}", stderr(&asym));
}

#[test]
fn bench_commands_write_reports() {
    let dir = TempDir::new().unwrap();
    let synth = distclust(
        dir.path(),
        &[
            "bench-synth", "--dims", "3", "--ks", "2", "--trials", "2", "--objects", "20", "--samples", "20",
            "--algorithms", "kl,kmeans_means", "--out", "synth",
        ],
    );
    assert_ok(&synth);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("synth/report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["cells"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("synth/synth_nmi_mean.csv").exists());
    assert!(dir.path().join("synth/synth_nmi_variance.csv").exists());

    assert_ok(&distclust(dir.path(), &["ohlc-fixture", "--tickers", "8", "--days", "40", "--out", "prices.csv"]));
    let stock = distclust(
        dir.path(),
        &[
            "bench-stock", "prices.csv", "--ks", "2", "--sigmas", "0,1", "--trials", "2", "--algorithms", "klpp",
            "--out", "stock",
        ],
    );
    assert_ok(&stock);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("stock/report.json")).unwrap()).unwrap();
    let cells = report["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 2);
    let clean = cells.iter().find(|c| c["noise_sigma"] == 0.0).unwrap();
    assert_eq!(clean["nmi_mean"], 1.0);
}
