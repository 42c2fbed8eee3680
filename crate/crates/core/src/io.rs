//! On-disk formats shared by the CLI and the benchmark drivers.
//!
//! * `groups.csv`: header `object_id,sample_index,x_0,…,x_{d−1}`, one row per sample
//! * models JSON: `[{"mean": […], "cov": [[…]]}, …]`
//! * labels JSON: `{"k": …, "labels": […]}`
//! * `truth.json`: labels plus the generating parameters and seed

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::assignment::ClusterAssignment;
use crate::error::{Error, Result};
use crate::gaussian::{GaussianModel, SampleGroup};
use crate::synth::{SynthParams, SyntheticBenchmark};

pub fn write_groups_csv<W: Write>(groups: &[SampleGroup], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let d = groups.first().map_or(0, SampleGroup::dim);
    let mut header = vec!["object_id".to_string(), "sample_index".to_string()];
    header.extend((0..d).map(|i| format!("x_{i}")));
    w.write_record(&header)?;
    for g in groups {
        for (s, x) in g.samples().iter().enumerate() {
            let mut row = vec![g.id.clone(), s.to_string()];
            // `{}` prints the shortest representation that round-trips.
            row.extend(x.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io("<groups.csv>", e))?;
    Ok(())
}

/// Groups appear in order of first occurrence; samples within a group are
/// ordered by `sample_index`.
pub fn read_groups_csv<R: Read>(reader: R) -> Result<Vec<SampleGroup>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "object_id" || &headers[1] != "sample_index" {
        return Err(Error::Schema(
            "expected header object_id,sample_index,x_0,…".into(),
        ));
    }
    for (i, h) in headers.iter().skip(2).enumerate() {
        if h != format!("x_{i}") {
            return Err(Error::Schema(format!("column {} should be x_{i}, found {h:?}", i + 2)));
        }
    }
    let d = headers.len() - 2;
    let mut order: Vec<String> = Vec::new();
    let mut rows: std::collections::HashMap<String, Vec<(u64, Vec<f64>)>> = Default::default();
    for result in rdr.records() {
        let record = result?;
        let line = record.position().map_or(0, |p| p.line());
        let row_err = |message: String| Error::Row { line, message };
        if record.len() != d + 2 {
            return Err(row_err(format!("expected {} fields, found {}", d + 2, record.len())));
        }
        let id = record[0].to_string();
        let index: u64 = record[1]
            .trim()
            .parse()
            .map_err(|e| row_err(format!("bad sample_index {:?}: {e}", &record[1])))?;
        let x = record
            .iter()
            .skip(2)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| row_err(format!("bad value {v:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            Vec::new()
        });
        entry.push((index, x));
    }
    order
        .into_iter()
        .map(|id| {
            let mut samples = rows.remove(&id).expect("recorded id");
            samples.sort_by_key(|(i, _)| *i);
            SampleGroup::new(id, samples.into_iter().map(|(_, x)| x).collect())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub k: usize,
    pub labels: Vec<usize>,
    pub params: SynthParams,
    pub seed: u64,
    pub generators: Vec<GaussianModel>,
}

impl TruthFile {
    pub fn assignment(&self) -> Result<ClusterAssignment> {
        ClusterAssignment::new(self.labels.clone(), self.k)
    }
}

impl From<&SyntheticBenchmark> for TruthFile {
    fn from(b: &SyntheticBenchmark) -> Self {
        TruthFile {
            k: b.truth.k(),
            labels: b.truth.labels().to_vec(),
            params: b.params.clone(),
            seed: b.seed,
            generators: b.generators.clone(),
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_groups(path: impl AsRef<Path>) -> Result<Vec<SampleGroup>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_groups_csv(BufReader::new(file))
}

pub fn write_groups(path: impl AsRef<Path>, groups: &[SampleGroup]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_groups_csv(groups, BufWriter::new(file))
}

/// Writes `groups.csv` and `truth.json` into `dir`, creating it if needed.
pub fn write_benchmark_dir(dir: impl AsRef<Path>, b: &SyntheticBenchmark) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_groups(dir.join("groups.csv"), &b.groups)?;
    write_json(dir.join("truth.json"), &TruthFile::from(b))
}
