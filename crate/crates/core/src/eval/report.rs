//! Per-sample scoring of a trained model and the files an evaluation writes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::stats::{exhibit_score, select_exhibits, summarize, BoxStats, Exhibits};
use super::svg;
use crate::datagen::{Dataset, Split};
use crate::greens::Solver;
use crate::model::{per_sample, Model, SampleLosses};
use crate::trainer::SplitRows;
use crate::{Error, Result};

const EVAL_BATCH: usize = 64;

/// ℒ1, ℒ2, ℒ3, ℒ5, ℒ6 for every row.
pub fn per_sample_losses(model: &Model, rows: &SplitRows) -> Result<Vec<SampleLosses>> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    let mut out = Vec::with_capacity(rows.len());
    for b in rows.batches(EVAL_BATCH)? {
        out.extend(per_sample(model, &b)?);
    }
    Ok(out)
}

/// Scores and summary of one evaluated set.
#[derive(Debug, Clone)]
pub struct SetReport {
    pub name: &'static str,
    /// Positions of the rows in the dataset file.
    pub indices: Vec<usize>,
    pub table: Vec<SampleLosses>,
    pub stats: [BoxStats; 5],
    pub exhibits: Exhibits,
}

impl SetReport {
    pub fn median(&self, term: usize) -> f64 {
        self.stats[term].median
    }

    /// Median of the per-sample sum of the five scored terms.
    pub fn median_total(&self) -> f64 {
        let sums: Vec<f64> = self.table.iter().map(|s| s.sum()).collect();
        BoxStats::of(&sums).map(|b| b.median).unwrap_or(f64::NAN)
    }
}

pub fn evaluate_set(model: &Model, ds: &Dataset, split: Split) -> Result<SetReport> {
    let rows = SplitRows::from_dataset(ds, split);
    let table = per_sample_losses(model, &rows)?;
    Ok(SetReport {
        name: split.name(),
        indices: ds.indices(split),
        stats: summarize(&table)?,
        exhibits: select_exhibits(&table)?,
        table,
    })
}

/// The withheld test set and, when present, the extrapolation set.
pub fn evaluate(model: &Model, ds: &Dataset) -> Result<Vec<SetReport>> {
    let mut out = Vec::new();
    for split in [Split::Test, Split::Extrapolation] {
        if !ds.indices(split).is_empty() {
            out.push(evaluate_set(model, ds, split)?);
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset("dataset has neither test nor extrapolation samples".into()));
    }
    Ok(out)
}

pub fn stats_csv(reports: &[SetReport]) -> String {
    let mut s = String::from("set,loss,min,q1,median,q3,max\n");
    for r in reports {
        for (name, b) in SampleLosses::NAMES.iter().zip(&r.stats) {
            let _ = writeln!(s, "{},{name},{:e},{:e},{:e},{:e},{:e}", r.name, b.min, b.q1, b.median, b.q3, b.max);
        }
    }
    s
}

pub fn samples_csv(r: &SetReport) -> String {
    let mut s = String::from("sample,L1,L2,L3,L5,L6,score\n");
    for (i, t) in r.indices.iter().zip(&r.table) {
        let _ = writeln!(s, "{i},{:e},{:e},{:e},{:e},{:e},{:e}", t.l1, t.l2, t.l3, t.l5, t.l6, exhibit_score(t));
    }
    s
}

fn exhibit_csv(model: &Model, ds: &Dataset, sample: usize) -> Result<String> {
    let solver = Solver::new(model)?;
    let p = &ds.samples[sample];
    let u_pred = solver.solve(&p.f)?;
    let f_pred = solver.predict_forcing(&p.u)?;
    let mut s = String::from("node,u,u_pred,F,F_pred\n");
    for i in 0..p.u.len() {
        let _ = writeln!(s, "{i},{:e},{:e},{:e},{:e}", p.u[i], u_pred[i], p.f[i], f_pred[i]);
    }
    Ok(s)
}

/// `sha256` of `"blob <len>\0" ‖ bytes`, hex encoded.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()));
    h.update(bytes);
    crate::config::hex(&h.finalize())
}

#[derive(Debug, Clone, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

impl FileHash {
    pub fn of(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self { path: path.display().to_string(), sha256: content_hash(&bytes) })
    }
}

/// Provenance record written next to every output.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seeds: Vec<u64>,
    pub thread_count: usize,
    pub notes: Vec<String>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    /// Configuration in effect, as TOML.
    pub config: String,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seeds: Vec::new(),
            thread_count: 1,
            notes: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            config: String::new(),
        }
    }

    pub fn render(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    /// Hashes every regular file already in `dir` as outputs, then writes
    /// `manifest.toml` there.
    pub fn write(mut self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let mut names: Vec<_> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n != "manifest.toml")
            .collect();
        names.sort();
        self.outputs.clear();
        for n in names {
            let bytes = fs::read(dir.join(&n)).map_err(|e| Error::io(dir.join(&n), e))?;
            self.outputs.push(FileHash { path: n, sha256: content_hash(&bytes) });
        }
        let text = self.render()?;
        let p = dir.join("manifest.toml");
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }
}

pub(crate) fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, contents).map_err(|e| Error::io(&p, e))
}

/// Writes per-sample tables, the box statistics, box plots and exhibit
/// curves for each set into `dir`.
pub fn write_eval(model: &Model, ds: &Dataset, reports: &[SetReport], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(dir, "stats.csv", stats_csv(reports).as_bytes())?;
    let mut ex = String::from("set,kind,sample,score\n");
    for r in reports {
        write_file(dir, &format!("samples_{}.csv", r.name), samples_csv(r).as_bytes())?;
        let series: Vec<(String, BoxStats)> =
            SampleLosses::NAMES.iter().map(|n| n.to_string()).zip(r.stats.iter().copied()).collect();
        let plot = svg::box_plot(&format!("per-sample losses, {} set", r.name), &series);
        write_file(dir, &format!("boxplot_{}.svg", r.name), plot.as_bytes())?;
        for (kind, pos) in [("best", r.exhibits.best), ("mean", r.exhibits.mean), ("worst", r.exhibits.worst)] {
            let sample = r.indices[pos];
            let _ = writeln!(ex, "{},{kind},{sample},{:e}", r.name, exhibit_score(&r.table[pos]));
            let curve = exhibit_csv(model, ds, sample)?;
            write_file(dir, &format!("exhibit_{}_{kind}.csv", r.name), curve.as_bytes())?;
        }
    }
    write_file(dir, "exhibits.csv", ex.as_bytes())
}
