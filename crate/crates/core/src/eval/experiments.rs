//! The three ablation studies: operator initialization, run-to-run latent
//! variability, and skip connections on or off.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::report::write_file;
use super::stats::BoxStats;
use super::svg;
use crate::autodiff::Tensor;
use crate::config::{Config, TrainConfig};
use crate::greens::dominance_ratio;
use crate::model::{Architecture, Model, OperatorInit};
use crate::trainer::{Candidate, TrainData, TrainOptions};
use crate::{Error, Result};

/// Single-candidate schedule used by every study run.
pub fn desk_config(cfg: &Config) -> TrainConfig {
    TrainConfig {
        epochs_ae_only: cfg.experiment.epochs_ae_only,
        epochs_full_initial: cfg.experiment.epochs_full,
        epochs_full_final: 0,
        n_candidates: 1,
        lr: Some(cfg.experiment.lr),
        ..cfg.train.clone()
    }
}

/// One line describing the schedule, repeated at the top of report tables.
pub fn schedule_header(tc: &TrainConfig) -> String {
    format!(
        "# phase1_epochs={} phase2_epochs={} candidates=1 lr={:e} batch={} seed={}",
        tc.epochs_ae_only,
        tc.epochs_full_initial,
        tc.lr.unwrap_or(f64::NAN),
        tc.batch_size,
        tc.seed
    )
}

/// Trains one model on the desk schedule; the best snapshot is returned.
pub fn train_once(tc: &TrainConfig, arch: &Architecture, data: &TrainData, seed: u64) -> Result<Candidate> {
    let lr = tc.lr.unwrap_or(tc.lr_low);
    let mut c = Candidate::new(tc, arch, 0, lr, seed)?;
    c.train_until((tc.epochs_ae_only + tc.epochs_full_initial) as u64, tc, data, &TrainOptions::default())?;
    Ok(c)
}

/// Runs `jobs` over up to `threads` workers; results keep job order.
fn run_jobs<J: Sync, T: Send>(jobs: &[J], threads: usize, f: impl Fn(&J) -> T + Sync) -> Vec<T> {
    if threads <= 1 || jobs.len() <= 1 {
        return jobs.iter().map(f).collect();
    }
    let chunk = jobs.len().div_ceil(threads);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> =
            jobs.chunks(chunk).map(|part| s.spawn(move || part.iter().map(f).collect::<Vec<T>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("experiment worker panicked")).collect()
    })
}

#[derive(Debug, Clone)]
pub struct InitArm {
    pub init: OperatorInit,
    pub initial: Tensor,
    pub initial_r: f64,
    pub result: std::result::Result<(Tensor, f64, f64), String>,
}

impl InitArm {
    pub fn final_r(&self) -> Option<f64> {
        self.result.as_ref().ok().map(|r| r.1)
    }
}

#[derive(Debug, Clone)]
pub struct InitReport {
    pub schedule: TrainConfig,
    pub arms: Vec<InitArm>,
}

pub fn experiment_operator_init(cfg: &Config, arch: &Architecture, data: &TrainData) -> Result<InitReport> {
    let tc = desk_config(cfg);
    let inits = [OperatorInit::Identity, OperatorInit::HeNormal, OperatorInit::Toeplitz];
    let arms = run_jobs(&inits, tc.thread_count, |&init| -> Result<InitArm> {
        let mut a = arch.clone();
        a.operator_init = init;
        let initial = Model::new(a.clone(), tc.seed)?.operator();
        let m = a.latent;
        let initial_r = dominance_ratio(initial.data(), m);
        let result = train_once(&tc, &a, data, tc.seed)
            .map(|c| {
                let l = c.best.model.operator();
                let r = dominance_ratio(l.data(), m);
                (l, r, c.record.best_val)
            })
            .map_err(|e| e.to_string());
        Ok(InitArm { init, initial, initial_r, result })
    });
    Ok(InitReport { schedule: tc, arms: arms.into_iter().collect::<Result<_>>()? })
}

pub fn write_init_report(r: &InitReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut s = schedule_header(&r.schedule);
    s.push_str("\narm,initial_r,final_r,best_val,status\n");
    for a in &r.arms {
        let m = a.initial.shape()[0];
        let name = a.init.name();
        write_file(dir, &format!("L_initial_{name}.svg"), svg::heatmap(&format!("initial L ({name})"), a.initial.data(), m, m).as_bytes())?;
        match &a.result {
            Ok((l, fr, val)) => {
                let _ = writeln!(s, "{name},{:e},{fr:e},{val:e},ok", a.initial_r);
                write_file(dir, &format!("L_final_{name}.svg"), svg::heatmap(&format!("trained L ({name})"), l.data(), m, m).as_bytes())?;
                write_file(dir, &format!("L_final_{name}.csv"), crate::greens::matrix_csv(l.data(), m).as_bytes())?;
            }
            Err(e) => {
                let _ = writeln!(s, "{name},{:e},,,failed: {}", a.initial_r, e.replace(',', ";"));
            }
        }
    }
    write_file(dir, "dominance.csv", s.as_bytes())
}

#[derive(Debug, Clone)]
pub struct LatentReport {
    pub schedule: TrainConfig,
    pub seeds: Vec<u64>,
    /// Latent `v` and `f` of the probe sample per successful run.
    pub v: Vec<Option<Vec<f64>>>,
    pub f: Vec<Option<Vec<f64>>>,
    pub failures: Vec<(u64, String)>,
}

/// Pairwise Euclidean distances between runs; failed runs give NaN rows.
pub fn pairwise_distances(rows: &[Option<Vec<f64>>]) -> Vec<f64> {
    let n = rows.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = match (&rows[i], &rows[j]) {
                (Some(a), Some(b)) => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
                _ => f64::NAN,
            };
        }
    }
    d
}

/// Per-coordinate `(mean, min, max)` across the successful runs.
pub fn coordinate_spread(rows: &[Option<Vec<f64>>]) -> Vec<(f64, f64, f64)> {
    let ok: Vec<&Vec<f64>> = rows.iter().flatten().collect();
    let Some(first) = ok.first() else { return Vec::new() };
    (0..first.len())
        .map(|k| {
            let col: Vec<f64> = ok.iter().map(|r| r[k]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let min = col.iter().copied().fold(f64::INFINITY, f64::min);
            let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (mean, min, max)
        })
        .collect()
}

pub fn experiment_latent_variability(
    cfg: &Config,
    arch: &Architecture,
    data: &TrainData,
    seeds: &[u64],
) -> Result<LatentReport> {
    if seeds.len() < 2 {
        return Err(Error::InvalidInput("latent variability needs at least two runs".into()));
    }
    let probe = cfg.experiment.probe_sample;
    if probe >= data.train.len() {
        return Err(Error::InvalidInput(format!("probe sample {probe} is outside the training split")));
    }
    let probe_batch = data.train.batch(&[probe])?;
    let tc = desk_config(cfg);
    let runs = run_jobs(seeds, tc.thread_count, |&seed| -> std::result::Result<(Vec<f64>, Vec<f64>), String> {
        let c = train_once(&tc, arch, data, seed).map_err(|e| e.to_string())?;
        let v = c.best.model.encode_u_batch(&probe_batch.u).map_err(|e| e.to_string())?;
        let f = c.best.model.encode_f_batch(&probe_batch.f).map_err(|e| e.to_string())?;
        Ok((v.into_data(), f.into_data()))
    });
    let mut rep = LatentReport { schedule: tc, seeds: seeds.to_vec(), v: Vec::new(), f: Vec::new(), failures: Vec::new() };
    for (seed, r) in seeds.iter().zip(runs) {
        match r {
            Ok((v, f)) => {
                rep.v.push(Some(v));
                rep.f.push(Some(f));
            }
            Err(e) => {
                rep.v.push(None);
                rep.f.push(None);
                rep.failures.push((*seed, e));
            }
        }
    }
    Ok(rep)
}

fn square_csv(d: &[f64], n: usize) -> String {
    let mut s = String::new();
    for row in d.chunks(n) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn write_latent_report(r: &LatentReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = schedule_header(&r.schedule);
    let n = r.seeds.len();
    for (name, rows) in [("v", &r.v), ("f", &r.f)] {
        let mut s = format!("{header}\nrun,seed,coordinates...\n");
        for (k, (seed, row)) in r.seeds.iter().zip(rows.iter()).enumerate() {
            let cells = row.as_ref().map(|v| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(","));
            let _ = writeln!(s, "{k},{seed},{}", cells.unwrap_or_else(|| "failed".into()));
        }
        write_file(dir, &format!("latent_{name}.csv"), s.as_bytes())?;
        let mut s = format!("{header}\ncoordinate,mean,min,max\n");
        for (k, (mean, min, max)) in coordinate_spread(rows).iter().enumerate() {
            let _ = writeln!(s, "{k},{mean:e},{min:e},{max:e}");
        }
        write_file(dir, &format!("spread_{name}.csv"), s.as_bytes())?;
        let d = pairwise_distances(rows);
        write_file(dir, &format!("distances_{name}.csv"), square_csv(&d, n).as_bytes())?;
        let title = format!("pairwise distance between runs, latent {name}");
        write_file(dir, &format!("distances_{name}.svg"), svg::heatmap(&title, &d, n, n).as_bytes())?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct AblationArm {
    pub resnet: bool,
    pub seeds: Vec<u64>,
    /// Best validation total per run, or the failure message.
    pub runs: Vec<std::result::Result<f64, String>>,
}

impl AblationArm {
    pub fn values(&self) -> Vec<f64> {
        self.runs.iter().filter_map(|r| r.as_ref().ok().copied()).collect()
    }

    pub fn mean(&self) -> f64 {
        let v = self.values();
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }

    pub fn median(&self) -> f64 {
        BoxStats::of(&self.values()).map(|b| b.median).unwrap_or(f64::NAN)
    }

    pub fn name(&self) -> &'static str {
        if self.resnet {
            "resnet"
        } else {
            "plain"
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub schedule: TrainConfig,
    pub arms: Vec<AblationArm>,
}

/// `per_arm` models with skips and `per_arm` without, seeds
/// `seed, seed+1, …` shared between arms.
pub fn experiment_resnet_ablation(cfg: &Config, arch: &Architecture, data: &TrainData, per_arm: usize) -> Result<AblationReport> {
    if per_arm == 0 {
        return Err(Error::InvalidInput("need at least one model per arm".into()));
    }
    let tc = desk_config(cfg);
    let seeds: Vec<u64> = (0..per_arm as u64).map(|k| tc.seed.wrapping_add(k)).collect();
    let jobs: Vec<(bool, u64)> = [true, false].iter().flat_map(|&r| seeds.iter().map(move |&s| (r, s))).collect();
    let results = run_jobs(&jobs, tc.thread_count, |&(resnet, seed)| {
        let mut a = arch.clone();
        a.resnet = resnet;
        if resnet && a.kind == crate::model::ArchKind::Dense {
            a.width = a.grid;
        }
        train_once(&tc, &a, data, seed).map(|c| c.record.best_val).map_err(|e| e.to_string())
    });
    let mut it = results.into_iter();
    let arms = [true, false]
        .iter()
        .map(|&resnet| AblationArm { resnet, seeds: seeds.clone(), runs: it.by_ref().take(per_arm).collect() })
        .collect();
    Ok(AblationReport { schedule: tc, arms })
}

pub fn write_ablation_report(r: &AblationReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = schedule_header(&r.schedule);
    let mut runs = format!("{header}\narm,seed,best_val\n");
    let mut summary = format!("{header}\narm,mean,median\n");
    let mut series = Vec::new();
    for a in &r.arms {
        for (seed, v) in a.seeds.iter().zip(&a.runs) {
            match v {
                Ok(v) => {
                    let _ = writeln!(runs, "{},{seed},{v:e}", a.name());
                }
                Err(e) => {
                    let _ = writeln!(runs, "{},{seed},failed: {}", a.name(), e.replace(',', ";"));
                }
            }
        }
        let _ = writeln!(summary, "{},{:e},{:e}", a.name(), a.mean(), a.median());
        if let Ok(b) = BoxStats::of(&a.values()) {
            series.push((a.name().to_string(), b));
        }
    }
    write_file(dir, "runs.csv", runs.as_bytes())?;
    write_file(dir, "summary.csv", summary.as_bytes())?;
    if !series.is_empty() {
        write_file(dir, "validation.svg", svg::box_plot("best validation loss per arm", &series).as_bytes())?;
    }
    Ok(())
}
