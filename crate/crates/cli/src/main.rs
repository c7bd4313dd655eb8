//! `deepgreen`: data generation, training, evaluation, inference and the
//! ablation studies from one binary.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use deepgreen::config::{config_hash, hex, Config, THREADS_ENV};
use deepgreen::datagen::{
    assemble_dataset, enumerate_forcings, parse_families, read_dataset, write_dataset, AssemblyOptions, Grid,
    NewtonOptions, SystemId, SystemSpec, NEWTON_TOL,
};
use deepgreen::eval::experiments::{
    experiment_latent_variability, experiment_operator_init, experiment_resnet_ablation, write_ablation_report,
    write_init_report, write_latent_report,
};
use deepgreen::eval::report::{write_eval, FileHash};
use deepgreen::eval::{evaluate, stats_csv, Manifest};
use deepgreen::greens::{export_operator, Solver};
use deepgreen::model::{load_checkpoint, save_checkpoint};
use deepgreen::trainer::{lr_search_and_finalize, write_run_log, EpochRecord, TrainData, TrainOptions};

#[derive(Parser)]
#[command(name = "deepgreen", version, about = "Learned Green's operators for nonlinear boundary value problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every forcing of the chosen families and write a dataset.
    GenData {
        #[arg(long)]
        system: SystemId,
        #[arg(long)]
        dim: u8,
        /// Comma-separated: gaussian, cosine, cubic (or cubic-a, cubic-b).
        #[arg(long)]
        families: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Points per axis (default 128 in 1D, 64 in 2D).
        #[arg(long)]
        grid: Option<usize>,
        /// Newton tolerance on the max-norm residual.
        #[arg(long, default_value_t = NEWTON_TOL)]
        tol: f64,
    },
    /// Learning-rate search, selection and final training.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also keep every candidate's best checkpoint in this directory.
        #[arg(long)]
        candidates_dir: Option<PathBuf>,
        /// Print one line per epoch to stderr.
        #[arg(long)]
        verbose: bool,
    },
    /// Score the test and extrapolation sets.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict the solution for a forcing given as a one-column CSV.
    Solve {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        forcing: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write L and G as CSV, binary and SVG heatmaps.
    ExportGreens {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one of the ablation studies.
    Experiment {
        kind: ExperimentKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    Init,
    Latent,
    Resnet,
}

enum Failure {
    Usage(String),
    Runtime(deepgreen::Error),
}

impl From<deepgreen::Error> for Failure {
    fn from(e: deepgreen::Error) -> Self {
        Failure::Runtime(e)
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn threads_from_env() -> CliResult<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::Usage(format!("{THREADS_ENV}={v:?} is not a positive thread count"))),
        Err(_) => Ok(1),
    }
}

fn load_config(path: Option<&Path>) -> CliResult<Config> {
    let cfg = match path {
        Some(p) => {
            if !p.exists() {
                return Err(Failure::Runtime(deepgreen::Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "config file not found"),
                )));
            }
            Config::load(p).map_err(|e| Failure::Usage(e.to_string()))?
        }
        None => Config::default(),
    };
    cfg.with_env().map_err(|e| Failure::Usage(e.to_string()))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(deepgreen::Error::io(dir, e)))
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| Failure::Runtime(deepgreen::Error::io(path, e)))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::GenData { system, dim, families, out, seed, grid, tol } => {
            if dim != system.dim() {
                return Err(Failure::Usage(format!("system {} is {}D, not {dim}D", system.name(), system.dim())));
            }
            let families = parse_families(&families).map_err(|e| Failure::Usage(e.to_string()))?;
            if !(tol > 0.0) {
                return Err(Failure::Usage("--tol must be positive".into()));
            }
            let n = grid.unwrap_or(if dim == 1 { Grid::DEFAULT_1D } else { Grid::DEFAULT_2D });
            let grid = Grid::new(dim, n).map_err(|e| Failure::Usage(e.to_string()))?;
            let specs = enumerate_forcings(dim, &families).map_err(|e| Failure::Usage(e.to_string()))?;
            let opts = AssemblyOptions { newton: NewtonOptions { tol, ..NewtonOptions::default() }, threads: threads_from_env()? };
            let asm = assemble_dataset(&SystemSpec::from_id(system), &grid, &specs, seed, opts)?;
            write_dataset(&asm.dataset, &out)?;
            let c = asm.dataset.counts();
            let extra = if c.extrapolation > 0 { format!(" extrapolation={}", c.extrapolation) } else { String::new() };
            println!("train={} val={} test={}{extra} discarded={}", c.train, c.validation, c.test, asm.discarded);
            Ok(())
        }
        Command::Train { data, config, out, candidates_dir, verbose } => {
            let cfg = load_config(config.as_deref())?;
            let ds = read_dataset(&data)?;
            let arch = cfg.model.architecture(&ds.grid);
            let td = TrainData::from_dataset(&ds, &cfg.train)?;
            let progress = |id: usize, e: &EpochRecord| {
                eprintln!(
                    "candidate {id} epoch {} {} train {:.4e} val {:.4e}",
                    e.epoch, e.phase, e.train.total, e.val.total
                );
            };
            let opts = TrainOptions {
                checkpoint_dir: candidates_dir.clone(),
                progress: if verbose { Some(&progress) } else { None },
            };
            let outcome = lr_search_and_finalize(&cfg.train, &arch, &td, &opts)?;
            save_checkpoint(&outcome.best, &out)?;
            let mut log = Vec::new();
            write_run_log(&outcome.records, &mut log).map_err(|e| Failure::Runtime(deepgreen::Error::io(&out, e)))?;
            write(&sibling(&out, ".runlog.tsv"), &log)?;
            let mut m = Manifest::new("train");
            m.seeds = outcome.records.iter().map(|r| r.seed).collect();
            m.seeds.insert(0, cfg.train.seed);
            m.thread_count = cfg.train.thread_count;
            m.config = cfg.to_toml();
            m.inputs.push(FileHash::of(&data)?);
            m.outputs.push(FileHash::of(&out)?);
            m.outputs.push(FileHash::of(sibling(&out, ".runlog.tsv"))?);
            m.notes.push(format!("config_hash={}", hex(&config_hash(&cfg.train, &arch))));
            for r in &outcome.records {
                if let Some(a) = &r.aborted {
                    m.notes.push(a.clone());
                }
            }
            let text = m.render()?;
            write(&sibling(&out, ".manifest.toml"), text.as_bytes())?;
            let w = &outcome.records[outcome.winner];
            println!(
                "winner=candidate {} lr={:e} best_val={:e} best_epoch={}",
                w.candidate, w.lr, w.best_val, w.best_epoch
            );
            Ok(())
        }
        Command::Eval { ckpt, data, out } => {
            let ck = load_checkpoint(&ckpt)?;
            let ds = read_dataset(&data)?;
            if ds.grid.len() != ck.model.input_len() {
                return Err(Failure::Runtime(deepgreen::Error::Shape(format!(
                    "dataset rows have length {}, model expects {}",
                    ds.grid.len(),
                    ck.model.input_len()
                ))));
            }
            let reports = evaluate(&ck.model, &ds)?;
            create_dir(&out)?;
            write_eval(&ck.model, &ds, &reports, &out)?;
            let mut m = Manifest::new("eval");
            m.seeds.push(ck.meta.seed);
            m.inputs = vec![FileHash::of(&ckpt)?, FileHash::of(&data)?];
            m.write(&out)?;
            print!("{}", stats_csv(&reports));
            Ok(())
        }
        Command::Solve { ckpt, forcing, out } => {
            let ck = load_checkpoint(&ckpt)?;
            let text = fs::read_to_string(&forcing).map_err(|e| deepgreen::Error::io(&forcing, e))?;
            let f = parse_column(&text).map_err(|e| {
                Failure::Runtime(deepgreen::Error::InvalidInput(format!("{}: {e}", forcing.display())))
            })?;
            let u = Solver::new(&ck.model)?.solve(&f)?;
            let mut s = String::new();
            for v in u {
                s.push_str(&format!("{v:.16e}\n"));
            }
            write(&out, s.as_bytes())
        }
        Command::ExportGreens { ckpt, out } => {
            let ck = load_checkpoint(&ckpt)?;
            let s = export_operator(&ck.model, &out)?;
            let mut m = Manifest::new("export-greens");
            m.seeds.push(ck.meta.seed);
            m.inputs.push(FileHash::of(&ckpt)?);
            m.notes.push(format!("dominance_ratio_L={:e}", s.dominance_l));
            m.notes.push(format!("max_abs_LG_minus_I={:e}", s.inverse_residual));
            m.write(&out)?;
            println!("latent={} dominance_ratio={:e} max|LG-I|={:e}", s.latent, s.dominance_l, s.inverse_residual);
            Ok(())
        }
        Command::Experiment { kind, config, data, out } => {
            let cfg = load_config(config.as_deref())?;
            let ds = read_dataset(&data)?;
            let arch = cfg.model.architecture(&ds.grid);
            let td = TrainData::from_dataset(&ds, &cfg.train)?;
            create_dir(&out)?;
            let mut m = Manifest::new(match kind {
                ExperimentKind::Init => "experiment init",
                ExperimentKind::Latent => "experiment latent",
                ExperimentKind::Resnet => "experiment resnet",
            });
            m.thread_count = cfg.train.thread_count;
            m.config = cfg.to_toml();
            m.inputs.push(FileHash::of(&data)?);
            match kind {
                ExperimentKind::Init => {
                    let r = experiment_operator_init(&cfg, &arch, &td)?;
                    write_init_report(&r, &out)?;
                    m.seeds.push(cfg.train.seed);
                    for a in &r.arms {
                        let fr = a.final_r().map(|v| format!("{v:e}")).unwrap_or_else(|| "failed".into());
                        println!("{}: initial_r={:e} final_r={fr}", a.init.name(), a.initial_r);
                    }
                }
                ExperimentKind::Latent => {
                    let seeds: Vec<u64> =
                        (0..cfg.experiment.runs as u64).map(|k| cfg.train.seed.wrapping_add(k)).collect();
                    let r = experiment_latent_variability(&cfg, &arch, &td, &seeds)?;
                    write_latent_report(&r, &out)?;
                    m.seeds = seeds;
                    for (s, e) in &r.failures {
                        m.notes.push(format!("seed {s} failed: {e}"));
                    }
                    println!("runs={} failed={}", r.seeds.len(), r.failures.len());
                }
                ExperimentKind::Resnet => {
                    let r = experiment_resnet_ablation(&cfg, &arch, &td, cfg.experiment.per_arm)?;
                    write_ablation_report(&r, &out)?;
                    m.seeds = r.arms[0].seeds.clone();
                    for a in &r.arms {
                        println!("{}: mean={:e} median={:e}", a.name(), a.mean(), a.median());
                    }
                }
            }
            m.write(&out)?;
            Ok(())
        }
    }
}

/// One value per line; blank lines are skipped.
fn parse_column(text: &str) -> Result<Vec<f64>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| l.trim().parse::<f64>().map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}
