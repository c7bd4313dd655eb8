//! Two-phase training with checkpoint-best selection and the random
//! learning-rate search over candidates.

use std::io::Write;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AdamConfig, Tensor};
use crate::config::{config_hash, TrainConfig};
use crate::datagen::{Dataset, Split};
use crate::model::{
    loss_and_grads, losses, save_checkpoint, Architecture, Batch, Checkpoint, CheckpointMeta, LossBreakdown, Model,
    Phase,
};
use crate::{Error, Result};

/// Batch size for validation passes.
pub const VAL_BATCH: usize = 64;

/// Rows of one split as flat `u`/`F` vectors.
#[derive(Debug, Clone)]
pub struct SplitRows {
    pub u: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
}

impl SplitRows {
    pub fn from_dataset(ds: &Dataset, split: Split) -> Self {
        let samples = ds.split(split);
        Self {
            u: samples.iter().map(|s| s.u.clone()).collect(),
            f: samples.iter().map(|s| s.f.clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Batch of the given rows, in order.
    pub fn batch(&self, idx: &[usize]) -> Result<Batch> {
        let width = self.u.first().map(|r| r.len()).unwrap_or(0);
        let mut u = Vec::with_capacity(idx.len() * width);
        let mut f = Vec::with_capacity(idx.len() * width);
        for &i in idx {
            u.extend_from_slice(&self.u[i]);
            f.extend_from_slice(&self.f[i]);
        }
        Batch::new(Tensor::new(&[idx.len(), width], u)?, Tensor::new(&[idx.len(), width], f)?)
    }

    /// Consecutive batches of at most `size` rows; the last one may be short.
    pub fn batches(&self, size: usize) -> Result<Vec<Batch>> {
        let idx: Vec<usize> = (0..self.len()).collect();
        idx.chunks(size).map(|c| self.batch(c)).collect()
    }

    fn keep(&mut self, n: usize, seed: u64) {
        if self.len() <= n {
            return;
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(n);
        idx.sort_unstable();
        self.u = idx.iter().map(|&i| self.u[i].clone()).collect();
        self.f = idx.iter().map(|&i| self.f[i].clone()).collect();
    }
}

/// Training and validation data ready for minibatching.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub train: SplitRows,
    pub val: SplitRows,
    val_batches: Vec<Batch>,
}

impl TrainData {
    pub fn new(train: SplitRows, val: SplitRows) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyDataset("no training samples".into()));
        }
        if val.is_empty() {
            return Err(Error::EmptyDataset("no validation samples".into()));
        }
        let val_batches = val.batches(VAL_BATCH)?;
        Ok(Self { train, val, val_batches })
    }

    /// Train and validation splits, each subsampled per the config.
    pub fn from_dataset(ds: &Dataset, cfg: &TrainConfig) -> Result<Self> {
        let mut train = SplitRows::from_dataset(ds, Split::Train);
        let mut val = SplitRows::from_dataset(ds, Split::Validation);
        if let Some(n) = cfg.train_subsample {
            train.keep(n, cfg.seed);
        }
        if let Some(n) = cfg.val_subsample {
            val.keep(n, cfg.seed ^ 0x5a5a_5a5a);
        }
        Self::new(train, val)
    }

    /// Validation losses with all six terms, averaged over samples.
    pub fn validate(&self, model: &Model, l2: f64) -> Result<LossBreakdown> {
        mean_losses(model, &self.val_batches, l2)
    }
}

/// Sample-weighted mean of full-phase losses over batches.
pub fn mean_losses(model: &Model, batches: &[Batch], l2: f64) -> Result<LossBreakdown> {
    let mut acc = LossBreakdown::zero(Phase::Full);
    let mut seen = 0.0;
    for b in batches {
        let l = losses(model, b, Phase::Full, l2)?;
        acc.accumulate(&l, b.len() as f64, seen);
        seen += b.len() as f64;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based global epoch.
    pub epoch: u64,
    pub phase: Phase,
    pub train: LossBreakdown,
    pub val: LossBreakdown,
    /// Steps skipped because `L` could not be factored.
    pub rejected_steps: usize,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub candidate: usize,
    pub lr: f64,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub best_val: f64,
    pub best_epoch: u64,
    pub checkpoint: Option<PathBuf>,
    /// Set when the candidate was abandoned.
    pub aborted: Option<String>,
}

/// Optional side outputs of a training run.
#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Where each candidate's best checkpoint is written.
    pub checkpoint_dir: Option<PathBuf>,
    /// Called after every epoch.
    pub progress: Option<&'a (dyn Fn(usize, &EpochRecord) + Sync)>,
}

/// One model under training together with its best snapshot.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub id: usize,
    pub lr: f64,
    pub seed: u64,
    pub model: Model,
    /// Epochs completed so far.
    pub epoch: u64,
    pub best: Checkpoint,
    pub record: RunRecord,
    hash: [u8; 32],
}

fn phase_for(epoch: u64, cfg: &TrainConfig) -> Phase {
    if epoch < cfg.epochs_ae_only as u64 {
        Phase::AeOnly
    } else {
        Phase::Full
    }
}

fn epoch_rng(seed: u64, epoch: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

impl Candidate {
    pub fn new(cfg: &TrainConfig, arch: &Architecture, id: usize, lr: f64, seed: u64) -> Result<Self> {
        let model = Model::new(arch.clone(), seed)?;
        let hash = config_hash(cfg, arch);
        let mut meta = CheckpointMeta::untrained(seed);
        meta.lr = lr;
        meta.config_hash = hash;
        let best = Checkpoint { model: model.clone(), meta };
        let record = RunRecord {
            candidate: id,
            lr,
            seed,
            epochs: Vec::new(),
            best_val: f64::INFINITY,
            best_epoch: 0,
            checkpoint: None,
            aborted: None,
        };
        Ok(Self { id, lr, seed, model, epoch: 0, best, record, hash })
    }

    /// Picks up from a saved checkpoint, which becomes the best snapshot.
    pub fn resume(cfg: &TrainConfig, ck: Checkpoint, id: usize) -> Self {
        let hash = config_hash(cfg, &ck.model.arch);
        let record = RunRecord {
            candidate: id,
            lr: ck.meta.lr,
            seed: ck.meta.seed,
            epochs: Vec::new(),
            best_val: ck.meta.best_val,
            best_epoch: ck.meta.epoch,
            checkpoint: None,
            aborted: None,
        };
        Self {
            id,
            lr: ck.meta.lr,
            seed: ck.meta.seed,
            model: ck.model.clone(),
            epoch: ck.meta.epoch,
            best: ck,
            record,
            hash,
        }
    }

    /// Snapshot of the live state, usable for resuming.
    pub fn snapshot(&self, cfg: &TrainConfig) -> Checkpoint {
        let meta = CheckpointMeta {
            seed: self.seed,
            epoch: self.epoch,
            best_val: self.record.best_val,
            phase: phase_for(self.epoch.saturating_sub(1), cfg),
            lr: self.lr,
            config_hash: self.hash,
        };
        Checkpoint { model: self.model.clone(), meta }
    }

    fn run_epoch(&mut self, cfg: &TrainConfig, data: &TrainData) -> Result<EpochRecord> {
        let phase = phase_for(self.epoch, cfg);
        let adam = AdamConfig { l2: cfg.l2, ..AdamConfig::default() };
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut epoch_rng(self.seed, self.epoch));
        let mut acc = LossBreakdown::zero(phase);
        let mut seen = 0.0;
        let mut rejected = 0;
        let mut steps = 0;
        for idx in order.chunks(cfg.batch_size) {
            let batch = data.train.batch(idx)?;
            steps += 1;
            match loss_and_grads(&self.model, &batch, phase, cfg.l2) {
                Ok((l, grads)) => {
                    self.model.store.adam_step(&grads, self.lr, &adam)?;
                    acc.accumulate(&l, idx.len() as f64, seen);
                    seen += idx.len() as f64;
                }
                Err(Error::Singular { .. }) => rejected += 1,
                Err(e) => return Err(e),
            }
        }
        if rejected == steps {
            return Err(Error::Training(format!("operator singular for every step of epoch {}", self.epoch + 1)));
        }
        self.epoch += 1;
        let val = data.validate(&self.model, cfg.l2)?;
        if !val.total.is_finite() {
            return Err(Error::NonFinite(format!("validation loss at epoch {}", self.epoch)));
        }
        Ok(EpochRecord { epoch: self.epoch, phase, train: acc, val, rejected_steps: rejected })
    }

    /// Trains until `target` epochs have completed. A failure marks the run
    /// aborted and is returned as an error.
    pub fn train_until(&mut self, target: u64, cfg: &TrainConfig, data: &TrainData, opts: &TrainOptions) -> Result<()> {
        if let Some(msg) = &self.record.aborted {
            return Err(Error::Training(msg.clone()));
        }
        while self.epoch < target {
            let rec = match self.run_epoch(cfg, data) {
                Ok(r) => r,
                Err(e) => {
                    let msg = format!("candidate {} aborted at epoch {}: {e}", self.id, self.epoch + 1);
                    self.record.aborted = Some(msg.clone());
                    return Err(Error::Training(msg));
                }
            };
            if rec.val.total < self.record.best_val {
                self.record.best_val = rec.val.total;
                self.record.best_epoch = rec.epoch;
                self.best = Checkpoint {
                    model: self.model.clone(),
                    meta: CheckpointMeta {
                        seed: self.seed,
                        epoch: self.epoch,
                        best_val: rec.val.total,
                        phase: rec.phase,
                        lr: self.lr,
                        config_hash: self.hash,
                    },
                };
            }
            if let Some(p) = opts.progress {
                p(self.id, &rec);
            }
            self.record.epochs.push(rec);
        }
        Ok(())
    }

    fn save_best(&mut self, opts: &TrainOptions) -> Result<()> {
        if let Some(dir) = &opts.checkpoint_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(format!("candidate-{:02}.ckpt", self.id));
            save_checkpoint(&self.best, &path)?;
            self.record.checkpoint = Some(path);
        }
        Ok(())
    }
}

/// Phase 1 then the initial phase 2 for one learning rate and seed.
pub fn train_candidate(
    cfg: &TrainConfig,
    arch: &Architecture,
    data: &TrainData,
    lr: f64,
    seed: u64,
) -> Result<RunRecord> {
    let mut c = Candidate::new(cfg, arch, 0, lr, seed)?;
    let target = (cfg.epochs_ae_only + cfg.epochs_full_initial) as u64;
    c.train_until(target, cfg, data, &TrainOptions::default())?;
    Ok(c.record)
}

/// Learning rates and seeds for every candidate, drawn from `cfg.seed`.
pub fn draw_candidates(cfg: &TrainConfig) -> Vec<(f64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.n_candidates)
        .map(|_| {
            let lr = if cfg.lr_log_uniform {
                let (a, b) = (cfg.lr_low.ln(), cfg.lr_high.ln());
                rng.gen_range(a..=b).exp()
            } else {
                rng.gen_range(cfg.lr_low..=cfg.lr_high)
            };
            let seed = rng.next_u64();
            (cfg.lr.unwrap_or(lr), seed)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: Checkpoint,
    pub winner: usize,
    pub records: Vec<RunRecord>,
}

/// Trains every candidate through the initial schedule, keeps the one with
/// the lowest best validation loss, and continues it for the final phase.
pub fn lr_search_and_finalize(
    cfg: &TrainConfig,
    arch: &Architecture,
    data: &TrainData,
    opts: &TrainOptions,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    let draws = draw_candidates(cfg);
    let initial = (cfg.epochs_ae_only + cfg.epochs_full_initial) as u64;
    let run = |(id, &(lr, seed)): (usize, &(f64, u64))| -> Result<Candidate> {
        let mut c = Candidate::new(cfg, arch, id, lr, seed)?;
        // aborts are recorded on the candidate and do not stop the search
        let _ = c.train_until(initial, cfg, data, opts);
        Ok(c)
    };
    let mut candidates: Vec<Candidate> = if cfg.thread_count > 1 && draws.len() > 1 {
        let chunk = draws.len().div_ceil(cfg.thread_count);
        let indexed: Vec<(usize, &(f64, u64))> = draws.iter().enumerate().collect();
        std::thread::scope(|s| {
            let handles: Vec<_> = indexed
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(|&p| run(p)).collect::<Result<Vec<_>>>()))
                .collect();
            let mut out = Vec::new();
            for h in handles {
                out.extend(h.join().expect("training thread panicked")?);
            }
            Ok::<_, Error>(out)
        })?
    } else {
        draws.iter().enumerate().map(run).collect::<Result<_>>()?
    };

    let winner = candidates
        .iter()
        .filter(|c| c.record.aborted.is_none() && c.record.best_val.is_finite())
        .min_by(|a, b| a.record.best_val.total_cmp(&b.record.best_val).then(a.id.cmp(&b.id)))
        .map(|c| c.id)
        .ok_or_else(|| Error::Training("every candidate was aborted".into()))?;

    let final_target = initial + cfg.epochs_full_final as u64;
    // a failure in the final phase keeps the best snapshot found so far
    let _ = candidates[winner].train_until(final_target, cfg, data, opts);
    for c in candidates.iter_mut() {
        c.save_best(opts)?;
    }
    let best = candidates[winner].best.clone();
    let records = candidates.into_iter().map(|c| c.record).collect();
    Ok(SearchOutcome { best, winner, records })
}

pub const RUN_LOG_HEADER: &str = "candidate\tepoch\tphase\tlr\tL1\tL2\tL3\tL4\tL5\tL6\treg\ttotal_train\ttotal_val";

/// Tab-separated run log, one line per epoch.
pub fn write_run_log(records: &[RunRecord], out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "{RUN_LOG_HEADER}")?;
    for r in records {
        for e in &r.epochs {
            write!(out, "{}\t{}\t{}\t{:e}", r.candidate, e.epoch, e.phase, r.lr)?;
            for t in e.train.terms {
                write!(out, "\t{t:e}")?;
            }
            writeln!(out, "\t{:e}\t{:e}\t{:e}", e.train.reg, e.train.total, e.val.total)?;
        }
    }
    Ok(())
}
