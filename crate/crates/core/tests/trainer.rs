//! Training protocol: phase schedule, checkpoint-best, search and resume.

use deepgreen::config::TrainConfig;
use deepgreen::model::checkpoint::{decode_checkpoint, encode_checkpoint};
use deepgreen::model::{Architecture, Phase};
use deepgreen::trainer::{
    lr_search_and_finalize, train_candidate, write_run_log, Candidate, SplitRows, TrainData, TrainOptions,
};
use deepgreen::Error;

/// Smooth pairs on an 8-point grid with a mildly nonlinear relation.
fn rows(count: usize, offset: usize) -> SplitRows {
    let mut u = Vec::new();
    let mut f = Vec::new();
    for k in 0..count {
        let a = 0.5 + 0.1 * ((k + offset) as f64);
        let row: Vec<f64> = (0..8).map(|i| (a * i as f64 * 0.4).sin() + 0.2).collect();
        f.push(row.iter().map(|x| -x + 0.3 * x * x * x).collect());
        u.push(row);
    }
    SplitRows { u, f }
}

fn data() -> TrainData {
    TrainData::new(rows(10, 0), rows(4, 100)).unwrap()
}

fn cfg() -> TrainConfig {
    TrainConfig {
        epochs_ae_only: 2,
        epochs_full_initial: 2,
        epochs_full_final: 2,
        batch_size: 4,
        n_candidates: 2,
        seed: 5,
        ..TrainConfig::default()
    }
}

fn arch() -> Architecture {
    Architecture::dense(8, 3)
}

#[test]
fn one_epoch_per_phase_logs_two_epochs() {
    let c = TrainConfig { epochs_ae_only: 1, epochs_full_initial: 1, ..cfg() };
    let rec = train_candidate(&c, &arch(), &data(), 1e-3, 1).unwrap();
    assert_eq!(rec.epochs.len(), 2);
    assert_eq!(rec.epochs[0].phase, Phase::AeOnly);
    assert_eq!(rec.epochs[1].phase, Phase::Full);
    // operator terms are absent before the boundary and present after
    assert_eq!(&rec.epochs[0].train.terms[2..], &[0.0; 4]);
    let e0 = &rec.epochs[0].train;
    assert_eq!(e0.total, e0.terms[0] + e0.terms[1] + e0.reg);
    assert!(rec.epochs[1].train.terms[2..].iter().all(|&t| t > 0.0));
}

#[test]
fn operator_stays_identity_through_phase_one() {
    let c = TrainConfig { epochs_ae_only: 3, ..cfg() };
    let mut cand = Candidate::new(&c, &arch(), 0, 5e-3, 2).unwrap();
    cand.train_until(3, &c, &data(), &TrainOptions::default()).unwrap();
    let w = cand.model.store.value(cand.model.operator_id());
    assert_eq!(w.data(), deepgreen::autodiff::Tensor::identity(3).data());
    cand.train_until(4, &c, &data(), &TrainOptions::default()).unwrap();
    let w = cand.model.store.value(cand.model.operator_id());
    assert_ne!(w.data(), deepgreen::autodiff::Tensor::identity(3).data());
}

#[test]
fn best_validation_is_running_minimum() {
    let c = TrainConfig { epochs_ae_only: 3, epochs_full_initial: 5, ..cfg() };
    let rec = train_candidate(&c, &arch(), &data(), 2e-3, 3).unwrap();
    let min = rec.epochs.iter().map(|e| e.val.total).fold(f64::INFINITY, f64::min);
    assert_eq!(rec.best_val, min);
    let mut best = f64::INFINITY;
    for e in &rec.epochs {
        let next = best.min(e.val.total);
        assert!(next <= best);
        best = next;
    }
}

#[test]
fn same_inputs_same_losses() {
    let a = train_candidate(&cfg(), &arch(), &data(), 1e-3, 9).unwrap();
    let b = train_candidate(&cfg(), &arch(), &data(), 1e-3, 9).unwrap();
    assert_eq!(a.epochs, b.epochs);
}

#[test]
fn search_picks_lowest_validation_and_finishes_it() {
    let c = cfg();
    let out = lr_search_and_finalize(&c, &arch(), &data(), &TrainOptions::default()).unwrap();
    assert_eq!(out.records.len(), 2);
    let initial = (c.epochs_ae_only + c.epochs_full_initial) as u64;
    let best_initial: Vec<f64> = out
        .records
        .iter()
        .map(|r| r.epochs.iter().filter(|e| e.epoch <= initial).map(|e| e.val.total).fold(f64::INFINITY, f64::min))
        .collect();
    let expect = if best_initial[0] <= best_initial[1] { 0 } else { 1 };
    assert_eq!(out.winner, expect);
    let w = &out.records[out.winner];
    assert_eq!(w.epochs.len() as u64, initial + c.epochs_full_final as u64);
    assert_eq!(out.records[1 - out.winner].epochs.len() as u64, initial);
    assert_eq!(out.best.meta.best_val, w.best_val);
    for r in &out.records {
        assert!(r.lr >= c.lr_low && r.lr <= c.lr_high);
    }

    let again = lr_search_and_finalize(&c, &arch(), &data(), &TrainOptions::default()).unwrap();
    assert_eq!(again.winner, out.winner);
    assert_eq!(again.records[again.winner].epochs, w.epochs);
}

#[test]
fn parallel_candidates_match_sequential() {
    let seq = lr_search_and_finalize(&cfg(), &arch(), &data(), &TrainOptions::default()).unwrap();
    let par_cfg = TrainConfig { thread_count: 2, ..cfg() };
    let par = lr_search_and_finalize(&par_cfg, &arch(), &data(), &TrainOptions::default()).unwrap();
    assert_eq!(seq.winner, par.winner);
    for (a, b) in seq.records.iter().zip(&par.records) {
        assert_eq!(a.epochs, b.epochs);
    }
}

#[test]
fn resume_matches_uninterrupted_run() {
    let c = cfg();
    let d = data();
    let mut straight = Candidate::new(&c, &arch(), 0, 2e-3, 4).unwrap();
    straight.train_until(4, &c, &d, &TrainOptions::default()).unwrap();

    let mut first = Candidate::new(&c, &arch(), 0, 2e-3, 4).unwrap();
    first.train_until(3, &c, &d, &TrainOptions::default()).unwrap();
    let bytes = encode_checkpoint(&first.snapshot(&c)).unwrap();
    let mut resumed = Candidate::resume(&c, decode_checkpoint(&bytes).unwrap(), 0);
    resumed.train_until(4, &c, &d, &TrainOptions::default()).unwrap();

    assert_eq!(resumed.record.epochs.len(), 1);
    assert_eq!(resumed.record.epochs[0], straight.record.epochs[3]);
}

#[test]
fn non_finite_data_aborts_every_candidate() {
    let mut bad = rows(6, 0);
    bad.u[2][3] = f64::NAN;
    let d = TrainData::new(bad, rows(2, 50)).unwrap();
    let err = lr_search_and_finalize(&cfg(), &arch(), &d, &TrainOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Training(_)), "{err}");
}

#[test]
fn run_log_has_one_line_per_epoch() {
    let c = cfg();
    let out = lr_search_and_finalize(&c, &arch(), &data(), &TrainOptions::default()).unwrap();
    let mut buf = Vec::new();
    write_run_log(&out.records, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let epochs: usize = out.records.iter().map(|r| r.epochs.len()).sum();
    assert_eq!(lines.len(), epochs + 1);
    assert!(lines.iter().all(|l| l.split('\t').count() == 13));
}

#[test]
fn checkpoints_written_per_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let opts = TrainOptions { checkpoint_dir: Some(dir.path().to_path_buf()), progress: None };
    let out = lr_search_and_finalize(&cfg(), &arch(), &data(), &opts).unwrap();
    for r in &out.records {
        let p = r.checkpoint.as_ref().unwrap();
        let ck = deepgreen::model::load_checkpoint(p).unwrap();
        assert_eq!(ck.meta.best_val, r.best_val);
    }
}
