//! Green's-matrix inference, evaluation tables and the ablation studies on
//! small synthetic problems.

use deepgreen::autodiff::Tensor;
use deepgreen::config::Config;
use deepgreen::eval::experiments::{
    experiment_latent_variability, experiment_operator_init, experiment_resnet_ablation, pairwise_distances,
};
use deepgreen::eval::{per_sample_losses, select_exhibits, summarize};
use deepgreen::greens::{dominance_ratio, Solver, DOMINANCE_MAX};
use deepgreen::model::{Architecture, Model, OperatorInit};
use deepgreen::trainer::{SplitRows, TrainData};

fn set(model: &mut Model, name: &str, t: Tensor) {
    let id = model.store.find(name).unwrap();
    model.store.get_mut(id).value = t;
}

/// Every map is the identity: hidden layers zeroed, outer layers `I`.
fn identity_rig(n: usize) -> Model {
    let mut model = Model::new(Architecture::dense(n, n), 0).unwrap();
    for side in ["u", "f"] {
        for i in 0..2 {
            set(&mut model, &format!("{side}.enc.hidden{i}.w"), Tensor::zeros(&[n, n]));
            set(&mut model, &format!("{side}.dec.hidden{i}.w"), Tensor::zeros(&[n, n]));
        }
        for l in ["enc.out", "dec.first", "dec.out"] {
            set(&mut model, &format!("{side}.{l}.w"), Tensor::identity(n));
        }
    }
    model
}

fn wave(n: usize, k: f64) -> Vec<f64> {
    (0..n).map(|i| (k * i as f64 * 0.3).sin() - 0.1 * k).collect()
}

#[test]
fn rig_solve_and_predict_are_identities() {
    let model = identity_rig(10);
    let s = Solver::new(&model).unwrap();
    let f = wave(10, 1.3);
    let u = s.solve(&f).unwrap();
    let back = s.solve(&s.predict_forcing(&u).unwrap()).unwrap();
    for i in 0..10 {
        assert!((u[i] - f[i]).abs() <= 1e-10);
        assert!((back[i] - u[i]).abs() <= 1e-10);
    }
    let (a, b) = (wave(10, 0.7), wave(10, 2.1));
    let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    let (pa, pb, ps) = (s.predict_forcing(&a).unwrap(), s.predict_forcing(&b).unwrap(), s.predict_forcing(&sum).unwrap());
    for i in 0..10 {
        assert!((ps[i] - pa[i] - pb[i]).abs() <= 1e-10);
    }
}

#[test]
fn rig_scores_zero_on_matched_data() {
    let model = identity_rig(6);
    let rows = SplitRows { u: (0..5).map(|k| wave(6, k as f64 + 1.0)).collect(), f: (0..5).map(|k| wave(6, k as f64 + 1.0)).collect() };
    let table = per_sample_losses(&model, &rows).unwrap();
    assert_eq!(table.len(), 5);
    assert!(table.iter().all(|t| t.sum() <= 1e-24));
    let stats = summarize(&table).unwrap();
    assert!(stats.iter().all(|b| b.max <= 1e-24));
    select_exhibits(&table).unwrap();
}

#[test]
fn latent_solve_superposes_for_any_model() {
    let mut a = Architecture::dense(8, 4);
    a.operator_init = OperatorInit::Toeplitz;
    let model = Model::new(a, 3).unwrap();
    let s = Solver::new(&model).unwrap();
    let (f1, f2) = ([0.3, -1.0, 2.0, 0.5], [1.5, 0.25, -0.75, 4.0]);
    let sum: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| a + b).collect();
    let (v1, v2, vs) = (s.latent_solve(&f1), s.latent_solve(&f2), s.latent_solve(&sum));
    for i in 0..4 {
        assert!((vs[i] - v1[i] - v2[i]).abs() <= 1e-14 * vs[i].abs().max(1.0));
    }
}

fn tiny_data() -> TrainData {
    let rows = |c: usize, o: usize| {
        let u: Vec<Vec<f64>> = (0..c).map(|k| wave(8, 0.4 + 0.15 * (k + o) as f64)).collect();
        let f = u.iter().map(|r| r.iter().map(|x| -x + 0.3 * x * x * x).collect()).collect();
        SplitRows { u, f }
    };
    TrainData::new(rows(8, 0), rows(3, 40)).unwrap()
}

fn tiny_config() -> Config {
    let mut c = Config::default();
    c.experiment.epochs_ae_only = 2;
    c.experiment.epochs_full = 3;
    c.train.batch_size = 4;
    c
}

#[test]
fn operator_init_study_reports_every_arm() {
    let rep = experiment_operator_init(&tiny_config(), &Architecture::dense(8, 4), &tiny_data()).unwrap();
    assert_eq!(rep.arms.len(), 3);
    assert_eq!(rep.arms[0].initial_r, DOMINANCE_MAX);
    let toeplitz = &rep.arms[2].initial;
    for i in 1..4 {
        for j in 1..4 {
            assert_eq!(toeplitz.data()[i * 4 + j], toeplitz.data()[(i - 1) * 4 + j - 1]);
        }
    }
    assert!(rep.arms.iter().all(|a| a.result.is_ok()));
    assert_eq!(dominance_ratio(rep.arms[1].initial.data(), 4), rep.arms[1].initial_r);
}

#[test]
fn latent_study_distances() {
    let cfg = tiny_config();
    let arch = Architecture::dense(8, 3);
    let same = experiment_latent_variability(&cfg, &arch, &tiny_data(), &[4, 4]).unwrap();
    let d = pairwise_distances(&same.v);
    assert_eq!(d, vec![0.0; 4]);
    let diff = experiment_latent_variability(&cfg, &arch, &tiny_data(), &[1, 2, 3]).unwrap();
    assert!(diff.v.iter().all(|r| r.is_some()));
    let d = pairwise_distances(&diff.v);
    for i in 0..3 {
        assert_eq!(d[i * 3 + i], 0.0);
        for j in 0..3 {
            assert_eq!(d[i * 3 + j], d[j * 3 + i]);
        }
    }
    assert!(d[1] > 0.0);
    assert!(experiment_latent_variability(&cfg, &arch, &tiny_data(), &[1]).is_err());
}

#[test]
fn ablation_has_two_arms_with_mean_and_median() {
    let rep = experiment_resnet_ablation(&tiny_config(), &Architecture::dense(8, 3), &tiny_data(), 2).unwrap();
    assert_eq!(rep.arms.len(), 2);
    assert!(rep.arms[0].resnet && !rep.arms[1].resnet);
    for a in &rep.arms {
        assert_eq!(a.runs.len(), 2);
        assert!(a.mean().is_finite() && a.median().is_finite());
    }
}
