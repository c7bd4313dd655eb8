//! Model-level oracles shared by the model tests and the acceptance run.

use deepgreen::autodiff::{ParamId, Tensor};
use deepgreen::model::{loss_and_grads, losses, per_sample, Architecture, Batch, Model, Phase};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn set(model: &mut Model, name: &str, t: Tensor) {
    let id = model.store.find(name).unwrap_or_else(|| panic!("no parameter {name}"));
    model.store.get_mut(id).value = t;
}

/// Random orthogonal matrix by Gram-Schmidt on a seeded random square.
pub fn orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..2 {
            for b in &q {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        q.push(v);
    }
    q.concat()
}

pub fn transpose(a: &[f64], n: usize) -> Vec<f64> {
    (0..n * n).map(|k| a[(k % n) * n + k / n]).collect()
}

/// Linear rig: hidden layers zeroed so the skip carries the input, encoder
/// output `Q`, decoder first layer `Qᵀ`, everything else identity.
pub fn rig(n: usize, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::new(Architecture::dense(n, n), 0).unwrap();
    for side in ["u", "f"] {
        let q = orthogonal(n, &mut rng);
        for i in 0..2 {
            set(&mut model, &format!("{side}.enc.hidden{i}.w"), Tensor::zeros(&[n, n]));
            set(&mut model, &format!("{side}.dec.hidden{i}.w"), Tensor::zeros(&[n, n]));
        }
        set(&mut model, &format!("{side}.enc.out.w"), Tensor::new(&[n, n], q.clone()).unwrap());
        set(&mut model, &format!("{side}.dec.first.w"), Tensor::new(&[n, n], transpose(&q, n)).unwrap());
        set(&mut model, &format!("{side}.dec.out.w"), Tensor::identity(n));
    }
    model
}


/// Largest of the six batch losses and the per-sample sums when both
/// autoencoders and the operator are identities.
pub fn identity_rig_worst_loss() -> f64 {
    let n = 12;
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
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = random(&[6, n], &mut rng);
    let batch = Batch::new(u.clone(), u).unwrap();
    let out = losses(&model, &batch, Phase::Full, 0.0).unwrap();
    let sums = per_sample(&model, &batch).unwrap().iter().map(|s| s.sum()).collect::<Vec<_>>();
    out.terms.iter().chain(&sums).fold(0.0f64, |m, t| m.max(t.abs()))
}

/// (ℒ3, ℒ4) for a batch of one.
pub fn single_sample_operator_and_superposition() -> (f64, f64) {
    let mut model = Model::new(Architecture::dense(16, 4), 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let w = model.operator_id();
    model.store.get_mut(w).value = random(&[4, 4], &mut rng);
    // The 1e-12 denominator guard separates the two by about 0.75e-12/‖f‖²,
    // so the forcing is scaled to give a latent norm well above 1.
    let f = Tensor::new(&[1, 16], random(&[1, 16], &mut rng).data().iter().map(|x| 10.0 * x).collect()).unwrap();
    let batch = Batch::new(random(&[1, 16], &mut rng), f.clone()).unwrap();
    assert!(model.encode_f_batch(&f).unwrap().sum_sq() > 1.0);
    let out = losses(&model, &batch, Phase::Full, 0.0).unwrap();
    (out.terms[2], out.terms[3])
}

/// max|L − Lᵀ| and max|LG − I| for a 20-dimensional operator.
pub fn operator_symmetry_and_inverse() -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut model = Model::new(Architecture::dense(8, 20), 0).unwrap();
    let mut w = random(&[20, 20], &mut rng);
    for i in 0..20 {
        w.data_mut()[i * 21] += 25.0;
    }
    let id = model.operator_id();
    model.store.get_mut(id).value = w;
    let l = model.operator();
    let g = model.greens().unwrap();
    let (mut asym, mut resid) = (0.0f64, 0.0f64);
    for i in 0..20 {
        for j in 0..20 {
            asym = asym.max((l.data()[i * 20 + j] - l.data()[j * 20 + i]).abs());
            let lg: f64 = (0..20).map(|k| l.data()[i * 20 + k] * g.data()[k * 20 + j]).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            resid = resid.max((lg - want).abs());
        }
    }
    (asym, resid)
}

/// Worst relative error of the full six-term gradient of an 8 → 3 model,
/// including the path through L⁻¹.
pub fn miniature_model_gradient_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut model = Model::new(Architecture::dense(8, 3), 3).unwrap();
    // nudge away from identity so the operator paths carry information
    let w = model.operator_id();
    let mut wv = Tensor::identity(3);
    wv.add_assign(&random(&[3, 3], &mut rng));
    for i in 0..3 {
        wv.data_mut()[i * 4] += 1.0;
    }
    model.store.get_mut(w).value = wv;
    // nonzero biases so their gradients are exercised away from the kink
    for p in 0..model.store.len() {
        let id = ParamId(p);
        if model.store.get(id).name.ends_with(".b") {
            let n = model.store.get(id).value.len();
            model.store.get_mut(id).value = random(&[n], &mut rng);
        }
    }
    let batch = Batch::new(random(&[2, 8], &mut rng), random(&[2, 8], &mut rng)).unwrap();
    let (_, grads) = loss_and_grads(&model, &batch, Phase::Full, 0.0).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for p in 0..model.store.len() {
        let id = ParamId(p);
        for i in 0..model.store.get(id).value.len() {
            let orig = model.store.get(id).value.data()[i];
            model.store.get_mut(id).value.data_mut()[i] = orig + h;
            let up = losses(&model, &batch, Phase::Full, 0.0).unwrap().total;
            model.store.get_mut(id).value.data_mut()[i] = orig - h;
            let down = losses(&model, &batch, Phase::Full, 0.0).unwrap().total;
            model.store.get_mut(id).value.data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grads[p].data()[i];
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-3));
        }
    }
    worst
}
