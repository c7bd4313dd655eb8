//! Finite-difference checks of the reverse sweep, one op family at a time.
//! Each case returns the worst relative error over all parameter entries.

use deepgreen::autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use deepgreen::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Compares analytic gradients of every parameter entry against central
/// differences and returns the worst relative error.
pub fn check<F>(store: &mut ParamStore, build: F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let ids: Vec<ParamId> = (0..store.len()).map(ParamId).collect();
    let eval = |store: &ParamStore| -> f64 {
        let mut g = Graph::new(store);
        let vars: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
        let loss = build(&mut g, &vars).unwrap();
        g.scalar(loss)
    };
    let grads = {
        let mut g = Graph::new(store);
        let vars: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
        let loss = build(&mut g, &vars).unwrap();
        g.backward(loss).unwrap()
    };
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (p, grad) in ids.iter().zip(&grads) {
        for i in 0..grad.len() {
            let orig = store.get(*p).value.data()[i];
            store.get_mut(*p).value.data_mut()[i] = orig + h;
            let up = eval(store);
            store.get_mut(*p).value.data_mut()[i] = orig - h;
            let down = eval(store);
            store.get_mut(*p).value.data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grad.data()[i];
            let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
            worst = worst.max(err);
        }
    }
    worst
}

pub fn store_with(tensors: Vec<Tensor>) -> ParamStore {
    let mut s = ParamStore::new();
    for (i, t) in tensors.into_iter().enumerate() {
        s.add(format!("p{i}"), t, true);
    }
    s
}

pub fn dense_relu_stack() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut s = store_with(vec![
        random(&[4, 6], &mut rng),
        random(&[6, 5], &mut rng),
        random(&[5], &mut rng),
        random(&[5, 6], &mut rng),
        random(&[4, 6], &mut rng),
    ]);
    let err = check(&mut s, |g, v| {
        let h = g.dense(v[0], v[1], Some(v[2]), true)?;
        let y = g.dense(h, v[3], None, false)?;
        let y = g.add(y, v[0])?;
        g.rel_sq(y, v[4])
    });
    err
}

pub fn conv_pool_reshape() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut s = store_with(vec![
        random(&[2, 1, 8, 8], &mut rng),
        random(&[3, 1, 4, 4], &mut rng),
        random(&[3], &mut rng),
        random(&[4, 3, 4, 4], &mut rng),
        random(&[2, 64], &mut rng),
    ]);
    let err = check(&mut s, |g, v| {
        let a = g.conv2d(v[0], v[1], Some(v[2]), 1)?;
        let a = g.relu(a)?;
        let p = g.avgpool2(a)?;
        let b = g.conv2d(p, v[3], None, 2)?;
        let f = g.reshape(b, &[2, 16])?;
        let f2 = g.reshape(f, &[2, 4, 2, 2])?;
        let up = g.upsample2(f2)?;
        let up = g.upsample2(up)?;
        let m = g.channel_mean(up)?;
        let flat = g.reshape(m, &[2, 64])?;
        g.rel_sq(flat, v[4])
    });
    err
}

pub fn transposed_conv_and_channel_skip() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut s = store_with(vec![
        random(&[2, 3, 2, 2], &mut rng),
        random(&[3, 2, 4, 4], &mut rng),
        random(&[2], &mut rng),
        random(&[2, 1, 4, 4], &mut rng),
        random(&[2, 1, 4, 4], &mut rng),
        random(&[2, 16], &mut rng),
    ]);
    let err = check(&mut s, |g, v| {
        let a = g.tconv2d(v[0], v[1], Some(v[2]), 2)?;
        let a = g.add_channels(a, v[4])?;
        let b = g.tconv2d(a, v[3], None, 1)?;
        let flat = g.reshape(b, &[2, 16])?;
        g.rel_sq(flat, v[5])
    });
    err
}

pub fn operator_product_and_inverse() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut w = random(&[5, 5], &mut rng);
    for i in 0..5 {
        w.data_mut()[i * 6] += 4.0;
    }
    let mut s = store_with(vec![w, random(&[3, 5], &mut rng), random(&[3, 5], &mut rng)]);
    let err = check(&mut s, |g, v| {
        let l = g.symmetrize(v[0])?;
        let lu = g.apply_operator(v[1], l)?;
        let a = g.rel_sq(lu, v[2])?;
        let inv = g.solve(l, v[2])?;
        let b = g.rel_sq(inv, v[1])?;
        g.sum(&[a, b])
    });
    err
}

pub fn superposition_loss() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut s = store_with(vec![random(&[4, 3], &mut rng), random(&[4, 3], &mut rng)]);
    let err = check(&mut s, |g, v| g.pair_rel_sq(v[0], v[1]));
    err
}

pub fn repeated_param_use_accumulates() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut s = store_with(vec![random(&[2, 3], &mut rng), random(&[3, 3], &mut rng), random(&[2, 3], &mut rng)]);
    let err = check(&mut s, |g, v| {
        let a = g.linear(v[0], v[1], None)?;
        let b = g.linear(a, v[1], None)?;
        g.rel_sq(b, v[2])
    });
    err
}

/// Every layer-level case with its name.
pub const LAYER_CASES: [(&str, fn() -> f64); 6] = [
    ("dense/relu/add", dense_relu_stack),
    ("conv/pool/reshape/upsample/channel_mean", conv_pool_reshape),
    ("tconv/add_channels", transposed_conv_and_channel_skip),
    ("symmetrize/apply_operator/solve", operator_product_and_inverse),
    ("pair_rel_sq", superposition_loss),
    ("shared parameter", repeated_param_use_accumulates),
];
