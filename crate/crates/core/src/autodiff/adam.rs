use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    /// Whether the ℓ2 penalty applies (weights yes; biases and the operator no).
    pub decay: bool,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Named trainable tensors with Adam moment buffers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// ℓ2 coefficient λ; contributes `2λθ` to the gradient of decayed params.
    pub l2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, l2: 1e-6 }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, decay: bool) -> ParamId {
        let n = value.len();
        self.params.push(Param { name: name.into(), value, decay, m: vec![0.0; n], v: vec![0.0; n] });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_step_count(&mut self, t: u64) {
        self.step = t;
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// `λ Σ θ²` over decayed parameters.
    pub fn l2_penalty(&self, l2: f64) -> f64 {
        l2 * self.params.iter().filter(|p| p.decay).map(|p| p.value.sum_sq()).sum::<f64>()
    }

    /// Zero gradients shaped like every parameter.
    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect()
    }

    /// One bias-corrected Adam update. The step is rejected, leaving the
    /// store untouched, if any gradient is non-finite or mis-shaped.
    pub fn adam_step(&mut self, grads: &[Tensor], lr: f64, cfg: &AdamConfig) -> Result<()> {
        if grads.len() != self.params.len() {
            return Err(Error::Shape(format!("{} gradients for {} parameters", grads.len(), self.params.len())));
        }
        for (p, g) in self.params.iter().zip(grads) {
            if g.shape() != p.value.shape() {
                return Err(Error::Shape(format!("gradient for '{}' has shape {:?}", p.name, g.shape())));
            }
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of '{}'", p.name)));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (p, g) in self.params.iter_mut().zip(grads) {
            let decay = if p.decay { 2.0 * cfg.l2 } else { 0.0 };
            let theta = p.value.data_mut();
            for i in 0..theta.len() {
                let gi = g.data()[i] + decay * theta[i];
                p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * gi;
                p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * gi * gi;
                let mhat = p.m[i] / c1;
                let vhat = p.v[i] / c2;
                theta[i] -= lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}
