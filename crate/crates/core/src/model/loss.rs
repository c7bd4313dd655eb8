//! The six loss terms and their combination per training phase.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::arch::Model;
use crate::autodiff::{rel_sq_rows, Graph, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// Reconstruction terms ℒ1, ℒ2 only.
    AeOnly,
    /// All six terms.
    Full,
}

impl Phase {
    pub fn code(self) -> u8 {
        match self {
            Phase::AeOnly => 0,
            Phase::Full => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Phase::AeOnly),
            1 => Some(Phase::Full),
            _ => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::AeOnly => "ae_only",
            Phase::Full => "full",
        })
    }
}

/// Values of ℒ1…ℒ6, the ℓ2 term and their sum. Terms inactive in a phase
/// are stored as 0 and excluded from `total`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub terms: [f64; 6],
    pub reg: f64,
    pub total: f64,
    pub phase: Phase,
}

impl LossBreakdown {
    pub fn zero(phase: Phase) -> Self {
        Self { terms: [0.0; 6], reg: 0.0, total: 0.0, phase }
    }

    /// Recomputes `total` from the terms and `reg` for the stored phase.
    pub fn with_total(mut self) -> Self {
        let n = match self.phase {
            Phase::AeOnly => 2,
            Phase::Full => 6,
        };
        self.total = self.terms[..n].iter().sum::<f64>() + self.reg;
        self
    }

    /// Weighted running mean used to fold minibatch results into epoch means.
    pub fn accumulate(&mut self, other: &LossBreakdown, weight: f64, seen: f64) {
        let a = seen / (seen + weight);
        let b = weight / (seen + weight);
        for i in 0..6 {
            self.terms[i] = a * self.terms[i] + b * other.terms[i];
        }
        self.reg = a * self.reg + b * other.reg;
        self.total = a * self.total + b * other.total;
    }
}

/// A minibatch of solution/forcing rows, `[batch, len]` each.
#[derive(Debug, Clone)]
pub struct Batch {
    pub u: Tensor,
    pub f: Tensor,
}

impl Batch {
    pub fn new(u: Tensor, f: Tensor) -> Result<Self> {
        if u.shape() != f.shape() || u.shape().len() != 2 || u.shape()[0] == 0 {
            return Err(Error::Shape(format!(
                "batch needs matching non-empty [batch, len] tensors, got {:?} and {:?}",
                u.shape(),
                f.shape()
            )));
        }
        Ok(Self { u, f })
    }

    pub fn len(&self) -> usize {
        self.u.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

struct LossGraph {
    terms: Vec<Var>,
    total: Var,
}

fn build(g: &mut Graph, model: &Model, batch: &Batch, phase: Phase) -> Result<LossGraph> {
    model.check_batch(&batch.u)?;
    model.check_batch(&batch.f)?;
    let u = g.input(batch.u.clone())?;
    let f_in = g.input(batch.f.clone())?;
    let v = model.encode_u(g, u)?;
    let f = model.encode_f(g, f_in)?;
    let u_hat = model.decode_u(g, v)?;
    let f_hat = model.decode_f(g, f)?;
    let l1 = g.rel_sq(u_hat, u)?;
    let l2 = g.rel_sq(f_hat, f_in)?;
    let mut terms = vec![l1, l2];
    if phase == Phase::Full {
        let l = model.operator_node(g)?;
        let lv = g.apply_operator(v, l)?;
        terms.push(g.rel_sq(lv, f)?);
        terms.push(g.pair_rel_sq(lv, f)?);
        let f_cross = model.decode_f(g, lv)?;
        terms.push(g.rel_sq(f_cross, f_in)?);
        let v_solved = g.solve(l, f)?;
        let u_cross = model.decode_u(g, v_solved)?;
        terms.push(g.rel_sq(u_cross, u)?);
    }
    let total = g.sum(&terms)?;
    Ok(LossGraph { terms, total })
}

fn breakdown(g: &Graph, lg: &LossGraph, reg: f64, phase: Phase) -> LossBreakdown {
    let mut out = LossBreakdown::zero(phase);
    for (i, &t) in lg.terms.iter().enumerate() {
        out.terms[i] = g.scalar(t);
    }
    out.reg = reg;
    out.with_total()
}

/// Loss values for one batch without gradients.
pub fn losses(model: &Model, batch: &Batch, phase: Phase, l2: f64) -> Result<LossBreakdown> {
    let mut g = Graph::new(&model.store);
    let lg = build(&mut g, model, batch, phase)?;
    Ok(breakdown(&g, &lg, model.store.l2_penalty(l2), phase))
}

/// Loss values and the gradient of the data terms for every parameter.
/// The ℓ2 gradient is left to the optimizer.
pub fn loss_and_grads(model: &Model, batch: &Batch, phase: Phase, l2: f64) -> Result<(LossBreakdown, Vec<Tensor>)> {
    let mut g = Graph::new(&model.store);
    let lg = build(&mut g, model, batch, phase)?;
    let out = breakdown(&g, &lg, model.store.l2_penalty(l2), phase);
    if !out.total.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    let grads = g.backward(lg.total)?;
    Ok((out, grads))
}

/// Per-sample ℒ1, ℒ2, ℒ3, ℒ5, ℒ6. The superposition term has no per-sample
/// form and is not scored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleLosses {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l5: f64,
    pub l6: f64,
}

impl SampleLosses {
    pub const NAMES: [&'static str; 5] = ["L1", "L2", "L3", "L5", "L6"];

    pub fn values(&self) -> [f64; 5] {
        [self.l1, self.l2, self.l3, self.l5, self.l6]
    }

    pub fn sum(&self) -> f64 {
        self.values().iter().sum()
    }
}

/// Scores every row of the batch.
pub fn per_sample(model: &Model, batch: &Batch) -> Result<Vec<SampleLosses>> {
    model.check_batch(&batch.u)?;
    model.check_batch(&batch.f)?;
    let mut g = Graph::new(&model.store);
    let u = g.input(batch.u.clone())?;
    let f_in = g.input(batch.f.clone())?;
    let v = model.encode_u(&mut g, u)?;
    let f = model.encode_f(&mut g, f_in)?;
    let u_hat = model.decode_u(&mut g, v)?;
    let f_hat = model.decode_f(&mut g, f)?;
    let l = model.operator_node(&mut g)?;
    let lv = g.apply_operator(v, l)?;
    let f_cross = model.decode_f(&mut g, lv)?;
    let v_solved = g.solve(l, f)?;
    let u_cross = model.decode_u(&mut g, v_solved)?;
    let l1 = rel_sq_rows(g.value(u_hat), &batch.u);
    let l2 = rel_sq_rows(g.value(f_hat), &batch.f);
    let l3 = rel_sq_rows(g.value(lv), g.value(f));
    let l5 = rel_sq_rows(g.value(f_cross), &batch.f);
    let l6 = rel_sq_rows(g.value(u_cross), &batch.u);
    Ok((0..batch.len())
        .map(|k| SampleLosses { l1: l1[k], l2: l2[k], l3: l3[k], l5: l5[k], l6: l6[k] })
        .collect())
}
