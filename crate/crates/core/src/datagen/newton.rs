use super::fd;
use super::forcing::ForcingSpec;
use super::grid::Grid;
use super::system::{SystemId, SystemSpec};
use crate::Result;

/// Default max-norm residual tolerance for a converged solve.
pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITERS: usize = 50;
const MAX_HALVINGS: usize = 30;

/// One discretized `(u, F)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub u: Vec<f64>,
    pub f: Vec<f64>,
    pub forcing: Option<ForcingSpec>,
    pub system: SystemId,
    pub converged: bool,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: NEWTON_TOL, max_iters: NEWTON_MAX_ITERS }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Damped Newton on the finite-difference residual, starting from `u = 0`.
///
/// Each step solves with the analytic banded Jacobian and halves the step
/// (at most 30 times) until the max-norm residual decreases. A solve that
/// does not reach `tol` within `max_iters` is returned with
/// `converged = false`.
pub fn solve_bvp(system: &SystemSpec, f: &[f64], grid: &Grid, opts: NewtonOptions) -> Result<SamplePair> {
    let zero = vec![0.0; grid.len()];
    let mut u = zero.clone();
    let mut r = fd::residual(system, &u, f, grid)?;
    let mut norm = max_abs(&r);
    let mut iters = 0;
    while norm > opts.tol && iters < opts.max_iters {
        iters += 1;
        let jac = fd::jacobian(system, &u, grid);
        let lu = match jac.factor() {
            Ok(lu) => lu,
            Err(_) => break,
        };
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let step = lu.solve(&neg);
        let base = grid.interior(&u);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial_inner: Vec<f64> = base.iter().zip(&step).map(|(b, s)| b + lambda * s).collect();
            let trial = grid.expand(&trial_inner);
            let tr = fd::residual_unchecked(system, &trial, f, grid);
            let tn = max_abs(&tr);
            if tn < norm {
                u = trial;
                r = tr;
                norm = tn;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let converged = norm <= opts.tol && norm.is_finite();
    Ok(SamplePair {
        u,
        f: f.to_vec(),
        forcing: None,
        system: system.id(),
        converged,
        residual_norm: norm,
    })
}

/// Evaluates a forcing spec on the grid and solves for it.
pub fn solve_forcing(system: &SystemSpec, spec: &ForcingSpec, grid: &Grid, opts: NewtonOptions) -> Result<SamplePair> {
    let f = spec.evaluate(grid)?;
    let mut pair = solve_bvp(system, &f, grid, opts)?;
    pair.forcing = Some(*spec);
    Ok(pair)
}
