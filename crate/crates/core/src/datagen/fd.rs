//! Second-order finite-difference residuals and their analytic Jacobians.
//!
//! Unknowns are the interior nodes; boundary nodes are held at zero. The
//! clamped biharmonic conditions `u'(0) = u'(2π) = 0` are imposed with the
//! ghost values `u₋₁ = u₁` and `u_n = u_{n−2}` (central difference for `u'`).

use super::banded::BandMatrix;
use super::grid::Grid;
use super::system::{sl_p, sl_q, SystemSpec};
use crate::{Error, Result};

fn check(system: &SystemSpec, grid: &Grid, u: &[f64], f: &[f64]) -> Result<()> {
    if system.dim() != grid.dim() {
        return Err(Error::Shape(format!(
            "{}D system on a {}D grid",
            system.dim(),
            grid.dim()
        )));
    }
    if system.dim() == 1 && matches!(system, SystemSpec::Biharmonic { .. }) && grid.n() < 5 {
        return Err(Error::InvalidInput("biharmonic stencil needs at least 5 nodes".into()));
    }
    grid.check_vector(u, "u")?;
    grid.check_vector(f, "F")
}

/// Interior residual of the discretized `N[u] − F`.
///
/// `u` and `F` are full nodal vectors; the result has one entry per
/// interior node (same packing as [`Grid::interior`]).
pub fn residual(system: &SystemSpec, u: &[f64], f: &[f64], grid: &Grid) -> Result<Vec<f64>> {
    check(system, grid, u, f)?;
    Ok(residual_unchecked(system, u, f, grid))
}

pub(crate) fn residual_unchecked(system: &SystemSpec, u: &[f64], f: &[f64], grid: &Grid) -> Vec<f64> {
    let n = grid.n();
    let h = grid.spacing();
    let h2 = h * h;
    match *system {
        SystemSpec::CubicHelmholtz { alpha, eps } => (1..n - 1)
            .map(|i| {
                let d2 = (u[i - 1] - 2.0 * u[i] + u[i + 1]) / h2;
                d2 + alpha * u[i] + eps * u[i].powi(3) - f[i]
            })
            .collect(),
        SystemSpec::SturmLiouville { eps } => {
            let x = grid.axis();
            (1..n - 1)
                .map(|i| {
                    let a_plus = -sl_p(x[i] + 0.5 * h);
                    let a_minus = -sl_p(x[i] - 0.5 * h);
                    let flux = (a_plus * (u[i + 1] - u[i]) - a_minus * (u[i] - u[i - 1])) / h2;
                    flux + sl_q(x[i]) * (u[i] + eps * u[i].powi(3)) - f[i]
                })
                .collect()
        }
        SystemSpec::Biharmonic { p, q, eps } => {
            let h4 = h2 * h2;
            let at = |k: isize| -> f64 {
                let last = n as isize - 1;
                let k = if k < 0 {
                    -k
                } else if k > last {
                    2 * last - k
                } else {
                    k
                };
                u[k as usize]
            };
            (1..n - 1)
                .map(|i| {
                    let i = i as isize;
                    let d4 = (at(i - 2) - 4.0 * at(i - 1) + 6.0 * at(i) - 4.0 * at(i + 1) + at(i + 2)) / h4;
                    let ui = at(i);
                    -p * d4 + q * (ui + eps * ui.powi(3)) - f[i as usize]
                })
                .collect()
        }
        SystemSpec::Poisson2D => {
            let mut r = Vec::with_capacity(grid.interior_len());
            for j in 1..n - 1 {
                for i in 1..n - 1 {
                    let c = j * n + i;
                    let up = u[c];
                    let kp = 1.0 + up * up;
                    let mut div = 0.0;
                    for nb in [c - 1, c + 1, c - n, c + n] {
                        let uq = u[nb];
                        let kf = 0.5 * (kp + 1.0 + uq * uq);
                        div += kf * (uq - up);
                    }
                    r.push(-div / h2 - f[c]);
                }
            }
            r
        }
    }
}

/// Analytic Jacobian of [`residual`] with respect to the interior unknowns.
pub fn jacobian(system: &SystemSpec, u: &[f64], grid: &Grid) -> BandMatrix {
    let n = grid.n();
    let m = grid.interior_len();
    let h = grid.spacing();
    let h2 = h * h;
    match *system {
        SystemSpec::CubicHelmholtz { alpha, eps } => {
            let mut jac = BandMatrix::zeros(m, 1, 1);
            for k in 0..m {
                let ui = u[k + 1];
                jac.add(k, k, -2.0 / h2 + alpha + 3.0 * eps * ui * ui);
                if k > 0 {
                    jac.add(k, k - 1, 1.0 / h2);
                }
                if k + 1 < m {
                    jac.add(k, k + 1, 1.0 / h2);
                }
            }
            jac
        }
        SystemSpec::SturmLiouville { eps } => {
            let x = grid.axis();
            let mut jac = BandMatrix::zeros(m, 1, 1);
            for k in 0..m {
                let i = k + 1;
                let a_plus = -sl_p(x[i] + 0.5 * h);
                let a_minus = -sl_p(x[i] - 0.5 * h);
                let ui = u[i];
                jac.add(k, k, -(a_plus + a_minus) / h2 + sl_q(x[i]) * (1.0 + 3.0 * eps * ui * ui));
                if k > 0 {
                    jac.add(k, k - 1, a_minus / h2);
                }
                if k + 1 < m {
                    jac.add(k, k + 1, a_plus / h2);
                }
            }
            jac
        }
        SystemSpec::Biharmonic { p, q, eps } => {
            let h4 = h2 * h2;
            let s = -p / h4;
            let mut jac = BandMatrix::zeros(m, 2, 2);
            for k in 0..m {
                let ui = u[k + 1];
                let ghost = if k == 0 || k + 1 == m { 1.0 } else { 0.0 };
                jac.add(k, k, s * (6.0 + ghost) + q * (1.0 + 3.0 * eps * ui * ui));
                if k >= 1 {
                    jac.add(k, k - 1, -4.0 * s);
                }
                if k >= 2 {
                    jac.add(k, k - 2, s);
                }
                if k + 1 < m {
                    jac.add(k, k + 1, -4.0 * s);
                }
                if k + 2 < m {
                    jac.add(k, k + 2, s);
                }
            }
            jac
        }
        SystemSpec::Poisson2D => {
            let w = n - 2;
            let mut jac = BandMatrix::zeros(m, w, w);
            for j in 1..n - 1 {
                for i in 1..n - 1 {
                    let c = j * n + i;
                    let row = (j - 1) * w + (i - 1);
                    let up = u[c];
                    let kp = 1.0 + up * up;
                    let mut diag = 0.0;
                    let nbs = [(c - 1, i - 1, j), (c + 1, i + 1, j), (c - n, i, j - 1), (c + n, i, j + 1)];
                    for (nb, ni, nj) in nbs {
                        let uq = u[nb];
                        let kf = 0.5 * (kp + 1.0 + uq * uq);
                        // d/du_P of kf (u_Q − u_P) and d/du_Q of the same flux
                        diag += up * (uq - up) - kf;
                        let interior = ni >= 1 && ni <= n - 2 && nj >= 1 && nj <= n - 2;
                        if interior {
                            let col = (nj - 1) * w + (ni - 1);
                            jac.add(row, col, -(uq * (uq - up) + kf) / h2);
                        }
                    }
                    jac.add(row, row, -diag / h2);
                }
            }
            jac
        }
    }
}
