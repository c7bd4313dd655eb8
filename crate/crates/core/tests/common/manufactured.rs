//! Manufactured solutions with analytic forcings for the four reference systems.

use deepgreen::datagen::{solve_bvp, Grid, NewtonOptions, SystemSpec};

/// Exact solution and its analytic forcing for each reference system.
pub fn manufactured(system: &SystemSpec, x: f64, y: f64) -> (f64, f64) {
    match *system {
        SystemSpec::CubicHelmholtz { alpha, eps } => {
            let u = x.sin();
            (u, -u + alpha * u + eps * u.powi(3))
        }
        SystemSpec::SturmLiouville { eps } => {
            // [a u']' with a = −p = 3 − 0.5 sin x
            let u = x.sin();
            let a = 3.0 - 0.5 * x.sin();
            let da = -0.5 * x.cos();
            let flux = da * x.cos() + a * (-x.sin());
            let q = 0.6 * x.sin() - 2.0;
            (u, flux + q * (u + eps * u.powi(3)))
        }
        SystemSpec::Biharmonic { p, q, eps } => {
            // u = sin²x + 0.3 sin³x: clamped at both ends, u''' ≠ 0 at the wall
            let u = x.sin().powi(2) + 0.3 * x.sin().powi(3);
            let d4 = -8.0 * (2.0 * x).cos() + 0.3 * (3.0 * x.sin() - 81.0 * (3.0 * x).sin()) / 4.0;
            (u, -p * d4 + q * (u + eps * u.powi(3)))
        }
        SystemSpec::Poisson2D => {
            let (sx, cx, sy, cy) = ((x / 2.0).sin(), (x / 2.0).cos(), (y / 2.0).sin(), (y / 2.0).cos());
            let u = sx * sy;
            let lap = -0.5 * u;
            let grad2 = 0.25 * (cx * cx * sy * sy + sx * sx * cy * cy);
            (u, -(1.0 + u * u) * lap - 2.0 * u * grad2)
        }
    }
}

pub fn sample(system: &SystemSpec, grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let axis = grid.axis();
    let mut u = Vec::new();
    let mut f = Vec::new();
    if grid.dim() == 1 {
        for &x in &axis {
            let (a, b) = manufactured(system, x, 0.0);
            u.push(a);
            f.push(b);
        }
    } else {
        for &y in &axis {
            for &x in &axis {
                let (a, b) = manufactured(system, x, y);
                u.push(a);
                f.push(b);
            }
        }
    }
    // boundary values are zero analytically; remove rounding noise such as sin(2π)
    let n = grid.n();
    for (k, v) in u.iter_mut().enumerate() {
        let (i, j) = (k % n, k / n);
        let on_edge = if grid.dim() == 1 { k == 0 || k == n - 1 } else { i == 0 || j == 0 || i == n - 1 || j == n - 1 };
        if on_edge {
            *v = 0.0;
        }
    }
    (u, f)
}

/// Max-norm error of the Newton solve against the exact solution, with the
/// final residual. Panics if the solve does not converge.
pub fn solve_error(system: &SystemSpec, grid: &Grid) -> (f64, f64) {
    let (exact, f) = sample(system, grid);
    let pair = solve_bvp(system, &f, grid, NewtonOptions::default()).unwrap();
    assert!(pair.converged, "{:?} n={} residual {:e}", system.id(), grid.n(), pair.residual_norm);
    let err = pair.u.iter().zip(&exact).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    (err, pair.residual_norm)
}

/// Observed order between two grids and the larger of the two residuals.
pub fn observed_order(system: &SystemSpec, coarse: Grid, fine: Grid) -> (f64, f64) {
    let (e1, r1) = solve_error(system, &coarse);
    let (e2, r2) = solve_error(system, &fine);
    let ratio = coarse.spacing() / fine.spacing();
    ((e1 / e2).ln() / ratio.ln(), r1.max(r2))
}

/// Systems with the grid pair used for their order check. The biharmonic
/// pair is coarse so its 1/h⁴ roundoff floor stays below the tolerance.
pub fn order_cases() -> [(SystemSpec, Grid, Grid); 4] {
    [
        (SystemSpec::cubic_helmholtz(), Grid::one_d(64).unwrap(), Grid::one_d(127).unwrap()),
        (SystemSpec::sturm_liouville(), Grid::one_d(64).unwrap(), Grid::one_d(127).unwrap()),
        (SystemSpec::biharmonic(), Grid::one_d(33).unwrap(), Grid::one_d(65).unwrap()),
        (SystemSpec::poisson_2d(), Grid::two_d(17).unwrap(), Grid::two_d(33).unwrap()),
    ]
}
