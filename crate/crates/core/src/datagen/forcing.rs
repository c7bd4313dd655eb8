use std::f64::consts::PI;
use std::str::FromStr;

use super::grid::Grid;
use crate::{Error, Result};

/// Dimension-free forcing family tag, as accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Gaussian,
    Cosine,
    CubicA,
    CubicB,
}

impl Family {
    pub fn is_cubic(&self) -> bool {
        matches!(self, Family::CubicA | Family::CubicB)
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Family::Gaussian),
            "cosine" => Ok(Family::Cosine),
            "cubic-a" | "cubica" => Ok(Family::CubicA),
            "cubic-b" | "cubicb" => Ok(Family::CubicB),
            other => Err(Error::InvalidInput(format!("unknown forcing family '{other}'"))),
        }
    }
}

/// Parses a comma-separated family list. `cubic` expands to both cubic families.
pub fn parse_families(list: &str) -> Result<Vec<Family>> {
    let mut out = Vec::new();
    for tok in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        if tok.eq_ignore_ascii_case("cubic") {
            out.extend([Family::CubicA, Family::CubicB]);
        } else {
            out.push(tok.parse()?);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("no forcing families given".into()));
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// A closed-form forcing function with its grid parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForcingSpec {
    /// `a exp(−(x−b)² / 2c²)`
    Gaussian1D { a: f64, b: f64, c: f64 },
    /// `α cos(β x)`
    Cosine1D { alpha: f64, beta: f64 },
    /// `γ (x−π)³`
    CubicA1D { gamma: f64 },
    /// `γ (x−π)³ + ζ (x−π)² + ψ`
    CubicB1D { gamma: f64, zeta: f64, psi: f64 },
    Gaussian2D { a: f64, bx: f64, by: f64, c: f64 },
    Cosine2D { alpha: f64, beta_x: f64, beta_y: f64 },
    CubicA2D { gamma_x: f64, gamma_y: f64 },
    CubicB2D { gamma_x: f64, gamma_y: f64, zeta_x: f64, zeta_y: f64, psi: f64 },
}

impl ForcingSpec {
    pub fn dim(&self) -> u8 {
        match self {
            ForcingSpec::Gaussian1D { .. }
            | ForcingSpec::Cosine1D { .. }
            | ForcingSpec::CubicA1D { .. }
            | ForcingSpec::CubicB1D { .. } => 1,
            _ => 2,
        }
    }

    pub fn family(&self) -> Family {
        match self {
            ForcingSpec::Gaussian1D { .. } | ForcingSpec::Gaussian2D { .. } => Family::Gaussian,
            ForcingSpec::Cosine1D { .. } | ForcingSpec::Cosine2D { .. } => Family::Cosine,
            ForcingSpec::CubicA1D { .. } | ForcingSpec::CubicA2D { .. } => Family::CubicA,
            ForcingSpec::CubicB1D { .. } | ForcingSpec::CubicB2D { .. } => Family::CubicB,
        }
    }

    pub fn is_cubic(&self) -> bool {
        self.family().is_cubic()
    }

    /// Family code used in the dataset file.
    pub fn family_code(&self) -> u8 {
        match self {
            ForcingSpec::Gaussian1D { .. } => 0,
            ForcingSpec::Cosine1D { .. } => 1,
            ForcingSpec::CubicA1D { .. } => 2,
            ForcingSpec::CubicB1D { .. } => 3,
            ForcingSpec::Gaussian2D { .. } => 4,
            ForcingSpec::Cosine2D { .. } => 5,
            ForcingSpec::CubicA2D { .. } => 6,
            ForcingSpec::CubicB2D { .. } => 7,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            ForcingSpec::Gaussian1D { a, b, c } => vec![a, b, c],
            ForcingSpec::Cosine1D { alpha, beta } => vec![alpha, beta],
            ForcingSpec::CubicA1D { gamma } => vec![gamma],
            ForcingSpec::CubicB1D { gamma, zeta, psi } => vec![gamma, zeta, psi],
            ForcingSpec::Gaussian2D { a, bx, by, c } => vec![a, bx, by, c],
            ForcingSpec::Cosine2D { alpha, beta_x, beta_y } => vec![alpha, beta_x, beta_y],
            ForcingSpec::CubicA2D { gamma_x, gamma_y } => vec![gamma_x, gamma_y],
            ForcingSpec::CubicB2D { gamma_x, gamma_y, zeta_x, zeta_y, psi } => {
                vec![gamma_x, gamma_y, zeta_x, zeta_y, psi]
            }
        }
    }

    pub fn from_code(code: u8, p: &[f64]) -> Result<Self> {
        let expect = |k: usize| -> Result<()> {
            if p.len() != k {
                return Err(Error::InvalidInput(format!(
                    "forcing family {code} takes {k} parameters, got {}",
                    p.len()
                )));
            }
            Ok(())
        };
        let spec = match code {
            0 => {
                expect(3)?;
                ForcingSpec::Gaussian1D { a: p[0], b: p[1], c: p[2] }
            }
            1 => {
                expect(2)?;
                ForcingSpec::Cosine1D { alpha: p[0], beta: p[1] }
            }
            2 => {
                expect(1)?;
                ForcingSpec::CubicA1D { gamma: p[0] }
            }
            3 => {
                expect(3)?;
                ForcingSpec::CubicB1D { gamma: p[0], zeta: p[1], psi: p[2] }
            }
            4 => {
                expect(4)?;
                ForcingSpec::Gaussian2D { a: p[0], bx: p[1], by: p[2], c: p[3] }
            }
            5 => {
                expect(3)?;
                ForcingSpec::Cosine2D { alpha: p[0], beta_x: p[1], beta_y: p[2] }
            }
            6 => {
                expect(2)?;
                ForcingSpec::CubicA2D { gamma_x: p[0], gamma_y: p[1] }
            }
            7 => {
                expect(5)?;
                ForcingSpec::CubicB2D {
                    gamma_x: p[0],
                    gamma_y: p[1],
                    zeta_x: p[2],
                    zeta_y: p[3],
                    psi: p[4],
                }
            }
            _ => return Err(Error::InvalidInput(format!("unknown forcing family code {code}"))),
        };
        Ok(spec)
    }

    /// Value at a single point; `y` is ignored for 1D families.
    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        match *self {
            ForcingSpec::Gaussian1D { a, b, c } => a * (-(x - b).powi(2) / (2.0 * c * c)).exp(),
            ForcingSpec::Cosine1D { alpha, beta } => alpha * (beta * x).cos(),
            ForcingSpec::CubicA1D { gamma } => gamma * (x - PI).powi(3),
            ForcingSpec::CubicB1D { gamma, zeta, psi } => {
                let s = x - PI;
                gamma * s.powi(3) + zeta * s * s + psi
            }
            ForcingSpec::Gaussian2D { a, bx, by, c } => {
                a * ((-(x - bx).powi(2) - (y - by).powi(2)) / (2.0 * c * c)).exp()
            }
            ForcingSpec::Cosine2D { alpha, beta_x, beta_y } => {
                alpha * (beta_x * x).cos() * (beta_y * y).cos()
            }
            ForcingSpec::CubicA2D { gamma_x, gamma_y } => {
                gamma_x * (x - PI).powi(3) + gamma_y * (y - PI).powi(3)
            }
            ForcingSpec::CubicB2D { gamma_x, gamma_y, zeta_x, zeta_y, psi } => {
                let (sx, sy) = (x - PI, y - PI);
                gamma_x * sx.powi(3) + gamma_y * sy.powi(3) + zeta_x * sx * sx + zeta_y * sy * sy + psi
            }
        }
    }

    /// Samples the forcing at every node of `grid` (row-major in 2D).
    pub fn evaluate(&self, grid: &Grid) -> Result<Vec<f64>> {
        if self.dim() != grid.dim() {
            return Err(Error::Shape(format!(
                "{}D forcing on a {}D grid",
                self.dim(),
                grid.dim()
            )));
        }
        let axis = grid.axis();
        if grid.dim() == 1 {
            Ok(axis.iter().map(|&x| self.value_at(x, 0.0)).collect())
        } else {
            let mut out = Vec::with_capacity(grid.len());
            for &y in &axis {
                for &x in &axis {
                    out.push(self.value_at(x, y));
                }
            }
            Ok(out)
        }
    }
}

/// `start + k·step` for `k = 0..count`, without accumulating rounding.
fn ladder(start: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start + k as f64 * step).collect()
}

fn amplitudes() -> Vec<f64> {
    vec![-25.0, -20.0, -15.0, -10.0, -5.0, 5.0, 10.0, 15.0, 20.0, 25.0]
}

fn widths() -> Vec<f64> {
    ladder(0.1, 0.2, 25)
}

fn cubic_gammas_1d() -> Vec<f64> {
    ladder(0.01, 0.02, 15)
}

fn cubic_gammas_2d() -> Vec<f64> {
    (0..4).map(|k| 0.01 + 0.28 * k as f64 / 3.0).collect()
}

fn offsets() -> Vec<f64> {
    ladder(-5.0, 1.0, 11)
}

/// Full Cartesian parameter grids for the requested families, in
/// lexicographic parameter order, family by family in the order given.
pub fn enumerate_forcings(dim: u8, families: &[Family]) -> Result<Vec<ForcingSpec>> {
    if dim != 1 && dim != 2 {
        return Err(Error::InvalidInput(format!("forcing dimension must be 1 or 2, got {dim}")));
    }
    let mut out = Vec::new();
    for fam in families {
        match (dim, fam) {
            (1, Family::Gaussian) => {
                let centers: Vec<f64> = (0..20).map(|k| 2.0 * PI * k as f64 / 19.0).collect();
                for a in amplitudes() {
                    for &b in &centers {
                        for c in widths() {
                            out.push(ForcingSpec::Gaussian1D { a, b, c });
                        }
                    }
                }
            }
            (1, Family::Cosine) => {
                for alpha in ladder(1.0, 0.1, 91) {
                    for beta in ladder(1.0, 0.05, 81) {
                        out.push(ForcingSpec::Cosine1D { alpha, beta });
                    }
                }
            }
            (1, Family::CubicA) => {
                for gamma in cubic_gammas_1d() {
                    out.push(ForcingSpec::CubicA1D { gamma });
                }
            }
            (1, Family::CubicB) => {
                for gamma in cubic_gammas_1d() {
                    for zeta in ladder(0.01, 0.02, 25) {
                        for psi in offsets() {
                            out.push(ForcingSpec::CubicB1D { gamma, zeta, psi });
                        }
                    }
                }
            }
            (2, Family::Gaussian) => {
                let centers: Vec<f64> = (1..=5).map(|k| k as f64 * PI / 3.0).collect();
                for a in amplitudes() {
                    for &bx in &centers {
                        for &by in &centers {
                            for c in widths() {
                                out.push(ForcingSpec::Gaussian2D { a, bx, by, c });
                            }
                        }
                    }
                }
            }
            (2, Family::Cosine) => {
                let betas = ladder(1.0, 0.5, 9);
                for alpha in ladder(1.0, 0.1, 91) {
                    for &beta_x in &betas {
                        for &beta_y in &betas {
                            out.push(ForcingSpec::Cosine2D { alpha, beta_x, beta_y });
                        }
                    }
                }
            }
            (2, Family::CubicA) => {
                let g = cubic_gammas_2d();
                for &gamma_x in &g {
                    for &gamma_y in &g {
                        out.push(ForcingSpec::CubicA2D { gamma_x, gamma_y });
                    }
                }
            }
            (2, Family::CubicB) => {
                let g = cubic_gammas_2d();
                let z = ladder(0.01, 0.06, 5);
                for &gamma_x in &g {
                    for &gamma_y in &g {
                        for &zeta_x in &z {
                            for &zeta_y in &z {
                                for psi in offsets() {
                                    out.push(ForcingSpec::CubicB2D { gamma_x, gamma_y, zeta_x, zeta_y, psi });
                                }
                            }
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
    }
    Ok(out)
}
