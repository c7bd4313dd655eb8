//! Inference with a trained model: solving new forcings through the latent
//! Green's matrix, predicting forcings, and exporting `L` and `G`.

use std::fs;
use std::path::Path;

use crate::autodiff::{DenseLu, Tensor};
use crate::datagen::io::Cursor;
use crate::eval::svg;
use crate::model::Model;
use crate::{Error, Result};

pub const MATRIX_MAGIC: &[u8; 4] = b"DGMX";

/// Factored operator of a model, reusable across queries.
pub struct Solver<'m> {
    model: &'m Model,
    lu: DenseLu,
    l: Tensor,
}

impl<'m> Solver<'m> {
    pub fn new(model: &'m Model) -> Result<Self> {
        let l = model.operator();
        let lu = DenseLu::factor(l.data(), model.latent())?;
        Ok(Self { model, lu, l })
    }

    fn check_len(&self, v: &[f64], what: &str) -> Result<()> {
        let n = self.model.input_len();
        if v.len() != n {
            return Err(Error::Shape(format!("{what} has {} values, expected length {n}", v.len())));
        }
        Ok(())
    }

    /// `v = G f` for a latent forcing.
    pub fn latent_solve(&self, f: &[f64]) -> Vec<f64> {
        self.lu.solve(f)
    }

    /// `f = L v` for a latent solution.
    pub fn latent_apply(&self, v: &[f64]) -> Vec<f64> {
        let m = self.model.latent();
        self.l.data().chunks(m).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    /// `u = ψ_u⁻¹(G φ_F(F))`.
    pub fn solve(&self, forcing: &[f64]) -> Result<Vec<f64>> {
        self.check_len(forcing, "forcing")?;
        let x = Tensor::new(&[1, forcing.len()], forcing.to_vec())?;
        let f = self.model.encode_f_batch(&x)?;
        let v = self.latent_solve(f.data());
        let v = Tensor::new(&[1, v.len()], v)?;
        Ok(self.model.decode_u_batch(&v)?.into_data())
    }

    /// `F = φ_F⁻¹(L ψ_u(u))`.
    pub fn predict_forcing(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u, "solution")?;
        let x = Tensor::new(&[1, u.len()], u.to_vec())?;
        let v = self.model.encode_u_batch(&x)?;
        let f = self.latent_apply(v.data());
        let f = Tensor::new(&[1, f.len()], f)?;
        Ok(self.model.decode_f_batch(&f)?.into_data())
    }
}

pub fn solve(model: &Model, forcing: &[f64]) -> Result<Vec<f64>> {
    Solver::new(model)?.solve(forcing)
}

pub fn predict_forcing(model: &Model, u: &[f64]) -> Result<Vec<f64>> {
    Solver::new(model)?.predict_forcing(u)
}

/// Mean over rows of `|L_ii| / Σ_{j≠i} |L_ij|`. Rows with no off-diagonal
/// mass count as [`DOMINANCE_MAX`], as does any larger ratio.
pub fn dominance_ratio(l: &[f64], m: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| l[i * m + j].abs()).sum();
        let r = if off > 0.0 { l[i * m + i].abs() / off } else { DOMINANCE_MAX };
        total += r.min(DOMINANCE_MAX);
    }
    total / m as f64
}

/// Sentinel for a diagonal operator.
pub const DOMINANCE_MAX: f64 = 1e12;

/// Matrix as CSV: one row per line, 17 significant digits, no header.
pub fn matrix_csv(data: &[f64], cols: usize) -> String {
    let mut s = String::new();
    for row in data.chunks(cols) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn parse_matrix_csv(text: &str) -> Result<(Vec<f64>, usize, usize)> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidInput(format!("line {}: {e}", i + 1)))?;
        if *cols.get_or_insert(row.len()) != row.len() {
            return Err(Error::InvalidInput(format!("line {} has {} columns", i + 1, row.len())));
        }
        data.extend(row);
        rows += 1;
    }
    Ok((data, rows, cols.unwrap_or(0)))
}

/// `"DGMX" | rows u32 | cols u32 | f64[rows·cols]`, little-endian.
pub fn matrix_bin(data: &[f64], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + data.len() * 8);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn parse_matrix_bin(bytes: &[u8]) -> Result<(Vec<f64>, usize, usize)> {
    let mut c = Cursor::new(bytes);
    if c.take(4, "magic")? != MATRIX_MAGIC {
        return Err(c.bad(0, "not a matrix file (bad magic)"));
    }
    let rows = c.u32("rows")? as usize;
    let cols = c.u32("cols")? as usize;
    let data = c.f64s(rows * cols, "matrix values")?;
    Ok((data, rows, cols))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSummary {
    pub latent: usize,
    pub dominance_l: f64,
    /// `max |LG − I|`.
    pub inverse_residual: f64,
}

/// Writes `L` and `G` as CSV, binary and SVG heatmaps into `dir`.
pub fn export_operator(model: &Model, dir: impl AsRef<Path>) -> Result<OperatorSummary> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let m = model.latent();
    let l = model.operator();
    let g = model.greens()?;
    let write = |name: &str, bytes: &[u8]| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    };
    for (name, t) in [("L", &l), ("G", &g)] {
        write(&format!("{name}.csv"), matrix_csv(t.data(), m).as_bytes())?;
        write(&format!("{name}.bin"), &matrix_bin(t.data(), m, m))?;
        let title = if name == "L" { "operator L" } else { "Green's matrix G = inverse of L" };
        write(&format!("{name}.svg"), svg::heatmap(title, t.data(), m, m).as_bytes())?;
    }
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            let v: f64 = (0..m).map(|k| l.data()[i * m + k] * g.data()[k * m + j]).sum();
            worst = worst.max((v - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    Ok(OperatorSummary { latent: m, dominance_l: dominance_ratio(l.data(), m), inverse_residual: worst })
}
