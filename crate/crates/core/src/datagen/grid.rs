use std::f64::consts::PI;

use crate::{Error, Result};

/// Uniform node-inclusive grid on `[0, 2π]` (1D) or `[0, 2π]²` (2D).
///
/// 2D vectors are stored row-major: `y` is the outer index, `x` the inner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    dim: u8,
    n: usize,
}

impl Grid {
    pub const DEFAULT_1D: usize = 128;
    pub const DEFAULT_2D: usize = 64;

    pub fn new(dim: u8, n: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidInput(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if n < 3 {
            return Err(Error::InvalidInput(format!("grid needs at least 3 nodes per axis, got {n}")));
        }
        Ok(Self { dim, n })
    }

    pub fn one_d(n: usize) -> Result<Self> {
        Self::new(1, n)
    }

    pub fn two_d(n: usize) -> Result<Self> {
        Self::new(2, n)
    }

    pub fn dim(&self) -> u8 {
        self.dim
    }

    /// Nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of nodes (length of a solution vector).
    pub fn len(&self) -> usize {
        if self.dim == 1 {
            self.n
        } else {
            self.n * self.n
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / (self.n - 1) as f64
    }

    /// Node coordinates along one axis, first node 0 and last node exactly 2π.
    pub fn axis(&self) -> Vec<f64> {
        let last = (self.n - 1) as f64;
        (0..self.n).map(|i| 2.0 * PI * i as f64 / last).collect()
    }

    /// Number of interior (unknown) nodes.
    pub fn interior_len(&self) -> usize {
        if self.dim == 1 {
            self.n - 2
        } else {
            (self.n - 2) * (self.n - 2)
        }
    }

    pub fn check_vector(&self, v: &[f64], what: &str) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::Shape(format!(
                "{what} has length {} but the grid has {} nodes",
                v.len(),
                self.len()
            )));
        }
        Ok(())
    }

    /// Copies interior values of a full nodal vector into a packed vector.
    pub fn interior(&self, full: &[f64]) -> Vec<f64> {
        let n = self.n;
        if self.dim == 1 {
            full[1..n - 1].to_vec()
        } else {
            let mut out = Vec::with_capacity(self.interior_len());
            for j in 1..n - 1 {
                out.extend_from_slice(&full[j * n + 1..j * n + n - 1]);
            }
            out
        }
    }

    /// Expands a packed interior vector to a full nodal vector with zero boundary.
    pub fn expand(&self, inner: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut full = vec![0.0; self.len()];
        if self.dim == 1 {
            full[1..n - 1].copy_from_slice(inner);
        } else {
            let m = n - 2;
            for j in 1..n - 1 {
                full[j * n + 1..j * n + n - 1].copy_from_slice(&inner[(j - 1) * m..j * m]);
            }
        }
        full
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_are_exact() {
        let g = Grid::one_d(128).unwrap();
        let x = g.axis();
        assert_eq!(x[0], 0.0);
        assert_eq!(x[127], 2.0 * PI);
        assert!((x[1] - g.spacing()).abs() < 1e-15);
    }

    #[test]
    fn interior_expand_roundtrip_2d() {
        let g = Grid::two_d(6).unwrap();
        let inner: Vec<f64> = (0..g.interior_len()).map(|i| i as f64 + 1.0).collect();
        let full = g.expand(&inner);
        assert_eq!(full[0], 0.0);
        assert_eq!(full[6 + 1], 1.0);
        assert_eq!(g.interior(&full), inner);
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(Grid::new(3, 10).is_err());
        assert!(Grid::new(1, 2).is_err());
    }
}
