//! Banded matrices with an LU factorization using partial pivoting.
//!
//! Storage reserves `kl` extra super-diagonals for pivoting fill-in, the same
//! layout idea as LAPACK's `gbtrf`: row `i` stores columns
//! `i - kl ..= i + ku + kl`.

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl, "({i},{j}) outside band");
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku + self.kl {
            return 0.0;
        }
        self.data[self.slot(i, j)]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    /// `y = A x` using the original band (only valid before factorization).
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku + 1).min(self.n);
                (lo..hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Factorizes in place and returns the factors.
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let kl = self.kl;
        let reach = self.ku + self.kl;
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular { pivot: k });
            }
            piv[k] = p;
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.slot(k, j);
                    let b = self.slot(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(k, k)];
            let len = last_col - k;
            let row_k = self.slot(k, k) + 1;
            for i in k + 1..=last_row {
                let sik = self.slot(i, k);
                let l = self.data[sik] / pivot;
                self.data[sik] = l;
                if l != 0.0 {
                    // row k (columns k+1..=last_col) is contiguous and precedes row i
                    let (head, tail) = self.data.split_at_mut(sik + 1);
                    let src = &head[row_k..row_k + len];
                    for (dst, s) in tail[..len].iter_mut().zip(src) {
                        *dst -= l * s;
                    }
                }
            }
        }
        Ok(BandLu { a: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    a: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let a = &self.a;
        let n = a.n;
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            for i in k + 1..=(k + a.kl).min(n - 1) {
                x[i] -= a.get(i, k) * xk;
            }
        }
        let reach = a.ku + a.kl;
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..=(k + reach).min(n - 1) {
                s -= a.get(k, j) * x[j];
            }
            x[k] = s / a.get(k, k);
        }
        x
    }
}
