//! Banded matrices with an in-place LU factorization (no pivoting).
//!
//! Every system assembled by the solvers is an identity-dominated shift of the
//! Dirichlet Laplacian, i.e. a diagonally dominant M-matrix or a small
//! perturbation of one, so the factorization is run without row exchanges and
//! the band structure is preserved.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn identity(n: usize, bw: usize) -> Self {
        let mut m = Self::zeros(n, bw);
        for i in 0..n {
            m.add(i, i, 1.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw, "entry ({i},{j}) outside band {}", self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let k = self.idx(i, j);
        self.data[k] += value;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.bw);
            let hi = (i + self.bw + 1).min(self.n);
            *yi = (lo..hi).zip(&x[lo..hi]).map(|(j, xj)| self.data[self.idx(i, j)] * xj).sum();
        }
        y
    }

    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        let bw = self.bw;
        let width = 2 * bw + 1;
        for k in 0..n {
            let pivot = self.data[k * width + bw];
            if !pivot.is_finite() || pivot.abs() < 1e-300 {
                return Err(Error::numerical(format!(
                    "zero pivot {pivot:e} at row {k} of banded LU"
                )));
            }
            let hi = (k + bw + 1).min(n);
            for i in (k + 1)..hi {
                let ik = i * width + (k + bw - i);
                let l = self.data[ik] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.data[ik] = l;
                for j in (k + 1)..hi {
                    let kj = k * width + (j + bw - k);
                    let ij = i * width + (j + bw - i);
                    self.data[ij] -= l * self.data[kj];
                }
            }
        }
        Ok(BandedLu { lu: self })
    }
}

/// LU factors of a [`BandedMatrix`], stored in place.
#[derive(Debug, Clone)]
pub struct BandedLu {
    lu: BandedMatrix,
}

impl BandedLu {
    pub fn dim(&self) -> usize {
        self.lu.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.lu.n;
        let bw = self.lu.bw;
        let width = 2 * bw + 1;
        let d = &self.lu.data;
        assert_eq!(b.len(), n);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = b[i];
            for j in lo..i {
                s -= d[i * width + (j + bw - i)] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw + 1).min(n);
            let mut s = b[i];
            for j in (i + 1)..hi {
                s -= d[i * width + (j + bw - i)] * b[j];
            }
            b[i] = s / d[i * width + bw];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
