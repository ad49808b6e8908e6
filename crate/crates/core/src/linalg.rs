//! Symmetric envelope (skyline) storage and an LDLᵀ elimination on it.
//!
//! Row `i` stores columns `first[i]..=i`. Symmetric elimination never
//! creates fill outside this profile, so lattice boxes in row-major order
//! factor in `O(n · bandwidth²)` instead of `O(n³)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative pivot threshold used for positivity certificates.
pub const PIVOT_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    n: usize,
    first: Vec<usize>,
    start: Vec<usize>,
    val: Vec<f64>,
}

impl Envelope {
    /// Zero matrix with the given row profile (`first[i] <= i`).
    pub fn zeros(first: Vec<usize>) -> Self {
        let n = first.len();
        let mut start = Vec::with_capacity(n + 1);
        let mut total = 0;
        for (i, &f) in first.iter().enumerate() {
            assert!(f <= i, "profile start beyond diagonal");
            start.push(total);
            total += i - f + 1;
        }
        start.push(total);
        Self { n, first, start, val: vec![0.0; total] }
    }

    /// Builds the envelope of a symmetric matrix given by its entries.
    /// Entries may be listed once or twice per pair; `(i, j)` and `(j, i)`
    /// both refer to the same stored value and are summed.
    pub fn from_entries(n: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut first: Vec<usize> = (0..n).collect();
        for &(i, j, _) in entries {
            let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
            first[hi] = first[hi].min(lo);
        }
        let mut env = Self::zeros(first);
        for &(i, j, v) in entries {
            env.add(i, j, v);
        }
        env
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in 0..=i {
                if m[(i, j)] != 0.0 || i == j {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_entries(n, &entries)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries.
    pub fn stored(&self) -> usize {
        self.val.len()
    }

    pub fn first(&self, i: usize) -> usize {
        self.first[i]
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        self.start[i] + j - self.first[i]
    }

    /// Symmetric read; zero outside the profile.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if lo < self.first[hi] {
            0.0
        } else {
            self.val[self.idx(hi, lo)]
        }
    }

    /// Adds `v` to the symmetric pair `(i, j)`; panics outside the profile.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        assert!(lo >= self.first[hi], "entry ({i}, {j}) outside envelope");
        let k = self.idx(hi, lo);
        self.val[k] += v;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in self.first[i]..=i {
                let v = self.val[self.idx(i, j)];
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            for j in self.first[i]..i {
                let v = self.val[self.idx(i, j)];
                y[i] += v * x[j];
                y[j] += v * x[i];
            }
            y[i] += self.val[self.idx(i, i)] * x[i];
        }
        y
    }

    /// Right-looking symmetric elimination. At step `k` the callback sees
    /// the current Schur-complement diagonal `a_kk` and the column below it
    /// as `(row, value)` pairs, and returns the pivot `D_k` to use. The
    /// callback may pick a pivot different from `a_kk`; the sampler uses
    /// that to inject the diagonal it has just drawn.
    pub fn eliminate<F>(mut self, mut pivot: F) -> Result<Ldl>
    where
        F: FnMut(usize, f64, &[(usize, f64)]) -> Result<f64>,
    {
        let n = self.n;
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            if self.first[i] < i {
                buckets[self.first[i]].push(i);
            }
        }
        let mut active: Vec<usize> = Vec::new();
        let mut column: Vec<(usize, f64)> = Vec::new();
        for k in 0..n {
            active.retain(|&i| i != k);
            if !buckets[k].is_empty() {
                active.append(&mut buckets[k]);
                active.sort_unstable();
            }
            column.clear();
            column.extend(active.iter().map(|&i| (i, self.val[self.idx(i, k)])));
            let dk = self.val[self.idx(k, k)];
            let x = pivot(k, dk, &column)?;
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::Factorization { index: k, pivot: x, threshold: 0.0 });
            }
            let kk = self.idx(k, k);
            self.val[kk] = x;
            let inv = 1.0 / x;
            for (a, &(ia, ca)) in column.iter().enumerate() {
                if ca == 0.0 {
                    continue;
                }
                let base = self.start[ia] - self.first[ia];
                let s = ca * inv;
                for &(ib, cb) in &column[..=a] {
                    self.val[base + ib] -= s * cb;
                }
            }
            for &(i, c) in &column {
                let p = self.idx(i, k);
                self.val[p] = c * inv;
            }
        }
        Ok(Ldl { env: self })
    }

    /// Standard LDLᵀ with a relative pivot threshold against the original
    /// diagonal; failure means the matrix is not (numerically) positive definite.
    pub fn factor(self, rel_threshold: f64) -> Result<Ldl> {
        let diag: Vec<f64> = (0..self.n).map(|i| self.get(i, i).abs()).collect();
        self.eliminate(|k, akk, _| {
            let threshold = rel_threshold * diag[k];
            if akk > threshold && akk.is_finite() {
                Ok(akk)
            } else {
                Err(Error::Factorization { index: k, pivot: akk, threshold })
            }
        })
    }
}

/// Unit lower-triangular `L` (strictly below the diagonal) and `D` (on the
/// diagonal), sharing the envelope of the factored matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Ldl {
    env: Envelope,
}

impl Ldl {
    pub fn dim(&self) -> usize {
        self.env.n
    }

    pub fn pivot(&self, k: usize) -> f64 {
        self.env.val[self.env.idx(k, k)]
    }

    pub fn pivots(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.pivot(k)).collect()
    }

    pub fn log_det(&self) -> f64 {
        (0..self.dim()).map(|k| self.pivot(k).ln()).sum()
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let env = &self.env;
        let n = env.n;
        for i in 0..n {
            let base = env.start[i] - env.first[i];
            let mut s = b[i];
            for j in env.first[i]..i {
                s -= env.val[base + j] * b[j];
            }
            b[i] = s;
        }
        for (i, bi) in b.iter_mut().enumerate() {
            *bi /= env.val[env.idx(i, i)];
        }
        for i in (0..n).rev() {
            let base = env.start[i] - env.first[i];
            let bi = b[i];
            for j in env.first[i]..i {
                b[j] -= env.val[base + j] * bi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Column `i` of the inverse.
    pub fn inverse_column(&self, i: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.dim()];
        e[i] = 1.0;
        self.solve_in_place(&mut e);
        e
    }

    /// Dense inverse, symmetrized.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = DMatrix::zeros(n, n);
        for i in 0..n {
            let col = self.inverse_column(i);
            inv.set_column(i, &nalgebra::DVector::from_vec(col));
        }
        (&inv + inv.transpose()) * 0.5
    }
}
