//! Small dense Cholesky factorization stored as packed lower-triangular rows.
//!
//! Row `i` holds `i + 1` entries, so appending a training point extends the
//! factor by one row without touching the existing ones.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    data: Vec<f64>,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Cholesky {
    /// Factorizes a symmetric matrix given by `entry(i, j)` for `j <= i`.
    pub fn factor(n: usize, mut entry: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut chol = Self {
            n: 0,
            data: Vec::with_capacity(row_start(n)),
        };
        let mut row = Vec::with_capacity(n);
        for i in 0..n {
            row.clear();
            row.extend((0..=i).map(|j| entry(i, j)));
            chol.push_row(&row)?;
        }
        Ok(chol)
    }

    /// Factorizes a dense row-major `n x n` matrix.
    pub fn from_dense(n: usize, a: &[f64]) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        Self::factor(n, |i, j| a[i * n + j])
    }

    /// Appends one row/column to the factored matrix. `row` holds the new
    /// off-diagonal covariances followed by the diagonal entry.
    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        let i = self.n;
        assert_eq!(row.len(), i + 1, "row length must be n + 1");
        let start = self.data.len();
        self.data.extend_from_slice(row);
        for j in 0..i {
            let (head, new_row) = self.data.split_at_mut(start);
            let rj = &head[row_start(j)..row_start(j) + j + 1];
            let s = new_row[j] - dot(&new_row[..j], &rj[..j]);
            new_row[j] = s / rj[j];
        }
        let new_row = &self.data[start..];
        let d = row[i] - dot(&new_row[..i], &new_row[..i]);
        if !(d > 0.0) || !d.is_finite() {
            self.data.truncate(start);
            return Err(Error::NotPositiveDefinite { pivot: i });
        }
        self.data[start + i] = d.sqrt();
        self.n += 1;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[row_start(i)..row_start(i) + i + 1]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.data[row_start(i) + j]
        }
    }

    /// ln |A| = 2 Σ ln L_ii.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.row(i)[i].ln()).sum::<f64>()
    }

    /// Solves L v = b in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let r = self.row(i);
            b[i] = (b[i] - dot(&r[..i], &b[..i])) / r[i];
        }
    }

    /// Solves Lᵀ x = b in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        for i in (0..self.n).rev() {
            let r = self.row(i);
            b[i] /= r[i];
            let xi = b[i];
            for (bj, lij) in b[..i].iter_mut().zip(&r[..i]) {
                *bj -= lij * xi;
            }
        }
    }

    /// Solves A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    /// Reconstructs L Lᵀ as a dense row-major matrix.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = dot(&self.row(i)[..=j], &self.row(j)[..=j]);
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        a
    }
}
