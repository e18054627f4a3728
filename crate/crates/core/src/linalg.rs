//! Small dense matrices over any [`Scalar`] (so dual numbers flow through
//! inverses and solves), plus `f64` least squares and symmetric eigenvalues
//! delegated to nalgebra.

use std::ops::{Index, IndexMut};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::expr::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Row-major data.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Mat { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul(&self, o: &Mat<T>) -> Self {
        assert_eq!(self.cols, o.rows);
        let mut out = Self::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..o.cols {
                    out[(i, j)] += a * o[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                let mut s = T::zero();
                for j in 0..self.cols {
                    s += self[(i, j)] * v[j];
                }
                s
            })
            .collect()
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn re(&self) -> Mat<f64> {
        self.map(|x| x.re())
    }

    /// Solves `self · X = rhs` by Gaussian elimination with partial pivoting
    /// on the real part. Returns `None` when a pivot falls below `tol`
    /// relative to the largest entry.
    pub fn solve(&self, rhs: &Mat<T>) -> Option<Mat<T>> {
        let n = self.rows;
        assert_eq!(n, self.cols);
        assert_eq!(n, rhs.rows);
        let mut a = self.clone();
        let mut b = rhs.clone();
        let scale = self
            .data
            .iter()
            .map(|x| x.re().abs())
            .fold(0.0_f64, f64::max);
        if scale == 0.0 {
            return None;
        }
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[(i, col)].re().abs().total_cmp(&a[(j, col)].re().abs()))
                .unwrap();
            if a[(piv, col)].re().abs() <= 1e-14 * scale {
                return None;
            }
            if piv != col {
                a.swap_rows(piv, col);
                b.swap_rows(piv, col);
            }
            let p = a[(col, col)];
            for r in col + 1..n {
                let f = a[(r, col)] / p;
                if f.re() == 0.0 && f == T::zero() {
                    continue;
                }
                for c in col..n {
                    let v = a[(col, c)];
                    a[(r, c)] -= f * v;
                }
                for c in 0..b.cols {
                    let v = b[(col, c)];
                    b[(r, c)] -= f * v;
                }
            }
        }
        for c in 0..b.cols {
            for r in (0..n).rev() {
                let mut s = b[(r, c)];
                for k in r + 1..n {
                    s -= a[(r, k)] * b[(k, c)];
                }
                b[(r, c)] = s / a[(r, r)];
            }
        }
        Some(b)
    }

    pub fn inverse(&self) -> Option<Self> {
        self.solve(&Self::identity(self.rows))
    }

    fn swap_rows(&mut self, i: usize, j: usize) {
        for c in 0..self.cols {
            self.data.swap(i * self.cols + c, j * self.cols + c);
        }
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl Mat<f64> {
    pub fn to_na(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)])
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn sym_eigenvalues(&self) -> Vec<f64> {
        let m = self.to_na();
        let s = (&m + m.transpose()) * 0.5;
        let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// 2-norm condition number via singular values.
    pub fn condition_number(&self) -> f64 {
        let sv = self.to_na().singular_values();
        let max = sv.max();
        let min = sv.min();
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

/// Result of a rank-revealing least-squares solve of `A x = b`.
#[derive(Clone, Debug)]
pub struct LstsqSolution {
    /// Minimum-norm least-squares solution.
    pub x: Vec<f64>,
    pub rank: usize,
    /// Orthonormal basis of the numerical nullspace, one vector per entry.
    pub nullspace: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    /// Max absolute residual `|A x − b|`.
    pub residual: f64,
}

/// Minimum-norm least squares via SVD; singular values below
/// `rel_tol · σ_max` are treated as zero.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> LstsqSolution {
    let cols = a.ncols();
    if a.nrows() == 0 || cols == 0 {
        return LstsqSolution {
            x: vec![0.0; cols],
            rank: 0,
            nullspace: (0..cols)
                .map(|j| (0..cols).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            singular_values: vec![],
            residual: b.amax(),
        };
    }
    // Pad to at least as many rows as columns so V is square.
    let padded;
    let a_use = if a.nrows() < cols {
        padded = a.clone().resize_vertically(cols, 0.0);
        &padded
    } else {
        a
    };
    let svd = a_use.clone().svd(true, true);
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let sv = &svd.singular_values;
    let smax = sv.max();
    let cut = rel_tol * smax;
    let mut x = DVector::zeros(cols);
    let mut rank = 0;
    let mut b_use = b.clone();
    if b_use.len() < a_use.nrows() {
        b_use = b_use.resize_vertically(a_use.nrows(), 0.0);
    }
    let mut nullspace = Vec::new();
    for k in 0..sv.len() {
        if sv[k] > cut && smax > 0.0 {
            rank += 1;
            let coef = u.column(k).dot(&b_use) / sv[k];
            x += vt.row(k).transpose() * coef;
        } else {
            nullspace.push(vt.row(k).iter().copied().collect());
        }
    }
    let residual = if b.is_empty() {
        0.0
    } else {
        (a * &x - b).amax()
    };
    LstsqSolution {
        x: x.iter().copied().collect(),
        rank,
        nullspace,
        singular_values: sv.iter().copied().collect(),
        residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Dual;

    #[test]
    fn inverse_roundtrip() {
        let a = Mat::from_fn(3, 3, |i, j| {
            if i == j {
                4.0
            } else {
                (i + 2 * j) as f64 * 0.3
            }
        });
        let inv = a.inverse().unwrap();
        let id = a.mul(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id[(i, j)] - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dual_inverse_matches_derivative_formula() {
        // d(A⁻¹) = −A⁻¹ dA A⁻¹
        let a0 = Mat::from_fn(2, 2, |i, j| [[2.0, 1.0], [0.5, 3.0]][i][j]);
        let da = Mat::from_fn(2, 2, |i, j| [[0.1, -0.2], [0.3, 0.4]][i][j]);
        let a = Mat::from_fn(2, 2, |i, j| Dual::new(a0[(i, j)], da[(i, j)]));
        let inv = a.inverse().unwrap();
        let i0 = a0.inverse().unwrap();
        let expect = i0.mul(&da).mul(&i0);
        for i in 0..2 {
            for j in 0..2 {
                assert!((inv[(i, j)].eps + expect[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn singular_is_detected() {
        let a = Mat::from_fn(2, 2, |i, _| i as f64 + 1.0);
        assert!(a.inverse().is_none());
    }

    #[test]
    fn lstsq_reports_nullspace() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let b = DVector::from_vec(vec![2.0, 3.0]);
        let s = lstsq(&a, &b, 1e-10);
        assert_eq!(s.rank, 2);
        assert_eq!(s.nullspace.len(), 1);
        assert!((s.nullspace[0][2].abs() - 1.0).abs() < 1e-12);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && s.x[2].abs() < 1e-12);
        assert!(s.residual < 1e-12);
    }
}
