//! Small dense matrices.
//!
//! Everything here is sized for parameter-dimension problems (p up to a
//! handful) plus the occasional lattice covariance factor, so the storage is a
//! plain row-major `Vec<f64>` with no blocking.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use num_traits::Float;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Builds a matrix from row-major data.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n * m);
        for r in rows {
            let r = r.as_ref();
            if r.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: n,
            cols: m,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// LU factorisation with partial pivoting.
    pub fn lu(&self) -> Result<Lu> {
        Lu::new(self)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.lu()?.solve(b))
    }

    pub fn inverse(&self) -> Result<Matrix> {
        let lu = self.lu()?;
        let n = self.rows;
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = lu.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    fn new(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                expected: a.rows,
                got: a.cols,
            });
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs();
        if !(scale > 0.0) || !a.is_finite() {
            return Err(Error::SingularJacobian);
        }
        let tiny = scale * f64::EPSILON * (n as f64) * 16.0;
        for k in 0..n {
            let (piv, pval) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pval <= tiny {
                return Err(Error::SingularJacobian);
            }
            if piv != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let d = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / d;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        lu.data[i * n + j] -= f * lu.data[k * n + j];
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }
}

/// A square matrix that is symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    /// Wraps `m`, rejecting it unless it is square and symmetric to a relative
    /// tolerance of `1e-12`.
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() || m.rows == 0 {
            return Err(Error::DimensionMismatch {
                expected: m.rows.max(1),
                got: m.cols,
            });
        }
        let tol = 1e-12 * m.max_abs().max(f64::MIN_POSITIVE);
        if m.max_asymmetry() > tol {
            return Err(Error::domain("matrix is not symmetric"));
        }
        Ok(Self(Self::symmetrize(m)))
    }

    /// `(M + Mᵀ)/2`.
    pub fn from_symmetrized(m: Matrix) -> Self {
        assert!(m.is_square(), "symmetrizing a non-square matrix");
        Self(Self::symmetrize(m))
    }

    fn symmetrize(mut m: Matrix) -> Matrix {
        let n = m.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n))
    }

    pub fn diag(values: &[f64]) -> Self {
        Self(Matrix::diag(values))
    }

    pub fn order(&self) -> usize {
        self.0.rows
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.0.matvec(x))
    }

    /// `Aᵀ S A`.
    pub fn congruence(&self, a: &Matrix) -> Result<SymMatrix> {
        let sa = self.0.matmul(a)?;
        Ok(SymMatrix::from_symmetrized(a.transpose().matmul(&sa)?))
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

/// Factorises a symmetric positive definite matrix.
///
/// A pivot at or below `1e-12 · trace(A)/order` is reported as
/// [`Error::NotPositiveDefinite`].
pub fn cholesky_spd(a: &SymMatrix) -> Result<Cholesky> {
    let n = a.order();
    let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
    let tol = 1e-12 * trace.abs() / n as f64;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lj = &l.data[j * n..j * n + j];
        let d = a[(j, j)] - lj.iter().map(|v| v * v).sum::<f64>();
        if !(d > tol) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let djj = d.sqrt();
        l.data[j * n + j] = djj;
        for i in (j + 1)..n {
            let (head, tail) = l.data.split_at_mut(i * n);
            let lj = &head[j * n..j * n + j];
            let li = &tail[..j];
            let s = a[(i, j)] - dot(li, lj);
            tail[j] = s / djj;
        }
    }
    Ok(Cholesky { l })
}

impl Cholesky {
    pub fn l(&self) -> &Matrix {
        &self.l
    }

    pub fn order(&self) -> usize {
        self.l.rows
    }

    /// Solves `L y = b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows;
        let mut y = b.to_vec();
        for i in 0..n {
            let s = y[i] - dot(&self.l.row(i)[..i], &y[..i]);
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn backward(&self, y: &[f64]) -> Vec<f64> {
        let n = self.l.rows;
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.backward(&self.forward(b))
    }

    /// `L z`, used to colour standard normal draws.
    pub fn lower_mul(&self, z: &[f64]) -> Vec<f64> {
        let n = self.l.rows;
        (0..n).map(|i| dot(&self.l.row(i)[..=i], &z[..=i])).collect()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> SymMatrix {
        let n = self.l.rows;
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        SymMatrix::from_symmetrized(inv)
    }
}
