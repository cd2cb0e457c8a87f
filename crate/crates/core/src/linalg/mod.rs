//! Dense complex matrices and the handful of decompositions the estimators need.
//!
//! Storage is row-major. The `vec` operator, however, stacks *columns*: for a
//! `p x q` matrix `N`, `vec(N)[j*p + i] == N[(i, j)]`. Every structured identity
//! in this crate (`vec(A B C) = (Cᵀ ⊗ A) vec(B)`, the rearrangement of a
//! Kronecker product into `vec(A) vec(B)ᵀ`) is stated against that convention.

mod eig;

pub use eig::{eig_truncate, hermitian_eig, EigenPairs};

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{mismatch, Error, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Relative tolerance used when checking that an input is Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    /// Like [`zeros`](Self::zeros) but reports allocation failure instead of aborting.
    pub fn try_zeros(rows: usize, cols: usize) -> Result<Self> {
        let len = rows
            .checked_mul(cols)
            .ok_or(Error::ResourceExhausted { bytes: usize::MAX })?;
        let mut data = Vec::new();
        data.try_reserve_exact(len)
            .map_err(|_| Error::ResourceExhausted {
                bytes: len.saturating_mul(std::mem::size_of::<C64>()),
            })?;
        data.resize(len, ZERO);
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = C64::new(v, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major entries, rejecting wrong lengths and NaN/Inf.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(mismatch("from_row_major", rows * cols, data.len()));
        }
        if let Some(index) = data.iter().position(|z| !z.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(mismatch("from_rows", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(rows.len(), cols, data)
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(rows: usize, columns: &[Vec<C64>]) -> Result<Self> {
        let cols = columns.len();
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(mismatch("from_columns", rows, c.len()));
            }
            for (i, &z) in c.iter().enumerate() {
                m.data[i * cols + j] = z;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows)
            .map(|i| self.data[i * self.cols + j])
            .collect()
    }

    /// Keeps the first `k` columns.
    pub fn leading_columns(&self, k: usize) -> ComplexMatrix {
        let k = k.min(self.cols);
        ComplexMatrix::from_fn(self.rows, k, |i, j| self[(i, j)])
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Matrix product. Output rows are computed in parallel; each entry is
    /// accumulated over the inner index in ascending order, so the result does
    /// not depend on the thread schedule.
    pub fn matmul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != rhs.rows {
            return Err(mismatch(
                "matmul",
                format!("rhs with {} rows", self.cols),
                rhs.rows,
            ));
        }
        let (n, m) = (self.cols, rhs.cols);
        let mut out = ComplexMatrix::zeros(self.rows, m);
        if m == 0 {
            return Ok(out);
        }
        out.data
            .par_chunks_mut(m)
            .enumerate()
            .for_each(|(i, out_row)| {
                let lhs_row = &self.data[i * n..(i + 1) * n];
                for (k, &a) in lhs_row.iter().enumerate() {
                    let rhs_row = &rhs.data[k * m..(k + 1) * m];
                    for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                        *o += a * b;
                    }
                }
            });
        Ok(out)
    }

    pub fn matvec(&self, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.cols {
            return Err(mismatch("matvec", self.cols, x.len()));
        }
        if self.cols == 0 {
            return Ok(vec![ZERO; self.rows]);
        }
        Ok(self
            .data
            .par_chunks(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn scale(&self, s: C64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> ComplexMatrix {
        self.scale(C64::new(s, 0.0))
    }

    pub fn add(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    fn zip_with(
        &self,
        rhs: &ComplexMatrix,
        op: &'static str,
        f: impl Fn(C64, C64) -> C64,
    ) -> Result<ComplexMatrix> {
        if self.shape() != rhs.shape() {
            return Err(mismatch(
                op,
                format!("{:?}", self.shape()),
                format!("{:?}", rhs.shape()),
            ));
        }
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols))
            .map(|i| self.data[i * self.cols + i])
            .sum()
    }

    /// `‖M − Mᴴ‖_F / ‖M‖_F`, zero for the zero matrix.
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut dev = 0.0;
        for i in 0..n {
            for j in 0..n {
                dev += (self.data[i * n + j] - self.data[j * n + i].conj()).norm_sqr();
            }
        }
        let scale = self.frobenius_norm();
        if scale == 0.0 {
            0.0
        } else {
            dev.sqrt() / scale
        }
    }

    /// `(M + Mᴴ) / 2`.
    pub fn hermitian_part(&self) -> ComplexMatrix {
        let n = self.rows;
        let mut out = self.clone();
        for i in 0..n {
            out.data[i * n + i] = C64::new(self.data[i * n + i].re, 0.0);
            for j in i + 1..n {
                let z = (self.data[i * n + j] + self.data[j * n + i].conj()) * 0.5;
                out.data[i * n + j] = z;
                out.data[j * n + i] = z.conj();
            }
        }
        out
    }

    pub(crate) fn require_hermitian(&self, op: &'static str) -> Result<()> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                op,
                rows: self.rows,
                cols: self.cols,
            });
        }
        let deviation = self.hermitian_deviation();
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(())
    }

    /// Column-stacking vectorization.
    pub fn vec(&self) -> Vec<C64> {
        let mut v = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                v.push(self.data[i * self.cols + j]);
            }
        }
        v
    }

    /// Inverse of [`vec`](Self::vec).
    pub fn unvec(v: &[C64], rows: usize, cols: usize) -> Result<ComplexMatrix> {
        if v.len() != rows * cols {
            return Err(mismatch("unvec", rows * cols, v.len()));
        }
        Ok(ComplexMatrix::from_fn(rows, cols, |i, j| v[j * rows + i]))
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (pa, qa) = a.shape();
    let (pb, qb) = b.shape();
    let mut out = ComplexMatrix::zeros(pa * pb, qa * qb);
    let width = qa * qb;
    for i in 0..pa {
        for j in 0..qa {
            let aij = a[(i, j)];
            for k in 0..pb {
                let row = (i * pb + k) * width + j * qb;
                for l in 0..qb {
                    out.data[row + l] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Kronecker product of two vectors.
pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter()
        .flat_map(|&x| b.iter().map(move |&y| x * y))
        .collect()
}

/// Outer product `u vᴴ`.
pub fn outer(u: &[C64], v: &[C64]) -> ComplexMatrix {
    ComplexMatrix::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj())
}

/// `uᴴ v`.
pub fn dot(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Cholesky factor `L` (lower triangular) with `M = L Lᴴ`.
pub fn cholesky(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    m.require_hermitian("cholesky")?;
    let n = m.rows();
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Singular);
        }
        let djj = d.sqrt();
        l[(j, j)] = C64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `M x = b` for Hermitian positive definite `M`.
pub fn solve_hpd(m: &ComplexMatrix, b: &[C64]) -> Result<Vec<C64>> {
    let l = cholesky(m)?;
    cholesky_solve(&l, b)
}

fn cholesky_solve(l: &ComplexMatrix, b: &[C64]) -> Result<Vec<C64>> {
    let n = l.rows();
    if b.len() != n {
        return Err(mismatch("solve", n, b.len()));
    }
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[(k, i)].conj() * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    Ok(y)
}

/// Inverse of a Hermitian positive definite matrix.
pub fn inverse_hpd(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let l = cholesky(m)?;
    let n = m.rows();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![ZERO; n];
        e[j] = ONE;
        cols.push(cholesky_solve(&l, &e)?);
    }
    Ok(ComplexMatrix::from_columns(n, &cols)?.hermitian_part())
}

/// Principal angles in radians, ascending, between the column spans of two
/// orthonormal bases. Computed from the sines, `(I − U Uᴴ) V`, so small angles
/// keep full relative accuracy.
pub fn principal_angles(u: &ComplexMatrix, v: &ComplexMatrix) -> Result<Vec<f64>> {
    if u.rows() != v.rows() {
        return Err(mismatch("principal_angles", u.rows(), v.rows()));
    }
    let (u, v) = if v.cols() <= u.cols() { (u, v) } else { (v, u) };
    if v.cols() == 0 {
        return Ok(Vec::new());
    }
    let resid = v.sub(&u.matmul(&u.adjoint().matmul(v)?)?)?;
    let gram = resid.adjoint().matmul(&resid)?.hermitian_part();
    let mut angles: Vec<f64> = hermitian_eig(&gram)?
        .values()
        .iter()
        .map(|&s2| s2.clamp(0.0, 1.0).sqrt().asin())
        .collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}
