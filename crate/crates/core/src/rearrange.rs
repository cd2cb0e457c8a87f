//! Van Loan–Pitsianis rearrangement of a `pq x pq` matrix into a `p² x q²` one.
//!
//! Block `(i, j)` of `M` (the `q x q` submatrix at block-row `i`, block-column
//! `j`) becomes row `j·p + i` of `R(M)`, stored as `vec(M(i, j))ᵀ`. Rows thus
//! enumerate blocks column-major, matching the column-stacking `vec`, so that
//!
//! ```text
//! R(A ⊗ B) = vec(A) vec(B)ᵀ
//! ```
//!
//! and the nearest Kronecker product problem becomes a rank-one approximation.

use rayon::prelude::*;

use crate::error::{mismatch, Error, Result};
use crate::linalg::{ComplexMatrix, C64};

const TILE: usize = 32;

/// `R(M)` together with the blocking that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct RearrangedMatrix {
    p: usize,
    q: usize,
    data: ComplexMatrix,
}

impl RearrangedMatrix {
    /// Wraps a `p² x q²` matrix.
    pub fn new(p: usize, q: usize, data: ComplexMatrix) -> Result<Self> {
        if data.shape() != (p * p, q * q) {
            return Err(mismatch(
                "RearrangedMatrix::new",
                format!("({}, {})", p * p, q * q),
                format!("{:?}", data.shape()),
            ));
        }
        Ok(Self { p, q, data })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.data
    }
}

/// Position in `M` of the entry that lands at `(row, col)` of `R(M)` (0-based).
///
/// This is the closed-form index arithmetic of the element-parallel kernel:
/// with 1-based `P = col + 1` and `J = row + 1`,
///
/// ```text
/// L = P − q·⌊(P−1)/q⌋ + q·(J − p·⌊(J−1)/p⌋ − 1)
/// N = ⌈P/q⌉ + q·(⌈J/p⌉ − 1)
/// m = L + (N − 1)·pq
/// ```
///
/// and `m` is the 1-based index into the column-major `vec(M)`.
#[inline]
pub fn source_index(p: usize, q: usize, row: usize, col: usize) -> (usize, usize) {
    let big_p = col + 1;
    let big_j = row + 1;
    let l = big_p - q * ((big_p - 1) / q) + q * (big_j - p * ((big_j - 1) / p) - 1);
    let n = big_p.div_ceil(q) + q * (big_j.div_ceil(p) - 1);
    let m = l + (n - 1) * p * q;
    let dim = p * q;
    ((m - 1) % dim, (m - 1) / dim)
}

/// Inverse of [`source_index`]: where entry `(r, c)` of `M` lands in `R(M)`.
#[inline]
pub fn target_index(p: usize, q: usize, r: usize, c: usize) -> (usize, usize) {
    let (i, k) = (r / q, r % q);
    let (j, l) = (c / q, c % q);
    (j * p + i, l * q + k)
}

fn check_blocking(s: &ComplexMatrix, p: usize, q: usize) -> Result<()> {
    if !s.is_square() {
        return Err(Error::NotSquare {
            op: "rearrange",
            rows: s.rows(),
            cols: s.cols(),
        });
    }
    if p == 0 || q == 0 || s.rows() != p * q {
        return Err(mismatch(
            "rearrange",
            format!("{p}x{q} blocking of a square matrix"),
            format!("{} rows", s.rows()),
        ));
    }
    Ok(())
}

/// Computes `R(S)` for a `pq x pq` matrix `S`.
///
/// Each row of `R(S)` is the column-stacked `vec` of one `q x q` block, i.e. a
/// transpose of that block, so the copy runs over square tiles to keep both the
/// reads and the writes cache-local. Work is split into independent runs of
/// `TILE` block columns.
pub fn rearrange(s: &ComplexMatrix, p: usize, q: usize) -> Result<RearrangedMatrix> {
    check_blocking(s, p, q)?;
    let mut out = ComplexMatrix::try_zeros(p * p, q * q)?;
    fill_tiled(s.as_slice(), p, q, out.as_mut_slice());
    Ok(RearrangedMatrix { p, q, data: out })
}

/// [`rearrange`] into an existing buffer, which is reallocated only if its
/// blocking differs. Repeated estimates at one size then avoid touching fresh
/// memory on every call.
pub fn rearrange_into(
    s: &ComplexMatrix,
    p: usize,
    q: usize,
    out: &mut RearrangedMatrix,
) -> Result<()> {
    check_blocking(s, p, q)?;
    if (out.p, out.q) != (p, q) {
        *out = RearrangedMatrix {
            p,
            q,
            data: ComplexMatrix::try_zeros(p * p, q * q)?,
        };
    }
    fill_tiled(s.as_slice(), p, q, out.data.as_mut_slice());
    Ok(())
}

fn fill_tiled(src: &[C64], p: usize, q: usize, out: &mut [C64]) {
    let dim = p * q;
    out.par_chunks_mut(q * q)
        .enumerate()
        .for_each(|(row, block)| {
            let (i, j) = (row % p, row / p);
            block
                .par_chunks_mut(TILE * q)
                .enumerate()
                .for_each(|(run, dst)| {
                    let l0 = run * TILE;
                    let l_end = l0 + dst.len() / q;
                    for k0 in (0..q).step_by(TILE) {
                        for k in k0..(k0 + TILE).min(q) {
                            let s_row = &src[(i * q + k) * dim + j * q..];
                            for l in l0..l_end {
                                dst[(l - l0) * q + k] = s_row[l];
                            }
                        }
                    }
                });
        });
}

/// `R(S)` computed one output element at a time through [`source_index`].
///
/// This is the element-parallel formulation: every entry is an independent
/// gather, with no shared state. It produces the same matrix as [`rearrange`],
/// which is faster on CPUs because it reads `S` tile by tile.
pub fn rearrange_elementwise(s: &ComplexMatrix, p: usize, q: usize) -> Result<RearrangedMatrix> {
    check_blocking(s, p, q)?;
    let mut out = ComplexMatrix::try_zeros(p * p, q * q)?;
    let width = q * q;
    let src = s.as_slice();
    let dim = p * q;
    out.as_mut_slice()
        .par_iter_mut()
        .enumerate()
        .for_each(|(idx, slot)| {
            let (r, c) = source_index(p, q, idx / width, idx % width);
            *slot = src[r * dim + c];
        });
    Ok(RearrangedMatrix { p, q, data: out })
}

/// Inverse rearrangement: rebuilds the `pq x pq` matrix from `R(S)`.
pub fn unrearrange(r: &RearrangedMatrix) -> Result<ComplexMatrix> {
    let (p, q) = (r.p, r.q);
    if r.data.shape() != (p * p, q * q) {
        return Err(mismatch(
            "unrearrange",
            format!("({}, {})", p * p, q * q),
            format!("{:?}", r.data.shape()),
        ));
    }
    let dim = p * q;
    let mut out = ComplexMatrix::try_zeros(dim, dim)?;
    let src = r.data.as_slice();
    let width = q * q;
    out.as_mut_slice()
        .par_chunks_mut(dim)
        .enumerate()
        .for_each(|(row, dst)| {
            for (col, slot) in dst.iter_mut().enumerate() {
                let (rr, rc) = target_index(p, q, row, col);
                *slot = src[rr * width + rc];
            }
        });
    Ok(out)
}

/// `vec(A) vec(B)ᵀ` wrapped as a rearranged matrix; `unrearrange` of it is `A ⊗ B`.
pub fn rank_one(p: usize, q: usize, a: &[C64], b: &[C64]) -> Result<RearrangedMatrix> {
    if a.len() != p * p || b.len() != q * q {
        return Err(mismatch(
            "rank_one",
            format!("{} and {}", p * p, q * q),
            format!("{} and {}", a.len(), b.len()),
        ));
    }
    let data = ComplexMatrix::from_fn(p * p, q * q, |i, j| a[i] * b[j]);
    Ok(RearrangedMatrix { p, q, data })
}
