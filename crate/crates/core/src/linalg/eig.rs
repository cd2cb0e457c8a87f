//! Cyclic Jacobi eigensolver for complex Hermitian matrices.
//!
//! Each rotation first removes the phase of the pivot `a_pq` with a diagonal
//! unitary and then applies the classical real Jacobi rotation, so the whole
//! step is one unitary `G` acting on columns/rows `p` and `q`.

use super::{ComplexMatrix, C64, ZERO};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-14;
/// Eigenvalues closer than this (relative to the spectral radius) count as ties.
const TIE_TOL: f64 = 1e-12;
/// Negative eigenvalues smaller than this (relative) are rounding noise.
const CLAMP_TOL: f64 = 1e-10;

/// Eigenvalues in decreasing order with their orthonormal eigenvectors as columns.
///
/// Each eigenvector is phase-normalized so that its first dominant component
/// is real and positive, which makes subspaces reproducible across runs.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    values: Vec<f64>,
    vectors: ComplexMatrix,
}

impl EigenPairs {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> &ComplexMatrix {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, i: usize) -> Vec<C64> {
        self.vectors.column(i)
    }

    /// Orthonormal basis of the leading `r` eigenvectors (`n x r`).
    pub fn basis(&self, r: usize) -> ComplexMatrix {
        self.vectors.leading_columns(r)
    }

    /// `Σ_{i<r} σ_i u_i u_iᴴ`, with near-zero negative eigenvalues clamped to zero.
    pub fn truncated(&self, r: usize) -> ComplexMatrix {
        let n = self.vectors.rows();
        let radius = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut out = ComplexMatrix::zeros(n, n);
        for k in 0..r.min(self.len()) {
            let mut sigma = self.values[k];
            if sigma < 0.0 && -sigma <= CLAMP_TOL * radius {
                sigma = 0.0;
            }
            if sigma == 0.0 {
                continue;
            }
            let u = self.vector(k);
            for i in 0..n {
                let ui = u[i] * sigma;
                for j in 0..n {
                    out[(i, j)] += ui * u[j].conj();
                }
            }
        }
        out.hermitian_part()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.truncated(self.len())
    }
}

/// Eigendecomposition of a Hermitian matrix.
///
/// The input must be Hermitian to a relative tolerance of `1e-8`; it is
/// symmetrized as `(M + Mᴴ)/2` before the sweeps start.
pub fn hermitian_eig(m: &ComplexMatrix) -> Result<EigenPairs> {
    m.require_hermitian("hermitian_eig")?;
    let n = m.rows();
    let mut a = m.hermitian_part();
    let mut v = ComplexMatrix::identity(n);
    let scale = a.frobenius_norm();

    if n > 1 && scale > 0.0 {
        for _ in 0..MAX_SWEEPS {
            if off_diagonal_norm(&a) <= OFF_DIAGONAL_TOL * scale {
                break;
            }
            for p in 0..n - 1 {
                for q in p + 1..n {
                    rotate(&mut a, &mut v, p, q);
                }
            }
        }
    }

    let raw_values: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    let mut dominant = Vec::with_capacity(n);
    for k in 0..n {
        dominant.push(normalize_phase(&mut v, k));
    }
    let order = sorted_order(&raw_values, &dominant);

    let values = order.iter().map(|&k| raw_values[k]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(EigenPairs { values, vectors })
}

/// Truncation to the first `r` principal components, `1 <= r <= n`.
///
/// When `r == n` nothing is discarded and the Hermitian part of `M` is
/// returned without decomposing it.
pub fn eig_truncate(m: &ComplexMatrix, r: usize) -> Result<ComplexMatrix> {
    m.require_hermitian("eig_truncate")?;
    let n = m.rows();
    if r == 0 || r > n {
        return Err(Error::RankOutOfRange { rank: r, max: n });
    }
    if r == n {
        return Ok(m.hermitian_part());
    }
    Ok(hermitian_eig(m)?.truncated(r))
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let r = apq.norm();
    if r == 0.0 || !r.is_finite() {
        return;
    }
    let phase = apq / r;
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (2.0 * r);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    // G = [[c, s], [-s·e^{-iφ}, c·e^{-iφ}]] on (p, q).
    let g_qp = -phase.conj() * s;
    let g_qq = phase.conj() * c;

    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * c + akq * g_qp;
        a[(k, q)] = akp * s + akq * g_qq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = apk * c + aqk * g_qp.conj();
        a[(q, k)] = apk * s + aqk * g_qq.conj();
    }
    a[(p, p)] = C64::new(app - t * r, 0.0);
    a[(q, q)] = C64::new(aqq + t * r, 0.0);
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * c + vkq * g_qp;
        v[(k, q)] = vkp * s + vkq * g_qq;
    }
}

/// Rotates column `k` so its first dominant entry is real positive; returns that entry's row.
fn normalize_phase(v: &mut ComplexMatrix, k: usize) -> usize {
    let n = v.rows();
    let max = (0..n).fold(0.0f64, |m, i| m.max(v[(i, k)].norm()));
    let lead = (0..n)
        .find(|&i| v[(i, k)].norm() >= max * (1.0 - 1e-8))
        .unwrap_or(0);
    let z = v[(lead, k)];
    if z.norm() > 0.0 {
        let rot = z.conj() / z.norm();
        for i in 0..n {
            v[(i, k)] *= rot;
        }
        v[(lead, k)] = C64::new(v[(lead, k)].norm(), 0.0);
    }
    lead
}

fn sorted_order(values: &[f64], dominant: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&x, &y| values[y].total_cmp(&values[x]).then(x.cmp(&y)));
    let radius = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = TIE_TOL * radius;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[start]] - values[order[end]] <= tol {
            end += 1;
        }
        order[start..end].sort_by_key(|&k| (dominant[k], k));
        start = end;
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{outer, ONE};
    use crate::test_util::{random_hermitian, random_psd, rng};

    #[test]
    fn diagonal_input_sorts_and_permutes() {
        let m = ComplexMatrix::from_diag(&[1.0, 3.0, 2.0]);
        let e = hermitian_eig(&m).unwrap();
        assert_eq!(e.values(), &[3.0, 2.0, 1.0]);
        let expected = [1usize, 2, 0];
        for (col, &row) in expected.iter().enumerate() {
            for i in 0..3 {
                let want = if i == row { ONE } else { ZERO };
                assert_eq!(e.vectors()[(i, col)], want);
            }
        }
    }

    #[test]
    fn rank_one_outer_product() {
        let h = vec![ONE, C64::new(0.0, 1.0)];
        let m = outer(&h, &h);
        let e = hermitian_eig(&m).unwrap();
        assert!((e.values()[0] - 2.0).abs() < 1e-14);
        assert!(e.values()[1].abs() < 1e-14);
        let u = e.vector(0);
        let s = 1.0 / 2f64.sqrt();
        assert!((u[0] - C64::new(s, 0.0)).norm() < 1e-14);
        assert!((u[1] - C64::new(0.0, s)).norm() < 1e-14);
    }

    #[test]
    fn ties_broken_by_dominant_index() {
        let m = ComplexMatrix::from_diag(&[2.0, 5.0, 2.0, 2.0]);
        let e = hermitian_eig(&m).unwrap();
        let leads: Vec<usize> = (0..4)
            .map(|k| (0..4).find(|&i| e.vectors()[(i, k)].norm() > 0.5).unwrap())
            .collect();
        assert_eq!(leads, vec![1, 0, 2, 3]);
    }

    #[test]
    fn orthonormal_and_trace_preserving() {
        let mut r = rng(10);
        for n in [2, 5, 9, 16] {
            let m = random_hermitian(&mut r, n);
            let e = hermitian_eig(&m).unwrap();
            let u = e.vectors();
            let gram = u.adjoint().matmul(u).unwrap();
            let err = gram
                .sub(&ComplexMatrix::identity(n))
                .unwrap()
                .frobenius_norm();
            assert!(err <= 1e-10, "n={n} orthonormality {err}");
            let tr: f64 = e.values().iter().sum();
            assert!((tr - m.trace().re).abs() <= 1e-10 * m.frobenius_norm());
            let rec = e.reconstruct();
            let rel = rec.sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
            assert!(rel <= 1e-9, "n={n} reconstruction {rel}");
            assert!(e.values().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rejects_non_hermitian_and_non_square() {
        let mut m = ComplexMatrix::identity(2);
        m[(0, 1)] = ONE;
        assert!(matches!(hermitian_eig(&m), Err(Error::NotHermitian { .. })));
        assert!(matches!(
            hermitian_eig(&ComplexMatrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn truncate_examples() {
        let m = ComplexMatrix::from_diag(&[3.0, 1.0]);
        assert_eq!(
            eig_truncate(&m, 1).unwrap(),
            ComplexMatrix::from_diag(&[3.0, 0.0])
        );
        let mut r = rng(11);
        let psd = random_psd(&mut r, 4, 4);
        let full = eig_truncate(&psd, 4).unwrap();
        assert!(full.sub(&psd).unwrap().frobenius_norm() <= 1e-12 * psd.frobenius_norm());
        assert!(matches!(
            eig_truncate(&psd, 0),
            Err(Error::RankOutOfRange { .. })
        ));
        assert!(matches!(
            eig_truncate(&psd, 5),
            Err(Error::RankOutOfRange { .. })
        ));
    }

    #[test]
    fn truncate_is_idempotent_and_low_rank() {
        let mut r = rng(12);
        for _ in 0..5 {
            let m = random_psd(&mut r, 6, 6);
            let t = eig_truncate(&m, 2).unwrap();
            let tt = eig_truncate(&t, 2).unwrap();
            assert!(tt.sub(&t).unwrap().frobenius_norm() <= 1e-10 * t.frobenius_norm());
            let vals = hermitian_eig(&t).unwrap();
            assert!(vals.values()[2].abs() <= 1e-10 * vals.values()[0]);
            assert!(vals
                .values()
                .iter()
                .all(|&v| v >= -1e-10 * vals.values()[0]));
        }
    }
}
