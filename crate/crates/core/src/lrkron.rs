//! Sample covariance and the low-rank Kronecker (LR-Kron) alternating estimator.
//!
//! The estimator fits `A ⊗ B` to a sample covariance `S` in rearranged
//! coordinates, where the objective is `‖R(S) − a bᵀ‖_F` with `a = vec(A)` and
//! `b = vec(B)`. Each iteration is two least-squares half steps
//!
//! ```text
//! b ← Rᵀ a* / ‖a‖²
//! a ← R b* / ‖b‖²,   a ← vec(EIG_ra(unvec(a)))
//! ```
//!
//! so the only eigendecompositions inside the loop are `p x p`. The temporal
//! factor is truncated to rank `r_b` once, after the loop.

use rayon::prelude::*;

use crate::error::{mismatch, Error, Result};
use crate::linalg::{eig_truncate, hermitian_eig, norm, ComplexMatrix, EigenPairs, C64, ZERO};
use crate::rearrange::{rearrange, rearrange_into, RearrangedMatrix};

/// Partial sums inside matrix–vector products run over fixed-size runs, so the
/// reduction order is independent of the thread count.
const REDUCTION_CHUNK: usize = 4096;
const PSD_TOL: f64 = 1e-10;

/// `S = (1/n) Σ x_m x_mᴴ` over `n` training vectors of length `pq`.
#[derive(Clone, Debug)]
pub struct SampleCovariance {
    matrix: ComplexMatrix,
    n: usize,
    p: usize,
    q: usize,
}

impl SampleCovariance {
    /// Wraps an existing covariance after checking it is Hermitian and passes
    /// the `2 x 2` principal-minor test for positive semidefiniteness.
    pub fn from_matrix(matrix: ComplexMatrix, p: usize, q: usize, n: usize) -> Result<Self> {
        if p == 0 || q == 0 || matrix.shape() != (p * q, p * q) {
            return Err(mismatch(
                "SampleCovariance::from_matrix",
                format!("({0}, {0})", p * q),
                format!("{:?}", matrix.shape()),
            ));
        }
        matrix.require_hermitian("SampleCovariance::from_matrix")?;
        check_psd_minors(&matrix)?;
        let mut matrix = matrix;
        make_hermitian(&mut matrix);
        Ok(Self { matrix, n, p, q })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }
}

/// Builds the sample covariance of `training` (each vector `x = vec(Xᵀ)` of length `pq`).
pub fn sample_covariance(training: &[&[C64]], p: usize, q: usize) -> Result<SampleCovariance> {
    if training.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let dim = p * q;
    if dim == 0 {
        return Err(Error::InvalidParameter("p and q must be positive".into()));
    }
    if let Some(bad) = training.iter().find(|x| x.len() != dim) {
        return Err(mismatch("sample_covariance", dim, bad.len()));
    }
    let n = training.len();
    let inv_n = 1.0 / n as f64;
    let mut s = ComplexMatrix::try_zeros(dim, dim)?;
    s.as_mut_slice()
        .par_chunks_mut(dim)
        .enumerate()
        .for_each(|(i, row)| {
            for x in training {
                let xi = x[i];
                for (slot, xj) in row.iter_mut().zip(x.iter()) {
                    *slot += xi * xj.conj();
                }
            }
            for slot in row.iter_mut() {
                *slot *= inv_n;
            }
        });
    make_hermitian(&mut s);
    Ok(SampleCovariance { matrix: s, n, p, q })
}

/// Copies the conjugated upper triangle onto the lower one and zeroes diagonal imaginary parts.
fn make_hermitian(m: &mut ComplexMatrix) {
    let n = m.rows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in i + 1..n {
            m[(j, i)] = m[(i, j)].conj();
        }
    }
}

fn check_psd_minors(m: &ComplexMatrix) -> Result<()> {
    let n = m.rows();
    let scale = (0..n).fold(0.0f64, |acc, i| acc.max(m[(i, i)].re.abs()));
    for i in 0..n {
        let d = m[(i, i)].re;
        if d < -PSD_TOL * scale {
            return Err(Error::NotPsd(format!("diagonal entry {i} is {d:.3e}")));
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let lhs = m[(i, j)].norm_sqr();
            let rhs = m[(i, i)].re.max(0.0) * m[(j, j)].re.max(0.0);
            if lhs > rhs + PSD_TOL * scale * scale {
                return Err(Error::NotPsd(format!(
                    "principal minor ({i}, {j}) is negative"
                )));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LrKronConfig {
    /// `r_a`, rank budget of the spatial factor.
    pub spatial_rank: usize,
    /// `r_b`, rank of the final temporal factor.
    pub temporal_rank: usize,
    /// Stop once successive residuals differ by at most this much.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Iterations run before the stopping rule is consulted.
    pub min_iter: usize,
}

impl LrKronConfig {
    pub fn new(spatial_rank: usize, temporal_rank: usize) -> Self {
        Self {
            spatial_rank,
            temporal_rank,
            tolerance: 1e-4,
            max_iter: 100,
            min_iter: 0,
        }
    }

    pub fn tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    /// Forces at least `min_iter` iterations. The residual is flat near the
    /// optimum, so driving the factors to full precision needs more iterations
    /// than the residual-change rule alone grants.
    pub fn min_iter(mut self, min_iter: usize) -> Self {
        self.min_iter = min_iter;
        self
    }

    fn validate(&self, p: usize, q: usize) -> Result<()> {
        if self.spatial_rank == 0 || self.spatial_rank > p {
            return Err(Error::RankOutOfRange {
                rank: self.spatial_rank,
                max: p,
            });
        }
        if self.temporal_rank == 0 || self.temporal_rank > q {
            return Err(Error::RankOutOfRange {
                rank: self.temporal_rank,
                max: q,
            });
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "max_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Convergence {
    Converged,
    /// The iteration budget ran out; the estimate is the last iterate.
    MaxIterations,
}

/// Output of [`lr_kron_estimate`]: `Â`, `B̂` and the residual trace.
#[derive(Clone, Debug)]
pub struct KronCovEstimate {
    a_hat: ComplexMatrix,
    b_hat: ComplexMatrix,
    spatial_rank: usize,
    temporal_rank: usize,
    iterations: usize,
    residual_history: Vec<f64>,
    status: Convergence,
    spatial_eig: Option<EigenPairs>,
    temporal_eig: Option<EigenPairs>,
}

impl KronCovEstimate {
    /// Assembles an estimate from given factors, e.g. ones read back from disk.
    pub fn from_factors(
        a_hat: ComplexMatrix,
        b_hat: ComplexMatrix,
        spatial_rank: usize,
        temporal_rank: usize,
        iterations: usize,
        residual_history: Vec<f64>,
        status: Convergence,
    ) -> Result<Self> {
        a_hat.require_hermitian("KronCovEstimate")?;
        b_hat.require_hermitian("KronCovEstimate")?;
        if spatial_rank > a_hat.rows() || temporal_rank > b_hat.rows() {
            return Err(Error::RankOutOfRange {
                rank: spatial_rank.max(temporal_rank),
                max: a_hat.rows().min(b_hat.rows()),
            });
        }
        Ok(Self {
            a_hat,
            b_hat,
            spatial_rank,
            temporal_rank,
            iterations,
            residual_history,
            status,
            spatial_eig: None,
            temporal_eig: None,
        })
    }

    pub fn a_hat(&self) -> &ComplexMatrix {
        &self.a_hat
    }

    pub fn b_hat(&self) -> &ComplexMatrix {
        &self.b_hat
    }

    pub fn p(&self) -> usize {
        self.a_hat.rows()
    }

    pub fn q(&self) -> usize {
        self.b_hat.rows()
    }

    pub fn spatial_rank(&self) -> usize {
        self.spatial_rank
    }

    pub fn temporal_rank(&self) -> usize {
        self.temporal_rank
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn residual_history(&self) -> &[f64] {
        &self.residual_history
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }

    pub fn status(&self) -> Convergence {
        self.status
    }

    pub fn converged(&self) -> bool {
        self.status == Convergence::Converged
    }

    /// `Â ⊗ B̂`, materialized. Only sensible for small `pq`.
    pub fn product(&self) -> ComplexMatrix {
        crate::linalg::kron(&self.a_hat, &self.b_hat)
    }

    /// Leading `r_a` eigenvectors of `Â` (`p x r_a`).
    pub fn spatial_basis(&self) -> Result<ComplexMatrix> {
        match &self.spatial_eig {
            Some(e) => Ok(e.basis(self.spatial_rank)),
            None => Ok(hermitian_eig(&self.a_hat)?.basis(self.spatial_rank)),
        }
    }

    /// Leading `r_b` eigenvectors of `B̂` (`q x r_b`).
    pub fn temporal_basis(&self) -> Result<ComplexMatrix> {
        match &self.temporal_eig {
            Some(e) => Ok(e.basis(self.temporal_rank)),
            None => Ok(hermitian_eig(&self.b_hat)?.basis(self.temporal_rank)),
        }
    }
}

/// Initial spatial iterate `a₀ = R 1 / q²`: entry `(i, j)` of `unvec(a₀)` is the
/// mean of all entries of block `S(i, j)`.
pub fn lr_kron_init(r: &RearrangedMatrix) -> Result<Vec<C64>> {
    let q = r.q();
    let ones = vec![C64::new(1.0, 0.0); q * q];
    let mut a = r_times(r.matrix(), &ones)?;
    let scale = 1.0 / (q * q) as f64;
    for z in &mut a {
        *z *= scale;
    }
    Ok(a)
}

/// Runs LR-Kron on a sample covariance.
pub fn lr_kron_estimate(s: &SampleCovariance, cfg: &LrKronConfig) -> Result<KronCovEstimate> {
    cfg.validate(s.p, s.q)?;
    let r = rearrange(&s.matrix, s.p, s.q)?;
    estimate_rearranged(&r, cfg)
}

/// Keeps the `p² x q²` rearranged buffer alive between estimates of the same
/// size. Large buffers otherwise come back from the allocator as fresh pages,
/// and faulting them in can cost as much as the rearrangement itself.
#[derive(Debug, Default)]
pub struct LrKronWorkspace {
    r: Option<RearrangedMatrix>,
}

impl LrKronWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Same result as [`lr_kron_estimate`], reusing the buffer from the last call.
    pub fn estimate(
        &mut self,
        s: &SampleCovariance,
        cfg: &LrKronConfig,
    ) -> Result<KronCovEstimate> {
        cfg.validate(s.p, s.q)?;
        let r = match &mut self.r {
            Some(r) => {
                rearrange_into(&s.matrix, s.p, s.q, r)?;
                r
            }
            slot => slot.insert(rearrange(&s.matrix, s.p, s.q)?),
        };
        estimate_rearranged(r, cfg)
    }
}

/// Runs LR-Kron on an already rearranged covariance `R(S)`.
pub fn estimate_rearranged(r: &RearrangedMatrix, cfg: &LrKronConfig) -> Result<KronCovEstimate> {
    let (p, q) = (r.p(), r.q());
    cfg.validate(p, q)?;
    let rm = r.matrix();
    let r_norm = rm.frobenius_norm();
    if r_norm == 0.0 {
        return Ok(KronCovEstimate {
            a_hat: ComplexMatrix::zeros(p, p),
            b_hat: ComplexMatrix::zeros(q, q),
            spatial_rank: cfg.spatial_rank,
            temporal_rank: cfg.temporal_rank,
            iterations: 0,
            residual_history: vec![0.0],
            status: Convergence::Converged,
            spatial_eig: None,
            temporal_eig: None,
        });
    }

    let mut a = lr_kron_init(r)?;
    if norm(&a) == 0.0 {
        // All block sums vanish; fall back to block traces, which are nonzero for S ≠ 0.
        let id = ComplexMatrix::identity(q).vec();
        a = r_times(rm, &id)?;
        for z in &mut a {
            *z /= q as f64;
        }
    }

    // The residual of iterate k and the temporal half step of iteration k + 1
    // both read R against the same `a`, so they share one pass over R.
    let mut b = temporal_step(rm, &a, None)?.1;
    let mut spatial_eig = None;
    let mut history = Vec::new();
    let mut eta_prev = f64::INFINITY;
    let mut status = Convergence::MaxIterations;

    for k in 0..cfg.max_iter {
        let b_norm2 = norm_sqr(&b);
        if b_norm2 == 0.0 {
            return Err(Error::Degenerate("temporal iterate vanished"));
        }
        let b_conj: Vec<C64> = b.iter().map(|z| z.conj()).collect();
        let mut a_next = r_times(rm, &b_conj)?;
        scale_in_place(&mut a_next, 1.0 / b_norm2);

        let a_mat = ComplexMatrix::unvec(&a_next, p, p)?;
        let truncated = if cfg.spatial_rank == p {
            spatial_eig = None;
            a_mat.hermitian_part()
        } else {
            let e = hermitian_eig(&a_mat)?;
            let t = e.truncated(cfg.spatial_rank);
            spatial_eig = Some(e);
            t
        };
        a = truncated.vec();

        let last = k + 1 == cfg.max_iter;
        let (residual, b_next) = if last {
            (residual_norm(rm, &a, &b), Vec::new())
        } else {
            temporal_step(rm, &a, Some(&b))?
        };
        let eta = residual / r_norm;
        history.push(eta);
        if k + 1 >= cfg.min_iter && (eta_prev - eta).abs() <= cfg.tolerance {
            status = Convergence::Converged;
            break;
        }
        if !last {
            b = b_next;
        }
        eta_prev = eta;
    }

    let a_hat = ComplexMatrix::unvec(&a, p, p)?.hermitian_part();
    let b_mat = ComplexMatrix::unvec(&b, q, q)?;
    let (b_hat, temporal_eig) = if cfg.temporal_rank == q {
        (eig_truncate(&b_mat, q)?, None)
    } else {
        let e = hermitian_eig(&b_mat)?;
        (e.truncated(cfg.temporal_rank), Some(e))
    };

    Ok(KronCovEstimate {
        a_hat,
        b_hat,
        spatial_rank: cfg.spatial_rank,
        temporal_rank: cfg.temporal_rank,
        iterations: history.len(),
        residual_history: history,
        status,
        spatial_eig,
        temporal_eig,
    })
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn scale_in_place(v: &mut [C64], s: f64) {
    for z in v {
        *z *= s;
    }
}

/// `R v` with per-row partial sums over fixed runs, combined in run order.
fn r_times(r: &ComplexMatrix, v: &[C64]) -> Result<Vec<C64>> {
    if v.len() != r.cols() {
        return Err(mismatch("r_times", r.cols(), v.len()));
    }
    let cols = r.cols();
    let runs = cols.div_ceil(REDUCTION_CHUNK).max(1);
    let partial: Vec<C64> = (0..r.rows() * runs)
        .into_par_iter()
        .map(|t| {
            let (row, run) = (t / runs, t % runs);
            let lo = run * REDUCTION_CHUNK;
            let hi = (lo + REDUCTION_CHUNK).min(cols);
            let data = &r.row(row)[lo..hi];
            data.iter().zip(&v[lo..hi]).map(|(a, b)| a * b).sum()
        })
        .collect();
    Ok(partial
        .chunks(runs)
        .map(|c| c.iter().fold(ZERO, |acc, z| acc + z))
        .collect())
}

/// The temporal half step `Rᵀ a* / ‖a‖²` and, if `b` is given, `‖R − a bᵀ‖_F`
/// from the same pass. Each output is accumulated over rows in ascending order
/// and the residual is summed per column run, then over runs in order.
fn temporal_step(r: &ComplexMatrix, a: &[C64], b: Option<&[C64]>) -> Result<(f64, Vec<C64>)> {
    if a.len() != r.rows() {
        return Err(mismatch("temporal_step", r.rows(), a.len()));
    }
    let a_norm2 = norm_sqr(a);
    if a_norm2 == 0.0 {
        return Err(Error::Degenerate("spatial iterate vanished"));
    }
    let a_conj: Vec<C64> = a.iter().map(|z| z.conj()).collect();
    let cols = r.cols();
    let mut out = vec![ZERO; cols];
    let partial: Vec<f64> = out
        .par_chunks_mut(REDUCTION_CHUNK)
        .enumerate()
        .map(|(run, dst)| {
            let lo = run * REDUCTION_CHUNK;
            let mut resid = 0.0;
            for (row, &w) in a_conj.iter().enumerate() {
                let src = &r.row(row)[lo..lo + dst.len()];
                for (o, &x) in dst.iter_mut().zip(src) {
                    *o += x * w;
                }
                if let Some(b) = b {
                    let ar = a[row];
                    resid += src
                        .iter()
                        .zip(&b[lo..lo + dst.len()])
                        .map(|(x, y)| (x - ar * y).norm_sqr())
                        .sum::<f64>();
                }
            }
            resid
        })
        .collect();
    scale_in_place(&mut out, 1.0 / a_norm2);
    Ok((partial.iter().sum::<f64>().sqrt(), out))
}

/// `‖R − a bᵀ‖_F`, reduced in a fixed order.
fn residual_norm(r: &ComplexMatrix, a: &[C64], b: &[C64]) -> f64 {
    let cols = r.cols();
    let runs = cols.div_ceil(REDUCTION_CHUNK).max(1);
    let partial: Vec<f64> = (0..r.rows() * runs)
        .into_par_iter()
        .map(|t| {
            let (row, run) = (t / runs, t % runs);
            let lo = run * REDUCTION_CHUNK;
            let hi = (lo + REDUCTION_CHUNK).min(cols);
            let ar = a[row];
            r.row(row)[lo..hi]
                .iter()
                .zip(&b[lo..hi])
                .map(|(x, y)| (x - ar * y).norm_sqr())
                .sum::<f64>()
        })
        .collect();
    partial.iter().sum::<f64>().sqrt()
}
