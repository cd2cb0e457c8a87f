//! Steering vectors, STAP filters, SINR and detection images.
//!
//! Data vectors use the cube convention `x = vec(Xᵀ)`: the `p x q` slice is
//! flattened row by row, so entry `c·q + t` is channel `c`, pulse `t`. Under
//! that convention `(F_A ⊗ F_B) x` is the row-major flattening of `F_A X F_Bᵀ`,
//! which is how the Kronecker filter is applied without forming a `pq x pq`
//! matrix.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{mismatch, Error, Result};
use crate::linalg::{dot, inverse_hpd, kron_vec, ComplexMatrix, C64, ZERO};
use crate::lrkron::KronCovEstimate;

const ORTHONORMAL_TOL: f64 = 1e-10;

/// Default phase slope `κ` in `θ_i(f) = κ f (i − 1)`.
pub const DEFAULT_KAPPA: f64 = 0.5;

/// Target signature `d = a(f) ⊗ b(f) / ‖a(f) ⊗ b(f)‖`.
#[derive(Clone, Debug, PartialEq)]
pub struct SteeringVector {
    doppler: f64,
    spatial: Vec<C64>,
    temporal: Vec<C64>,
}

impl SteeringVector {
    /// `a_i = exp(j2π κ f (i−1))` and `b_i = exp(j2π f (i−1)) / √q`.
    pub fn new(doppler: f64, p: usize, q: usize, kappa: f64) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::InvalidParameter(format!(
                "steering vector needs p, q ≥ 1, got p={p} q={q}"
            )));
        }
        if !doppler.is_finite() || !kappa.is_finite() {
            return Err(Error::InvalidParameter(
                "non-finite Doppler or phase slope".into(),
            ));
        }
        let spatial = phase_ramp(kappa * doppler, p, 1.0);
        let temporal = phase_ramp(doppler, q, 1.0 / (q as f64).sqrt());
        Ok(Self {
            doppler,
            spatial,
            temporal,
        })
    }

    pub fn doppler(&self) -> f64 {
        self.doppler
    }

    /// `a(f)`, with first entry exactly 1.
    pub fn spatial(&self) -> &[C64] {
        &self.spatial
    }

    /// `b(f)`, unit norm.
    pub fn temporal(&self) -> &[C64] {
        &self.temporal
    }

    /// The unit-norm space-time vector `d`.
    pub fn full(&self) -> Vec<C64> {
        let scale = 1.0 / (self.spatial.len() as f64).sqrt();
        kron_vec(&self.spatial, &self.temporal)
            .into_iter()
            .map(|z| z * scale)
            .collect()
    }
}

/// `scale · exp(j2π slope i)` for `i = 0..n`.
fn phase_ramp(slope: f64, n: usize, scale: f64) -> Vec<C64> {
    (0..n)
        .map(|i| C64::from_polar(scale, 2.0 * PI * slope * i as f64))
        .collect()
}

/// Unit-norm temporal steering vector `b(f)`.
pub fn temporal_steering(doppler: f64, q: usize) -> Vec<C64> {
    phase_ramp(doppler, q, 1.0 / (q as f64).sqrt())
}

/// Unit-norm spatial candidate `h` with phase slope `g` (a point of the `κf` grid).
pub fn spatial_candidate(g: f64, p: usize) -> Vec<C64> {
    phase_ramp(g, p, 1.0 / (p as f64).sqrt())
}

/// `n` equally spaced points `k/n` on `[0, 1)`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 / n as f64).collect()
}

/// Spatial candidates `h` for every grid point.
pub fn spatial_candidates(grid: &[f64], p: usize) -> Vec<Vec<C64>> {
    grid.iter().map(|&g| spatial_candidate(g, p)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterKind {
    /// `Σ⁻¹`.
    Optimal,
    /// `I − (U_A U_Aᴴ) ⊗ (U_B U_Bᴴ)`.
    ClassicalLowRank,
    /// `(I − U_A U_Aᴴ) ⊗ (I − U_B U_Bᴴ)`.
    Kron,
}

#[derive(Clone, Debug)]
enum Operator {
    Dense(ComplexMatrix),
    Classical {
        ua: ComplexMatrix,
        ub: ComplexMatrix,
    },
    Kron {
        ua: ComplexMatrix,
        ub: ComplexMatrix,
    },
    /// `I − U Uᴴ` for an unstructured `pq x r` basis.
    Subspace(ComplexMatrix),
}

/// A linear STAP filter `F` on `C^{pq}`. Projection filters are stored through
/// their bases; only the optimal filter is dense.
#[derive(Clone, Debug)]
pub struct StapFilter {
    p: usize,
    q: usize,
    op: Operator,
}

fn check_orthonormal(u: &ComplexMatrix, what: &'static str) -> Result<()> {
    let gram = u.adjoint().matmul(u)?;
    let dev = gram
        .sub(&ComplexMatrix::identity(u.cols()))?
        .frobenius_norm();
    if dev > ORTHONORMAL_TOL * (u.cols().max(1) as f64) {
        return Err(Error::InvalidParameter(format!(
            "{what} basis is not orthonormal (deviation {dev:.3e})"
        )));
    }
    Ok(())
}

impl StapFilter {
    pub fn identity(p: usize, q: usize) -> Self {
        Self::kron(ComplexMatrix::zeros(p, 0), ComplexMatrix::zeros(q, 0))
            .expect("empty bases are orthonormal")
    }

    /// Wraps an arbitrary `pq x pq` operator.
    pub fn dense(f: ComplexMatrix, p: usize, q: usize) -> Result<Self> {
        if f.shape() != (p * q, p * q) {
            return Err(mismatch(
                "StapFilter::dense",
                format!("({0}, {0})", p * q),
                format!("{:?}", f.shape()),
            ));
        }
        Ok(Self {
            p,
            q,
            op: Operator::Dense(f),
        })
    }

    /// `F = Σ⁻¹` for a Hermitian positive definite `Σ`.
    pub fn optimal(sigma: &ComplexMatrix, p: usize, q: usize) -> Result<Self> {
        if sigma.shape() != (p * q, p * q) {
            return Err(mismatch(
                "StapFilter::optimal",
                format!("({0}, {0})", p * q),
                format!("{:?}", sigma.shape()),
            ));
        }
        sigma.require_hermitian("StapFilter::optimal")?;
        Self::dense(inverse_hpd(sigma)?, p, q)
    }

    /// `F = I − (U_A U_Aᴴ) ⊗ (U_B U_Bᴴ)`.
    pub fn classical(ua: ComplexMatrix, ub: ComplexMatrix) -> Result<Self> {
        check_orthonormal(&ua, "spatial")?;
        check_orthonormal(&ub, "temporal")?;
        let (p, q) = (ua.rows(), ub.rows());
        Ok(Self {
            p,
            q,
            op: Operator::Classical { ua, ub },
        })
    }

    /// `F = (I − U_A U_Aᴴ) ⊗ (I − U_B U_Bᴴ)`. An empty basis leaves that axis unfiltered.
    pub fn kron(ua: ComplexMatrix, ub: ComplexMatrix) -> Result<Self> {
        check_orthonormal(&ua, "spatial")?;
        check_orthonormal(&ub, "temporal")?;
        let (p, q) = (ua.rows(), ub.rows());
        Ok(Self {
            p,
            q,
            op: Operator::Kron { ua, ub },
        })
    }

    /// `F = I − U Uᴴ` for an orthonormal `pq x r` basis `U`, e.g. the leading
    /// eigenvectors of a sample covariance (unstructured low-rank STAP).
    pub fn subspace(u: ComplexMatrix, p: usize, q: usize) -> Result<Self> {
        if u.rows() != p * q {
            return Err(mismatch("StapFilter::subspace", p * q, u.rows()));
        }
        check_orthonormal(&u, "clutter")?;
        Ok(Self {
            p,
            q,
            op: Operator::Subspace(u),
        })
    }

    /// Projection filter of the given kind from an LR-Kron estimate. With
    /// `temporal_projection` off, `U_B` is left empty, so the Kronecker filter
    /// only removes the spatial clutter subspace.
    pub fn from_estimate(
        kind: FilterKind,
        est: &KronCovEstimate,
        temporal_projection: bool,
    ) -> Result<Self> {
        let ua = est.spatial_basis()?;
        let ub = if temporal_projection {
            est.temporal_basis()?
        } else {
            ComplexMatrix::zeros(est.q(), 0)
        };
        match kind {
            FilterKind::Kron => Self::kron(ua, ub),
            FilterKind::ClassicalLowRank => Self::classical(ua, ub),
            FilterKind::Optimal => Err(Error::InvalidParameter(
                "the optimal filter needs a full covariance, not subspaces".into(),
            )),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.p * self.q
    }

    /// `F x`.
    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        let (p, q) = (self.p, self.q);
        if x.len() != p * q {
            return Err(mismatch("StapFilter::apply", p * q, x.len()));
        }
        Ok(match &self.op {
            Operator::Dense(f) => dense_apply(f, x),
            Operator::Kron { ua, ub } => {
                let mut y = x.to_vec();
                project_out_rows(&mut y, ua, p, q);
                project_out_columns(&mut y, ub, p, q);
                y
            }
            Operator::Classical { ua, ub } => {
                let mut proj = x.to_vec();
                keep_rows(&mut proj, ua, p, q);
                keep_columns(&mut proj, ub, p, q);
                x.iter().zip(&proj).map(|(a, b)| a - b).collect()
            }
            Operator::Subspace(u) => {
                let coef: Vec<C64> = (0..u.cols())
                    .map(|k| (0..u.rows()).map(|i| u[(i, k)].conj() * x[i]).sum())
                    .collect();
                (0..x.len())
                    .map(|i| x[i] - (0..u.cols()).map(|k| u[(i, k)] * coef[k]).sum::<C64>())
                    .collect()
            }
        })
    }

    /// Weight vector `w = F d`.
    pub fn weights(&self, d: &[C64]) -> Result<Vec<C64>> {
        self.apply(d)
    }

    /// Filter output `y = (F d)ᴴ x`.
    pub fn output(&self, d: &[C64], x: &[C64]) -> Result<C64> {
        let w = self.weights(d)?;
        if x.len() != w.len() {
            return Err(mismatch("StapFilter::output", w.len(), x.len()));
        }
        Ok(dot(&w, x))
    }

    /// The filter as a dense matrix, column by column. For small sizes only.
    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        let n = self.dim();
        let mut cols = Vec::with_capacity(n);
        let mut e = vec![ZERO; n];
        for j in 0..n {
            e[j] = C64::new(1.0, 0.0);
            cols.push(self.apply(&e)?);
            e[j] = ZERO;
        }
        ComplexMatrix::from_columns(n, &cols)
    }
}

fn dense_apply(f: &ComplexMatrix, x: &[C64]) -> Vec<C64> {
    (0..f.rows())
        .map(|i| f.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// `X ← X − U (Uᴴ X)` on the `p x q` row-major slice.
fn project_out_rows(x: &mut [C64], u: &ComplexMatrix, p: usize, q: usize) {
    let mut kept = x.to_vec();
    keep_rows(&mut kept, u, p, q);
    for (a, b) in x.iter_mut().zip(&kept) {
        *a -= b;
    }
}

/// `X ← X − (X U*) Uᵀ`, i.e. `X (I − U Uᴴ)ᵀ`.
fn project_out_columns(x: &mut [C64], u: &ComplexMatrix, p: usize, q: usize) {
    let mut kept = x.to_vec();
    keep_columns(&mut kept, u, p, q);
    for (a, b) in x.iter_mut().zip(&kept) {
        *a -= b;
    }
}

/// `X ← U (Uᴴ X)`.
fn keep_rows(x: &mut [C64], u: &ComplexMatrix, p: usize, q: usize) {
    let r = u.cols();
    let mut coef = vec![ZERO; r * q];
    for k in 0..r {
        for c in 0..p {
            let w = u[(c, k)].conj();
            let src = &x[c * q..(c + 1) * q];
            for (o, &v) in coef[k * q..(k + 1) * q].iter_mut().zip(src) {
                *o += w * v;
            }
        }
    }
    for c in 0..p {
        let dst = &mut x[c * q..(c + 1) * q];
        dst.fill(ZERO);
        for k in 0..r {
            let w = u[(c, k)];
            for (o, &v) in dst.iter_mut().zip(&coef[k * q..(k + 1) * q]) {
                *o += w * v;
            }
        }
    }
}

/// `X ← (X U*) Uᵀ`.
fn keep_columns(x: &mut [C64], u: &ComplexMatrix, p: usize, q: usize) {
    let r = u.cols();
    let mut coef = vec![ZERO; r];
    for c in 0..p {
        let row = &mut x[c * q..(c + 1) * q];
        for (k, slot) in coef.iter_mut().enumerate() {
            *slot = (0..q).map(|t| row[t] * u[(t, k)].conj()).sum();
        }
        for (t, o) in row.iter_mut().enumerate() {
            *o = (0..r).map(|k| coef[k] * u[(t, k)]).sum();
        }
    }
}

/// Output SINR `|α|² |wᴴd|² / (wᴴ Σ w)`.
pub fn sinr(w: &[C64], d: &[C64], alpha: C64, sigma: &ComplexMatrix) -> Result<f64> {
    let n = w.len();
    if d.len() != n || sigma.shape() != (n, n) {
        return Err(mismatch(
            "sinr",
            format!("length {n} vectors and ({n}, {n}) covariance"),
            format!("length {} and {:?}", d.len(), sigma.shape()),
        ));
    }
    let denom = dot(w, &dense_apply(sigma, w)).re;
    if !(denom > 0.0) {
        return Err(Error::Degenerate("wᴴΣw is not positive"));
    }
    Ok(alpha.norm_sqr() * dot(w, d).norm_sqr() / denom)
}

/// Range × Doppler magnitude image.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionMap {
    rows: usize,
    doppler: Vec<f64>,
    values: Vec<f64>,
}

impl DetectionMap {
    /// `values` is row-major, one row per range bin.
    pub fn new(doppler: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let cols = doppler.len();
        if cols == 0 {
            return Err(Error::Empty("Doppler grid"));
        }
        if !values.len().is_multiple_of(cols) {
            return Err(mismatch(
                "DetectionMap::new",
                format!("a multiple of {cols} values"),
                values.len(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::NonFinite { index: i });
        }
        Ok(Self {
            rows: values.len() / cols,
            doppler,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.doppler.len()
    }

    pub fn doppler_grid(&self) -> &[f64] {
        &self.doppler
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, bin: usize, doppler: usize) -> f64 {
        self.values[bin * self.cols() + doppler]
    }

    pub fn row(&self, bin: usize) -> &[f64] {
        &self.values[bin * self.cols()..(bin + 1) * self.cols()]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// `(range bin, Doppler index)` of the largest value; first one on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best / self.cols(), best % self.cols())
    }
}

/// Per range bin `m` and Doppler bin `i`, `max_h |(h ⊗ b(f_i))ᴴ F x_m|` over the
/// spatial candidates. Candidates have the filter's spatial dimension.
pub fn detection_image(
    filter: &StapFilter,
    bins: &[&[C64]],
    doppler_grid: &[f64],
    candidates: &[Vec<C64>],
) -> Result<DetectionMap> {
    if doppler_grid.is_empty() {
        return Err(Error::Empty("Doppler grid"));
    }
    if candidates.is_empty() {
        return Err(Error::Empty("spatial grid"));
    }
    let (p, q) = (filter.p(), filter.q());
    if let Some(h) = candidates.iter().find(|h| h.len() != p) {
        return Err(mismatch("detection_image", p, h.len()));
    }
    if let Some(x) = bins.iter().find(|x| x.len() != p * q) {
        return Err(mismatch("detection_image", p * q, x.len()));
    }
    let steer: Vec<Vec<C64>> = doppler_grid
        .iter()
        .map(|&f| temporal_steering(f, q).iter().map(|z| z.conj()).collect())
        .collect();
    let rows: Vec<Vec<f64>> = bins
        .par_iter()
        .map(|x| {
            let y = filter.apply(x)?;
            Ok(steer
                .iter()
                .map(|bc| {
                    let z: Vec<C64> = (0..p)
                        .map(|c| {
                            y[c * q..(c + 1) * q]
                                .iter()
                                .zip(bc)
                                .map(|(a, b)| a * b)
                                .sum()
                        })
                        .collect();
                    candidates
                        .iter()
                        .map(|h| dot(h, &z).norm())
                        .fold(0.0, f64::max)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    DetectionMap::new(doppler_grid.to_vec(), rows.concat())
}
