//! Synthetic multichannel phase histories under the SIRV clutter model.
//!
//! Per range bin the clutter is `τ · c · (h ⊗ c̃)`: speckle `c̃ ~ CN(0, B)` on the
//! pulse axis, calibration `h` on the channel axis, a texture scalar `τ` and,
//! for multipass scenes, a per-pass gain `c`. Sensor noise is `CN(0, σ² I)`.
//!
//! Every random draw comes from a ChaCha8 stream selected by `(kind, pass,
//! bin)`, so the cube depends only on the seed and never on how bins are
//! scheduled across threads.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, StandardNormal};
use rayon::prelude::*;

use crate::error::{mismatch, Error, Result};
use crate::linalg::{kron, outer, ComplexMatrix, C64, ZERO};
use crate::stap::SteeringVector;

/// Texture law of the SIRV clutter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Texture {
    /// `τ = 1`: Gaussian clutter.
    Constant,
    /// `τ² = (ν − 1) / G` with `G ~ Gamma(ν, 1)`, so `E[τ²] = 1`. Needs `ν > 1`.
    InverseGamma { shape: f64 },
}

impl Texture {
    pub fn mean_square(&self) -> f64 {
        1.0
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Texture::Constant => Ok(()),
            Texture::InverseGamma { shape } if shape > 1.0 && shape.is_finite() => Ok(()),
            Texture::InverseGamma { shape } => Err(Error::InvalidParameter(format!(
                "inverse-gamma texture needs shape > 1, got {shape}"
            ))),
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            Texture::Constant => 1.0,
            Texture::InverseGamma { shape } => {
                let g: f64 = rng.sample(Gamma::new(shape, 1.0).expect("validated shape"));
                ((shape - 1.0) / g).sqrt()
            }
        }
    }
}

/// Per-channel gain and phase of each pass.
#[derive(Clone, Debug, PartialEq)]
pub enum Calibration {
    /// `h = 1_p`.
    Ideal,
    /// Unit gains with phases uniform on `[−max_phase, max_phase]`, drawn per pass.
    RandomPhase { max_phase: f64 },
    /// The same `h` for every pass.
    Fixed(Vec<C64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub p: usize,
    pub q: usize,
    pub n_bins: usize,
    /// Rank `r_b` of the temporal clutter covariance.
    pub temporal_rank: usize,
    /// Noise power `σ²`.
    pub sigma2: f64,
    pub texture: Texture,
    pub calibration: Calibration,
    pub seed: u64,
}

impl SceneConfig {
    /// Defaults: `r_b = min(4, q)`, `σ² = 0.01`, constant texture, ±0.1 rad calibration phases.
    pub fn new(p: usize, q: usize, n_bins: usize) -> Self {
        Self {
            p,
            q,
            n_bins,
            temporal_rank: q.clamp(1, 4),
            sigma2: 0.01,
            texture: Texture::Constant,
            calibration: Calibration::RandomPhase { max_phase: 0.1 },
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.q == 0 || self.n_bins == 0 {
            return Err(Error::InvalidParameter(format!(
                "p, q and n_bins must be positive, got p={} q={} n_bins={}",
                self.p, self.q, self.n_bins
            )));
        }
        if self.temporal_rank == 0 || self.temporal_rank > self.q {
            return Err(Error::RankOutOfRange {
                rank: self.temporal_rank,
                max: self.q,
            });
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise power must be non-negative, got {}",
                self.sigma2
            )));
        }
        self.texture.validate()?;
        match &self.calibration {
            Calibration::Fixed(h) => {
                if h.len() != self.p {
                    return Err(mismatch("calibration", self.p, h.len()));
                }
                if h.iter().any(|z| !(z.norm() > 0.0) || !z.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "calibration gains must be finite and nonzero".into(),
                    ));
                }
            }
            Calibration::RandomPhase { max_phase } if !max_phase.is_finite() => {
                return Err(Error::InvalidParameter(
                    "non-finite calibration phase".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Per-pass scalar gains `c_k` of the shared background.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PassGains {
    /// `c_k = 1`.
    Unit,
    /// `c_k ~ CN(0, 1)`, drawn independently per pass and range bin.
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultipassConfig {
    pub passes: usize,
    /// Fraction of range bins whose speckle is redrawn independently after the first pass.
    pub change_fraction: f64,
    pub gains: PassGains,
}

impl MultipassConfig {
    pub fn new(passes: usize) -> Self {
        Self {
            passes,
            change_fraction: 0.0,
            gains: PassGains::Random,
        }
    }
}

/// A target injected into the cube.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Target {
    pub pass: usize,
    pub bin: usize,
    pub doppler: f64,
    pub amplitude: C64,
}

/// Complex data cube: `passes x n_bins` slices of `p x q`, each stored as
/// `x = vec(Xᵀ)` (channel-major runs of `q` pulses).
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseHistory {
    p: usize,
    q: usize,
    passes: usize,
    n_bins: usize,
    data: Vec<C64>,
    truth: Vec<Target>,
}

impl PhaseHistory {
    pub fn zeros(p: usize, q: usize, passes: usize, n_bins: usize) -> Result<Self> {
        let len = checked_len(p, q, passes, n_bins)?;
        let mut data = Vec::new();
        data.try_reserve_exact(len)
            .map_err(|_| Error::ResourceExhausted { bytes: len * 16 })?;
        data.resize(len, ZERO);
        Ok(Self {
            p,
            q,
            passes,
            n_bins,
            data,
            truth: Vec::new(),
        })
    }

    pub fn from_parts(
        p: usize,
        q: usize,
        passes: usize,
        n_bins: usize,
        data: Vec<C64>,
        truth: Vec<Target>,
    ) -> Result<Self> {
        let len = checked_len(p, q, passes, n_bins)?;
        if data.len() != len {
            return Err(mismatch("PhaseHistory::from_parts", len, data.len()));
        }
        if let Some(t) = truth.iter().find(|t| t.pass >= passes || t.bin >= n_bins) {
            return Err(Error::InvalidParameter(format!(
                "target at pass {} bin {} is outside the cube",
                t.pass, t.bin
            )));
        }
        Ok(Self {
            p,
            q,
            passes,
            n_bins,
            data,
            truth,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn passes(&self) -> usize {
        self.passes
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn truth(&self) -> &[Target] {
        &self.truth
    }

    fn offset(&self, pass: usize, bin: usize) -> usize {
        assert!(pass < self.passes && bin < self.n_bins, "bin out of range");
        (pass * self.n_bins + bin) * self.p * self.q
    }

    /// `x_m` of one pass.
    pub fn bin(&self, pass: usize, bin: usize) -> &[C64] {
        let o = self.offset(pass, bin);
        &self.data[o..o + self.p * self.q]
    }

    pub fn bin_mut(&mut self, pass: usize, bin: usize) -> &mut [C64] {
        let o = self.offset(pass, bin);
        let n = self.p * self.q;
        &mut self.data[o..o + n]
    }

    /// All range bins of one pass.
    pub fn bins(&self, pass: usize) -> Vec<&[C64]> {
        (0..self.n_bins).map(|m| self.bin(pass, m)).collect()
    }

    /// `X^{(m)}` as a `p x q` matrix.
    pub fn matrix(&self, pass: usize, bin: usize) -> ComplexMatrix {
        ComplexMatrix::from_row_major(self.p, self.q, self.bin(pass, bin).to_vec())
            .expect("slice has p*q finite entries")
    }

    /// Adds `α d(f)` to one range bin and records it in the truth list.
    pub fn inject_target(&mut self, target: Target, kappa: f64) -> Result<()> {
        if target.pass >= self.passes || target.bin >= self.n_bins {
            return Err(Error::InvalidParameter(format!(
                "target at pass {} bin {} is outside a cube of {} passes x {} bins",
                target.pass, target.bin, self.passes, self.n_bins
            )));
        }
        if !target.amplitude.is_finite() {
            return Err(Error::InvalidParameter(
                "non-finite target amplitude".into(),
            ));
        }
        let d = SteeringVector::new(target.doppler, self.p, self.q, kappa)?.full();
        for (x, s) in self.bin_mut(target.pass, target.bin).iter_mut().zip(&d) {
            *x += target.amplitude * s;
        }
        self.truth.push(target);
        Ok(())
    }
}

fn checked_len(p: usize, q: usize, passes: usize, n_bins: usize) -> Result<usize> {
    if p == 0 || q == 0 || passes == 0 || n_bins == 0 {
        return Err(Error::InvalidParameter(format!(
            "cube dimensions must be positive, got p={p} q={q} passes={passes} n_bins={n_bins}"
        )));
    }
    [q, passes, n_bins]
        .iter()
        .try_fold(p, |acc, &d| acc.checked_mul(d))
        .ok_or(Error::ResourceExhausted { bytes: usize::MAX })
}

#[derive(Clone, Copy)]
#[repr(u64)]
enum Stream {
    Model = 1,
    Calibration = 2,
    Speckle = 3,
    Texture = 4,
    Noise = 5,
    Gain = 6,
    Change = 7,
}

/// Generator for stream `(kind, pass, bin)` of the scene seed.
fn stream(seed: u64, kind: Stream, pass: usize, bin: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((kind as u64) << 56) | ((pass as u64) << 40) | bin as u64);
    rng
}

fn cn(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// The deterministic part of a scene: temporal covariance and calibrations.
#[derive(Clone, Debug)]
pub struct ClutterModel {
    p: usize,
    q: usize,
    sigma2: f64,
    texture: Texture,
    /// `q x r_b`, `B = L Lᴴ`.
    factor: ComplexMatrix,
    calibrations: Vec<Vec<C64>>,
}

impl ClutterModel {
    /// Builds `B = Σ λ_i v_i v_iᴴ` with `λ_i ∝ 0.5^i`, `tr B = q`, and `v_i`
    /// orthonormalized complex exponentials near zero Doppler, plus one
    /// calibration vector per pass.
    pub fn new(cfg: &SceneConfig, passes: usize) -> Result<Self> {
        cfg.validate()?;
        if passes == 0 {
            return Err(Error::InvalidParameter(
                "at least one pass is required".into(),
            ));
        }
        let (q, r) = (cfg.q, cfg.temporal_rank);
        let mut rng = stream(cfg.seed, Stream::Model, 0, 0);
        let mut basis: Vec<Vec<C64>> = Vec::with_capacity(r);
        for i in 0..r {
            let jitter: f64 = rng.random_range(-0.25..0.25);
            let freq = (i as f64 - (r as f64 - 1.0) / 2.0 + jitter) / q as f64;
            let mut v: Vec<C64> = (0..q)
                .map(|t| C64::from_polar(1.0, 2.0 * PI * freq * t as f64))
                .collect();
            for _ in 0..2 {
                for u in &basis {
                    let proj: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                    for (x, y) in v.iter_mut().zip(u) {
                        *x -= proj * y;
                    }
                }
            }
            let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if !(n > 1e-8) {
                return Err(Error::Degenerate("temporal clutter profiles are dependent"));
            }
            v.iter_mut().for_each(|z| *z /= n);
            basis.push(v);
        }
        let weights: Vec<f64> = (0..r).map(|i| 0.5f64.powi(i as i32)).collect();
        let total: f64 = weights.iter().sum();
        let columns: Vec<Vec<C64>> = basis
            .iter()
            .zip(&weights)
            .map(|(v, w)| {
                let s = (w * q as f64 / total).sqrt();
                v.iter().map(|z| z * s).collect()
            })
            .collect();
        let factor = ComplexMatrix::from_columns(q, &columns)?;

        let calibrations = (0..passes)
            .map(|k| match &cfg.calibration {
                Calibration::Ideal => vec![C64::new(1.0, 0.0); cfg.p],
                Calibration::Fixed(h) => h.clone(),
                Calibration::RandomPhase { max_phase } => {
                    let mut rng = stream(cfg.seed, Stream::Calibration, k, 0);
                    (0..cfg.p)
                        .map(|_| {
                            let phi = if *max_phase > 0.0 {
                                rng.random_range(-max_phase..*max_phase)
                            } else {
                                0.0
                            };
                            C64::from_polar(1.0, phi)
                        })
                        .collect()
                }
            })
            .collect();

        Ok(Self {
            p: cfg.p,
            q,
            sigma2: cfg.sigma2,
            texture: cfg.texture,
            factor,
            calibrations,
        })
    }

    /// Temporal covariance `B`.
    pub fn temporal_covariance(&self) -> ComplexMatrix {
        self.factor
            .matmul(&self.factor.adjoint())
            .expect("factor shapes agree")
            .hermitian_part()
    }

    /// Orthonormal basis of the temporal clutter subspace (`q x r_b`).
    pub fn temporal_basis(&self) -> ComplexMatrix {
        let cols: Vec<Vec<C64>> = (0..self.factor.cols())
            .map(|k| {
                let c = self.factor.column(k);
                let n = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                c.into_iter().map(|z| z / n).collect()
            })
            .collect();
        ComplexMatrix::from_columns(self.q, &cols).expect("columns have length q")
    }

    /// Calibration vector `h` of a pass.
    pub fn calibration(&self, pass: usize) -> &[C64] {
        &self.calibrations[pass]
    }

    /// `E[τ²] (h hᴴ) ⊗ B`, the clutter covariance of one pass with unit gain.
    pub fn clutter_covariance(&self, pass: usize) -> ComplexMatrix {
        let h = self.calibration(pass);
        kron(&outer(h, h), &self.temporal_covariance()).scale_real(self.texture.mean_square())
    }

    /// Clutter covariance plus `σ² I`.
    pub fn covariance(&self, pass: usize) -> ComplexMatrix {
        let n = self.p * self.q;
        self.clutter_covariance(pass)
            .add(&ComplexMatrix::identity(n).scale_real(self.sigma2))
            .expect("shapes agree")
    }
}

/// Single-pass clutter-plus-noise cube.
pub fn gen_clutter(cfg: &SceneConfig) -> Result<PhaseHistory> {
    let mp = MultipassConfig {
        passes: 1,
        change_fraction: 0.0,
        gains: PassGains::Unit,
    };
    generate(cfg, &mp, true)
}

/// Clutter-only single-pass cube (no sensor noise).
pub fn gen_clutter_noiseless(cfg: &SceneConfig) -> Result<PhaseHistory> {
    let mp = MultipassConfig {
        passes: 1,
        change_fraction: 0.0,
        gains: PassGains::Unit,
    };
    generate(cfg, &mp, false)
}

/// `K`-pass cube with a shared stationary background.
pub fn gen_multipass(cfg: &SceneConfig, mp: &MultipassConfig) -> Result<PhaseHistory> {
    if mp.passes < 2 {
        return Err(Error::InvalidParameter(format!(
            "multipass scenes need at least 2 passes, got {}",
            mp.passes
        )));
    }
    generate(cfg, mp, true)
}

/// Like [`gen_multipass`] but without sensor noise; used to measure clutter residuals.
pub fn gen_multipass_noiseless(cfg: &SceneConfig, mp: &MultipassConfig) -> Result<PhaseHistory> {
    if mp.passes < 2 {
        return Err(Error::InvalidParameter(format!(
            "multipass scenes need at least 2 passes, got {}",
            mp.passes
        )));
    }
    generate(cfg, mp, false)
}

fn generate(cfg: &SceneConfig, mp: &MultipassConfig, with_noise: bool) -> Result<PhaseHistory> {
    if !(0.0..=1.0).contains(&mp.change_fraction) {
        return Err(Error::InvalidParameter(format!(
            "change fraction must lie in [0, 1], got {}",
            mp.change_fraction
        )));
    }
    let model = ClutterModel::new(cfg, mp.passes)?;
    let mut cube = PhaseHistory::zeros(cfg.p, cfg.q, mp.passes, cfg.n_bins)?;
    let (p, q, n_bins, r) = (cfg.p, cfg.q, cfg.n_bins, cfg.temporal_rank);
    let seed = cfg.seed;
    let noise_std = cfg.sigma2.sqrt();
    cube.data
        .par_chunks_mut(p * q)
        .enumerate()
        .for_each(|(idx, x)| {
            let (k, m) = (idx / n_bins, idx % n_bins);
            let changed = k > 0
                && mp.change_fraction > 0.0
                && stream(seed, Stream::Change, 0, m).random::<f64>() < mp.change_fraction;
            let speckle_pass = if changed { k } else { 0 };
            let mut rng = stream(seed, Stream::Speckle, speckle_pass, m);
            let z: Vec<C64> = (0..r).map(|_| cn(&mut rng)).collect();
            let tau = model
                .texture
                .sample(&mut stream(seed, Stream::Texture, 0, m));
            let gain = match mp.gains {
                PassGains::Unit => C64::new(1.0, 0.0),
                PassGains::Random => cn(&mut stream(seed, Stream::Gain, k, m)),
            };
            let speckle: Vec<C64> = (0..q)
                .map(|t| (0..r).map(|i| model.factor[(t, i)] * z[i]).sum::<C64>())
                .collect();
            let h = model.calibration(k);
            for c in 0..p {
                let w = gain * h[c] * tau;
                for (o, s) in x[c * q..(c + 1) * q].iter_mut().zip(&speckle) {
                    *o = w * s;
                }
            }
            if with_noise {
                let mut rng = stream(seed, Stream::Noise, k, m);
                for o in x.iter_mut() {
                    *o += cn(&mut rng) * noise_std;
                }
            }
        });
    Ok(cube)
}
