//! Shared scene setups for the integration and acceptance tests.
#![allow(dead_code)]

use kronstap::linalg::{hermitian_eig, C64};
use kronstap::lrkron::{lr_kron_estimate, sample_covariance, LrKronConfig};
use kronstap::multipass::{multipass_estimate, stack_passes};
use kronstap::sim::{
    gen_clutter, gen_multipass, gen_multipass_noiseless, ClutterModel, MultipassConfig,
    SceneConfig, Target,
};
use kronstap::stap::{sinr, FilterKind, StapFilter, SteeringVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const P: usize = 3;
pub const Q: usize = 32;
pub const RB: usize = 4;
/// `κ f = 0.5`: the target sits 8 Doppler bins away from the clutter ridge at q = 32.
pub const KAPPA: f64 = 2.0;
pub const DOPPLER: f64 = 0.25;

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn scene(seed: u64, n_bins: usize) -> SceneConfig {
    let mut cfg = SceneConfig::new(P, Q, n_bins);
    cfg.temporal_rank = RB;
    cfg.seed = seed;
    cfg
}

/// Output SINR in dB of the Kronecker filter and of the classical low-rank
/// filter `I − U Uᴴ` (leading `r_a r_b` eigenvectors of the same SCM).
#[derive(Clone, Copy, Debug)]
pub struct SinrPair {
    pub kron_db: f64,
    pub classical_db: f64,
}

/// Moving targets in the training data: Doppler with `κ f ∈ [0.2, 0.8]` and
/// random phase, amplitude `corrupt_amplitude`.
pub fn corrupt(
    cube: &mut kronstap::sim::PhaseHistory,
    bins: usize,
    corrupt_amplitude: f64,
    seed: u64,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
    let n = cube.n_bins();
    let mut chosen: Vec<usize> = Vec::new();
    while chosen.len() < bins {
        let m = rng.random_range(0..n);
        if !chosen.contains(&m) {
            chosen.push(m);
        }
    }
    for bin in chosen {
        let doppler = rng.random_range(0.2..0.8) / KAPPA;
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let target = Target {
            pass: 0,
            bin,
            doppler,
            amplitude: C64::from_polar(corrupt_amplitude, phase),
        };
        cube.inject_target(target, KAPPA)
            .expect("target inside cube");
    }
}

/// One trial: `n` training bins, `corrupted` of them carrying moving targets.
pub fn sinr_trial(seed: u64, n: usize, corrupted: usize, corrupt_amplitude: f64) -> SinrPair {
    let cfg = scene(seed, n);
    let mut cube = gen_clutter(&cfg).expect("valid scene");
    if corrupted > 0 {
        corrupt(&mut cube, corrupted, corrupt_amplitude, seed);
    }
    let sigma = ClutterModel::new(&cfg, 1)
        .expect("valid scene")
        .covariance(0);
    let s = sample_covariance(&cube.bins(0), P, Q).expect("training data");
    let d = SteeringVector::new(DOPPLER, P, Q, KAPPA)
        .expect("valid steering")
        .full();
    let alpha = C64::new(1.0, 0.0);

    let est = lr_kron_estimate(&s, &LrKronConfig::new(1, RB)).expect("estimate");
    let kron = StapFilter::from_estimate(FilterKind::Kron, &est, true).expect("filter");
    let kron_db = db(sinr(&kron.weights(&d).unwrap(), &d, alpha, &sigma).unwrap());

    let u = hermitian_eig(s.matrix()).expect("eig").basis(RB);
    let classical = StapFilter::subspace(u, P, Q).expect("filter");
    let classical_db = db(sinr(&classical.weights(&d).unwrap(), &d, alpha, &sigma).unwrap());
    SinrPair {
        kron_db,
        classical_db,
    }
}

/// Filtered clutter residual energy summed over all passes and bins, for the
/// stacked multipass filter and for independent per-pass filters. Filters are
/// trained on the noisy cube and applied to its clutter component.
pub fn multipass_residuals(seed: u64, n_bins: usize) -> (f64, f64) {
    let cfg = scene(seed, n_bins);
    let mp = MultipassConfig::new(2);
    let noisy = gen_multipass(&cfg, &mp).expect("valid scene");
    let clean = gen_multipass_noiseless(&cfg, &mp).expect("valid scene");
    let training: Vec<usize> = (0..n_bins).collect();

    let stacked = stack_passes(&noisy);
    let est = multipass_estimate(&stacked, &training, RB, 1e-4).expect("estimate");
    let f = StapFilter::from_estimate(FilterKind::Kron, &est, true).expect("filter");
    let clean_stacked = stack_passes(&clean);
    let multi: f64 = clean_stacked
        .bins()
        .iter()
        .map(|x| energy(&f.apply(x).unwrap()))
        .sum();

    let mut single = 0.0;
    for pass in 0..2 {
        let s = sample_covariance(&noisy.bins(pass), P, Q).expect("training data");
        let est = lr_kron_estimate(&s, &LrKronConfig::new(1, RB)).expect("estimate");
        let f = StapFilter::from_estimate(FilterKind::Kron, &est, true).expect("filter");
        single += clean
            .bins(pass)
            .iter()
            .map(|x| energy(&f.apply(x).unwrap()))
            .sum::<f64>();
    }
    (multi, single)
}

pub fn energy(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}
