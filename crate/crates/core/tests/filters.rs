mod common;

use common::{energy, scene, DOPPLER, KAPPA, P, Q, RB};
use kronstap::linalg::C64;
use kronstap::lrkron::{lr_kron_estimate, sample_covariance, LrKronConfig};
use kronstap::sim::{gen_clutter, ClutterModel, PhaseHistory, Target};
use kronstap::stap::{
    detection_image, sinr, spatial_candidates, uniform_grid, DetectionMap, FilterKind, StapFilter,
    SteeringVector,
};

fn kron_filter(cube: &PhaseHistory) -> StapFilter {
    let s = sample_covariance(&cube.bins(0), P, Q).unwrap();
    let est = lr_kron_estimate(&s, &LrKronConfig::new(1, RB)).unwrap();
    StapFilter::from_estimate(FilterKind::Kron, &est, true).unwrap()
}

fn image(cube: &PhaseHistory, filter: &StapFilter) -> DetectionMap {
    detection_image(
        filter,
        &cube.bins(0),
        &uniform_grid(Q),
        &spatial_candidates(&uniform_grid(16), P),
    )
    .unwrap()
}

#[test]
fn sinr_ordering_holds_in_every_trial() {
    let alpha = C64::new(1.0, 0.0);
    let d = SteeringVector::new(DOPPLER, P, Q, KAPPA).unwrap().full();
    for seed in 0..20 {
        let cfg = scene(200 + seed, 2 * P * Q);
        let cube = gen_clutter(&cfg).unwrap();
        let sigma = ClutterModel::new(&cfg, 1).unwrap().covariance(0);
        let optimal = StapFilter::optimal(&sigma, P, Q).unwrap();
        let kron = kron_filter(&cube);
        let identity = StapFilter::identity(P, Q);
        let s = |f: &StapFilter| sinr(&f.weights(&d).unwrap(), &d, alpha, &sigma).unwrap();
        let (so, sk, si) = (s(&optimal), s(&kron), s(&identity));
        assert!(
            so >= sk * (1.0 - 1e-9),
            "seed {seed}: optimal {so} < kron {sk}"
        );
        assert!(sk >= si, "seed {seed}: kron {sk} < identity {si}");
    }
}

#[test]
fn white_noise_keeps_the_complement_dimension() {
    let mut cfg = scene(300, 2000);
    let clutter = gen_clutter(&cfg).unwrap();
    let filter = kron_filter(&clutter);
    // E‖F n‖² = σ² tr F = σ² (p − r_a)(q − r_b) for a projection F.
    cfg.seed = 301;
    cfg.sigma2 = 1.0;
    let mut noise = gen_clutter(&cfg).unwrap();
    let clean = kronstap::sim::gen_clutter_noiseless(&cfg).unwrap();
    for m in 0..cfg.n_bins {
        for (x, c) in noise.bin_mut(0, m).iter_mut().zip(clean.bin(0, m)) {
            *x -= c;
        }
    }
    let mean: f64 = noise
        .bins(0)
        .iter()
        .map(|x| energy(&filter.apply(x).unwrap()))
        .sum::<f64>()
        / cfg.n_bins as f64;
    let expected = ((P - 1) * (Q - RB)) as f64;
    assert!((mean / expected - 1.0).abs() < 0.05, "{mean} vs {expected}");
}

#[test]
fn planted_target_is_recovered_at_its_cell() {
    for seed in 0..5 {
        let cfg = scene(400 + seed, 64);
        let mut cube = gen_clutter(&cfg).unwrap();
        let amplitude = 10.0 * cfg.sigma2.sqrt() * ((P * Q) as f64).sqrt();
        let target = Target {
            pass: 0,
            bin: 10,
            doppler: DOPPLER,
            amplitude: C64::from_polar(amplitude, 0.3 * seed as f64),
        };
        cube.inject_target(target, KAPPA).unwrap();
        let map = image(&cube, &kron_filter(&cube));
        let (bin, doppler) = map.argmax();
        assert_eq!(bin, 10, "seed {seed}");
        assert!(
            (map.doppler_grid()[doppler] - DOPPLER).abs() < 1e-12,
            "seed {seed}"
        );
    }
}

#[test]
fn clutter_only_images_stay_an_order_below_planted_ones() {
    // Per-element target amplitude 10σ on the unit-norm steering vector.
    let mut ratios = Vec::new();
    for seed in 0..20 {
        let cfg = scene(500 + seed, 64);
        let clean = gen_clutter(&cfg).unwrap();
        let mut planted = clean.clone();
        let amplitude = 10.0 * cfg.sigma2.sqrt() * ((P * Q) as f64).sqrt();
        let target = Target {
            pass: 0,
            bin: 30,
            doppler: DOPPLER,
            amplitude: C64::new(amplitude, 0.0),
        };
        planted.inject_target(target, KAPPA).unwrap();
        // The filter is trained on clutter only so both images use the same F.
        let filter = kron_filter(&clean);
        ratios.push(image(&planted, &filter).max() / image(&clean, &filter).max());
    }
    assert!(
        ratios.iter().all(|&r| r >= 10.0),
        "contrast ratios {ratios:?}"
    );
}
