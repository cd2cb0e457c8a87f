mod common;

use common::{scene, DOPPLER, KAPPA, P, Q, RB};
use kronstap::linalg::{hermitian_eig, kron, principal_angles, ComplexMatrix, C64};
use kronstap::lrkron::{estimate_rearranged, lr_kron_estimate, sample_covariance, LrKronConfig};
use kronstap::multipass::{
    change_detect, change_detect_signed, multipass_estimate, pass_images, stack_passes,
    MultipassDetection,
};
use kronstap::rearrange::rearrange;
use kronstap::sim::{
    gen_clutter, gen_multipass, gen_multipass_noiseless, Calibration, ClutterModel,
    MultipassConfig, PassGains, Target,
};
use kronstap::stap::uniform_grid;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Columns `[h_1; 0]` and `[0; h_2]`, normalized.
fn block_calibration(model: &ClutterModel) -> ComplexMatrix {
    let cols: Vec<Vec<C64>> = (0..2)
        .map(|k| {
            let h = model.calibration(k);
            let n = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let mut col = vec![ZERO; 2 * P];
            for (c, z) in h.iter().enumerate() {
                col[k * P + c] = z / n;
            }
            col
        })
        .collect();
    ComplexMatrix::from_columns(2 * P, &cols).unwrap()
}

fn full_rank_estimate(cube: &kronstap::sim::PhaseHistory) -> kronstap::lrkron::KronCovEstimate {
    let stacked = stack_passes(cube);
    let s = sample_covariance(&stacked.bins(), stacked.channels(), stacked.q()).unwrap();
    lr_kron_estimate(
        &s,
        &LrKronConfig::new(2 * P, RB).tolerance(1e-12).min_iter(10),
    )
    .unwrap()
}

#[test]
fn noiseless_spatial_factor_spans_the_pass_calibrations() {
    for seed in 0..3 {
        let cfg = scene(100 + seed, 4 * Q);
        let mp = MultipassConfig::new(2);
        let clean = gen_multipass_noiseless(&cfg, &mp).unwrap();
        let model = ClutterModel::new(&cfg, 2).unwrap();
        let stacked = stack_passes(&clean);
        let training: Vec<usize> = (0..cfg.n_bins).collect();
        let est = multipass_estimate(&stacked, &training, RB, 1e-10).unwrap();
        let angles =
            principal_angles(&est.spatial_basis().unwrap(), &block_calibration(&model)).unwrap();
        assert!(angles.iter().all(|&t| t <= 1e-8), "seed {seed}: {angles:?}");
    }
}

#[test]
fn stacked_population_covariance_is_separable() {
    let cfg = scene(110, 1);
    let model = ClutterModel::new(&cfg, 2).unwrap();
    // Independent unit-power gains make the cross-pass blocks vanish in expectation.
    let mut a = ComplexMatrix::zeros(2 * P, 2 * P);
    for k in 0..2 {
        let h = model.calibration(k);
        for i in 0..P {
            for j in 0..P {
                a[(k * P + i, k * P + j)] = h[i] * h[j].conj();
            }
        }
    }
    let sigma = kron(&a, &model.temporal_covariance());
    let r = rearrange(&sigma, 2 * P, Q).unwrap();
    let est =
        estimate_rearranged(&r, &LrKronConfig::new(2, RB).tolerance(1e-14).min_iter(5)).unwrap();
    assert!(est.final_residual() <= 1e-8, "η = {}", est.final_residual());
}

#[test]
fn identical_passes_collapse_to_rank_one() {
    let mut cfg = scene(120, 4 * Q);
    cfg.calibration = Calibration::Fixed(vec![
        C64::new(1.0, 0.0),
        C64::new(0.0, 1.0),
        C64::new(-1.0, 0.0),
    ]);
    let mp = MultipassConfig {
        gains: PassGains::Unit,
        ..MultipassConfig::new(2)
    };
    let clean = gen_multipass_noiseless(&cfg, &mp).unwrap();
    let a = full_rank_estimate(&clean);
    let v = hermitian_eig(a.a_hat()).unwrap();
    let v = v.values();
    assert!(v[1] <= 1e-8 * v[0], "λ2/λ1 = {}", v[1] / v[0]);

    let changing = gen_multipass_noiseless(&scene(120, 4 * Q), &MultipassConfig::new(2)).unwrap();
    let b = full_rank_estimate(&changing);
    let w = hermitian_eig(b.a_hat()).unwrap();
    let w = w.values();
    assert!(
        w[1] > 1e-2 * w[0],
        "random gains keep rank 2: λ2/λ1 = {}",
        w[1] / w[0]
    );
}

#[test]
fn one_pass_reduces_to_the_single_pass_estimator() {
    let cfg = scene(130, 2 * Q);
    let cube = gen_clutter(&cfg).unwrap();
    let training: Vec<usize> = (0..cfg.n_bins).collect();
    let multi = multipass_estimate(&stack_passes(&cube), &training, RB, 1e-6).unwrap();
    let s = sample_covariance(&cube.bins(0), P, Q).unwrap();
    let single = lr_kron_estimate(&s, &LrKronConfig::new(1, RB).tolerance(1e-6)).unwrap();
    let diff = multi
        .product()
        .sub(&single.product())
        .unwrap()
        .frobenius_norm();
    assert!(diff <= 1e-12 * single.product().frobenius_norm());
    assert_eq!(multi.iterations(), single.iterations());
}

fn settings() -> MultipassDetection {
    MultipassDetection {
        temporal_rank: RB,
        tolerance: 1e-4,
        doppler_grid: uniform_grid(Q),
        spatial_grid: uniform_grid(16),
        temporal_projection: true,
    }
}

#[test]
fn appearing_target_tops_the_change_map() {
    let cfg = scene(140, 64);
    let mut cube = gen_multipass(&cfg, &MultipassConfig::new(2)).unwrap();
    let amplitude = 10.0 * cfg.sigma2.sqrt() * ((P * Q) as f64).sqrt();
    let target = Target {
        pass: 1,
        bin: 25,
        doppler: DOPPLER,
        amplitude: C64::new(amplitude, 0.0),
    };
    cube.inject_target(target, KAPPA).unwrap();
    let training: Vec<usize> = (0..cfg.n_bins).collect();
    let images = pass_images(&cube, &training, &settings()).unwrap();
    let change = change_detect(&images[1], &images[0]).unwrap();
    let (bin, doppler) = change.argmax();
    assert_eq!(bin, 25);
    assert!((change.doppler_grid()[doppler] - DOPPLER).abs() < 1e-12);

    let signed = change_detect_signed(&images[1], &images[0]).unwrap();
    assert!(signed[bin * change.cols() + doppler] > 0.0);
    // Swapping mission and reference flips the sign but not the magnitude.
    let reversed = change_detect(&images[0], &images[1]).unwrap();
    assert_eq!(reversed.values(), change.values());
}
