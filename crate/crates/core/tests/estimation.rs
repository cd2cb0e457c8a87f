use kronstap::linalg::{hermitian_eig, kron, ComplexMatrix, C64};
use kronstap::lrkron::{lr_kron_estimate, Convergence, LrKronConfig, SampleCovariance};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(n, rank, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    g.matmul(&g.adjoint()).unwrap().hermitian_part()
}

fn covariance(m: ComplexMatrix, p: usize, q: usize) -> SampleCovariance {
    SampleCovariance::from_matrix(m, p, q, p * q).unwrap()
}

fn min_eigenvalue_ratio(m: &ComplexMatrix) -> f64 {
    let v = hermitian_eig(m).unwrap();
    let v = v.values();
    v[v.len() - 1] / v[0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn residual_settles_within_the_budget(
        seed in any::<u64>(),
        p in 1usize..=4,
        q in 2usize..=32,
        rank in 1usize..=8,
        ra in 1usize..=4,
        rb in 1usize..=8,
    ) {
        let (ra, rb) = (ra.min(p), rb.min(q));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = covariance(random_psd(&mut rng, p * q, rank), p, q);
        let est = lr_kron_estimate(&s, &LrKronConfig::new(ra, rb).tolerance(1e-4)).unwrap();
        prop_assert_eq!(est.status(), Convergence::Converged);
        prop_assert!(est.iterations() <= 100);
        prop_assert!(est.residual_history().iter().all(|e| (0.0..=1.0 + 1e-12).contains(e)));
    }

    #[test]
    fn factors_of_a_psd_input_are_psd(
        seed in any::<u64>(),
        p in 1usize..=4,
        q in 2usize..=16,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = covariance(random_psd(&mut rng, p * q, p * q), p, q);
        let est = lr_kron_estimate(&s, &LrKronConfig::new(p, q)).unwrap();
        for f in [est.a_hat(), est.b_hat(), &est.product()] {
            prop_assert!(f.hermitian_deviation() <= 1e-10 * f.frobenius_norm());
            prop_assert!(min_eigenvalue_ratio(f) >= -1e-10);
        }
    }

    #[test]
    fn exact_kronecker_inputs_are_reproduced(
        seed in any::<u64>(),
        p in 1usize..=4,
        q in 2usize..=12,
        ra in 1usize..=4,
        rb in 1usize..=4,
    ) {
        let (ra, rb) = (ra.min(p), rb.min(q));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_psd(&mut rng, p, ra);
        let b = random_psd(&mut rng, q, rb);
        let sigma = kron(&a, &b);
        let est = lr_kron_estimate(
            &covariance(sigma.clone(), p, q),
            &LrKronConfig::new(ra, rb).tolerance(1e-12).min_iter(5),
        )
        .unwrap();
        let err = est.product().sub(&sigma).unwrap().frobenius_norm() / sigma.frobenius_norm();
        prop_assert!(err <= 1e-8, "relative error {}", err);
    }
}

#[test]
fn tighter_tolerance_never_stops_earlier() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (p, q) = (3, 24);
    let sigma = kron(&random_psd(&mut rng, p, 1), &random_psd(&mut rng, q, 4))
        .add(&random_psd(&mut rng, p * q, p * q).scale_real(0.3))
        .unwrap();
    let s = covariance(sigma, p, q);
    let mut last = 0;
    for eps in [1e-2, 1e-4, 1e-6, 1e-8] {
        let est = lr_kron_estimate(&s, &LrKronConfig::new(1, 4).tolerance(eps)).unwrap();
        assert!(
            est.iterations() >= last,
            "eps {eps}: {} < {last}",
            est.iterations()
        );
        last = est.iterations();
    }
}

#[test]
fn exhausted_budget_reports_the_last_iterate() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (p, q) = (3, 16);
    let s = covariance(random_psd(&mut rng, p * q, p * q), p, q);
    let est = lr_kron_estimate(&s, &LrKronConfig::new(1, 2).tolerance(1e-300).max_iter(3)).unwrap();
    assert_eq!(est.status(), Convergence::MaxIterations);
    assert_eq!(est.iterations(), 3);
    assert_eq!(est.residual_history().len(), 3);
}

#[test]
fn ranks_outside_the_dimensions_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s = covariance(random_psd(&mut rng, 6, 6), 2, 3);
    assert!(lr_kron_estimate(&s, &LrKronConfig::new(3, 1)).is_err());
    assert!(lr_kron_estimate(&s, &LrKronConfig::new(1, 4)).is_err());
    assert!(lr_kron_estimate(&s, &LrKronConfig::new(0, 1)).is_err());
}
