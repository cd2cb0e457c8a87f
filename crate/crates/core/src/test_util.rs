use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{ComplexMatrix, C64};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cn(r: &mut impl Rng) -> C64 {
    let re: f64 = r.sample(StandardNormal);
    let im: f64 = r.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_vec(r: &mut impl Rng, n: usize) -> Vec<C64> {
    (0..n).map(|_| cn(r)).collect()
}

pub fn random_matrix(r: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| cn(r))
}

pub fn random_hermitian(r: &mut impl Rng, n: usize) -> ComplexMatrix {
    let g = random_matrix(r, n, n);
    g.add(&g.adjoint()).unwrap().scale_real(0.5)
}

/// `G Gᴴ` with `G` of shape `n x rank`.
pub fn random_psd(r: &mut impl Rng, n: usize, rank: usize) -> ComplexMatrix {
    let g = random_matrix(r, n, rank);
    g.matmul(&g.adjoint()).unwrap().hermitian_part()
}
