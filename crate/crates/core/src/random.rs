//! Seeded random matrices for oracles, self-tests and property tests.

use nalgebra::QR;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{symmetric_part, Matrix};

pub type TrialRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for trial `index` under a base seed; the stream does
/// not depend on which thread runs the trial.
pub fn trial_rng(seed: u64, index: u64) -> TrialRng {
    let mixed = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    ChaCha8Rng::seed_from_u64(mixed)
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn random_symmetric<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix {
    symmetric_part(&gaussian_matrix(n, n, rng))
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// sign of `diag(R)` folded into `Q`).
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix {
    if n == 0 {
        return Matrix::zeros(0, 0);
    }
    let qr = QR::new(gaussian_matrix(n, n, rng));
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn uniform<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}
