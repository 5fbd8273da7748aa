use ssosc_core::linalg::{Matrix, Tolerances, Vector};
use ssosc_core::oracles::selftest;
use ssosc_core::prox::ConvexFunction;
use ssosc_core::sovf::{hessian_pd_sweep, CertifyOptions, CompositeProblem, KktCandidate};

/// PSD cone of order 4 at `F(0) = 0`, `ū = 0`: every index is on the
/// boundary, so the element count (162) exceeds a small budget.
fn boundary_problem() -> (CompositeProblem, KktCandidate) {
    let g = ConvexFunction::psd_indicator(4).unwrap();
    let mut a = Vec::new();
    for (i, j) in [(0, 0), (0, 1), (1, 2), (2, 3), (3, 3)] {
        let mut m = Matrix::zeros(4, 4);
        m[(i, j)] = 1.0;
        m[(j, i)] = 1.0;
        a.push(m);
    }
    let n = a.len();
    let q = Matrix::from_fn(
        n,
        n,
        |i, j| if i == j { -1.0 + 0.3 * i as f64 } else { 0.05 },
    );
    let p = CompositeProblem::new(q, Vector::zeros(n), 0.0, Matrix::zeros(4, 4), a, g).unwrap();
    let k = KktCandidate::evaluate(
        &p,
        Vector::zeros(n),
        Matrix::zeros(4, 4),
        &Tolerances::default(),
    )
    .unwrap();
    (p, k)
}

#[test]
fn sampled_sweep_is_independent_of_thread_count() {
    let (p, k) = boundary_problem();
    let run = |threads| {
        let opts = CertifyOptions {
            budget: 20,
            seed: 3,
            threads: Some(threads),
            ..CertifyOptions::default()
        };
        hessian_pd_sweep(&p, &k, &opts).unwrap()
    };
    let one = run(1);
    assert!(one
        .iter()
        .all(|pt| !pt.exhaustive && pt.elements_tested == 20));
    for threads in [2, 4, 7] {
        let other = run(threads);
        for (a, b) in one.iter().zip(&other) {
            assert_eq!(a.min_eig.to_bits(), b.min_eig.to_bits());
            assert_eq!(a, b);
        }
    }
}

#[test]
fn selftest_is_reproducible() {
    let a = selftest(25, 11, Some(1)).unwrap();
    let b = selftest(25, 11, Some(3)).unwrap();
    assert_eq!(a, b);
    assert!(a.all_pass);
}
