//! Structured convex functions and their proximal calculus.
//!
//! Two instances are supported: the indicator of the PSD cone `S^m_+` and the
//! nuclear norm on `R^{p×q}` (p ≤ q). For both we provide `Prox_{σg}`, the
//! conjugate prox via the Moreau identity, the Moreau envelope and its
//! gradient, a prox fixed-point subgradient test, and the spectral frame of a
//! point `A = x + u` with its index partition.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::linalg::{
    eig_sym, sunvec, svd_full, svec_len, svec_upper, symmetric_part, unvec_rect, vec_rect,
    EigenFrame, Matrix, SvdFrame, SymMatrix, Tolerances, Vector,
};

/// Inputs to PSD routines may carry this much relative asymmetry from
/// upstream arithmetic; they are symmetrized before use.
const SYMMETRY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexFunction {
    PsdIndicator { m: usize },
    NuclearNorm { p: usize, q: usize },
}

impl ConvexFunction {
    pub fn psd_indicator(m: usize) -> Result<Self> {
        let g = Self::PsdIndicator { m };
        g.validate()?;
        Ok(g)
    }

    pub fn nuclear_norm(p: usize, q: usize) -> Result<Self> {
        let g = Self::NuclearNorm { p, q };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::PsdIndicator { m } if m >= 1 => Ok(()),
            Self::NuclearNorm { p, q } if p >= 1 && p <= q => Ok(()),
            Self::PsdIndicator { m } => Err(Error::InvalidArgument(format!(
                "psd_indicator needs m >= 1, got {m}"
            ))),
            Self::NuclearNorm { p, q } => Err(Error::InvalidArgument(format!(
                "nuclear_norm needs 1 <= p <= q, got p={p}, q={q}"
            ))),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match *self {
            Self::PsdIndicator { m } => (m, m),
            Self::NuclearNorm { p, q } => (p, q),
        }
    }

    /// Value the index partition is classified against.
    pub fn threshold(&self) -> f64 {
        match self {
            Self::PsdIndicator { .. } => 0.0,
            Self::NuclearNorm { .. } => 1.0,
        }
    }

    pub fn check_shape(&self, w: &Matrix) -> Result<()> {
        let (r, c) = self.shape();
        if w.shape() != (r, c) {
            return Err(shape_err(
                format!("{r}x{c}"),
                format!("{}x{}", w.nrows(), w.ncols()),
            ));
        }
        Ok(())
    }

    /// Dimension of the coordinate space operators act on: `m(m+1)/2` for
    /// the PSD cone, `pq` for the nuclear norm.
    pub fn coord_dim(&self) -> usize {
        match *self {
            Self::PsdIndicator { m } => svec_len(m),
            Self::NuclearNorm { p, q } => p * q,
        }
    }

    /// `svec` (PSD, of the symmetric part) or row-major `vec` (nuclear).
    pub fn to_coords(&self, y: &Matrix) -> Vector {
        match self {
            Self::PsdIndicator { .. } => svec_upper(&symmetric_part(y)),
            Self::NuclearNorm { .. } => vec_rect(y),
        }
    }

    pub fn from_coords(&self, v: &Vector) -> Result<Matrix> {
        if v.len() != self.coord_dim() {
            return Err(shape_err(
                format!("coordinate length {}", self.coord_dim()),
                format!("length {}", v.len()),
            ));
        }
        match *self {
            Self::PsdIndicator { .. } => Ok(sunvec(v)?.into_inner()),
            Self::NuclearNorm { p, q } => unvec_rect(v, p, q),
        }
    }

    /// `g(x)`; the PSD indicator is 0 when `λ_min(x) ≥ -tol` and `+∞`
    /// otherwise.
    pub fn value(&self, x: &Matrix, tol: f64) -> Result<f64> {
        self.check_shape(x)?;
        match self {
            Self::PsdIndicator { .. } => {
                let f = eig_sym(&symmetric_input(x)?)?;
                let lmin = f.values.iter().copied().fold(f64::INFINITY, f64::min);
                Ok(if lmin >= -tol { 0.0 } else { f64::INFINITY })
            }
            Self::NuclearNorm { .. } => Ok(svd_full(x)?.values.sum()),
        }
    }
}

fn symmetric_input(w: &Matrix) -> Result<SymMatrix> {
    SymMatrix::from_nearly_symmetric(w, SYMMETRY_SLACK * (1.0 + w.norm()))
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )))
    }
}

/// `Prox_{σg}(w)`. For the PSD indicator this is the projection onto the
/// cone for every σ; for the nuclear norm it soft-thresholds the singular
/// values by σ.
pub fn prox_apply(g: &ConvexFunction, sigma: f64, w: &Matrix) -> Result<Matrix> {
    check_sigma(sigma)?;
    g.check_shape(w)?;
    match g {
        ConvexFunction::PsdIndicator { .. } => {
            let f = eig_sym(&symmetric_input(w)?)?;
            let clipped = f.values.map(|l| l.max(0.0));
            let out = &f.vectors * Matrix::from_diagonal(&clipped) * f.vectors.transpose();
            Ok(symmetric_part(&out))
        }
        ConvexFunction::NuclearNorm { .. } => {
            let f = svd_full(w)?;
            let mut mid = f.middle();
            for i in 0..f.rows() {
                mid[(i, i)] = (f.values[i] - sigma).max(0.0);
            }
            Ok(&f.left * mid * f.right.transpose())
        }
    }
}

/// `Prox_{σg*}(w) = w − σ Prox_{σ⁻¹g}(w/σ)`.
pub fn prox_conjugate_apply(g: &ConvexFunction, sigma: f64, w: &Matrix) -> Result<Matrix> {
    check_sigma(sigma)?;
    let inner = prox_apply(g, 1.0 / sigma, &(w / sigma))?;
    Ok(w - inner * sigma)
}

/// `e_{σg}(w) = g(P) + ‖P − w‖²/(2σ)` with `P = Prox_{σg}(w)`.
pub fn moreau_envelope(g: &ConvexFunction, sigma: f64, w: &Matrix) -> Result<f64> {
    let p = prox_apply(g, sigma, w)?;
    let gp = match g {
        ConvexFunction::PsdIndicator { .. } => 0.0,
        ConvexFunction::NuclearNorm { .. } => g.value(&p, 0.0)?,
    };
    Ok(gp + (&p - w).norm_squared() / (2.0 * sigma))
}

/// `∇e_{σg}(w) = (w − Prox_{σg}(w))/σ`.
pub fn moreau_envelope_grad(g: &ConvexFunction, sigma: f64, w: &Matrix) -> Result<Matrix> {
    let p = prox_apply(g, sigma, w)?;
    Ok((w - p) / sigma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgradientPair {
    pub x: Matrix,
    pub u: Matrix,
    /// `‖Prox_g(x + u) − x‖_F`
    pub residual: f64,
    pub threshold: f64,
    pub valid: bool,
}

/// Tests `u ∈ ∂g(x)` through the fixed point `Prox_g(x + u) = x`.
pub fn subgradient_check(
    g: &ConvexFunction,
    x: &Matrix,
    u: &Matrix,
    tol: &Tolerances,
) -> Result<SubgradientPair> {
    g.check_shape(x)?;
    g.check_shape(u)?;
    let p = prox_apply(g, 1.0, &(x + u))?;
    let residual = (p - x).norm();
    let threshold = tol.tol_range * (1.0 + x.norm());
    Ok(SubgradientPair {
        x: x.clone(),
        u: u.clone(),
        residual,
        threshold,
        valid: residual <= threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decomposition {
    Eigen(EigenFrame),
    Svd(SvdFrame),
}

/// Index partition of the spectrum against the threshold of `g`:
/// `(α, β, γ)` for the PSD cone, `(α₁, α₂, α₃)` for the nuclear norm.
/// Indices refer to positions in the descending spectrum.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Partition {
    pub above: Vec<usize>,
    pub at: Vec<usize>,
    pub below: Vec<usize>,
}

impl Partition {
    pub fn classify(values: &Vector, threshold: f64, tol: f64) -> Self {
        let mut p = Partition::default();
        for (i, &v) in values.iter().enumerate() {
            if v > threshold + tol {
                p.above.push(i);
            } else if v < threshold - tol {
                p.below.push(i);
            } else {
                p.at.push(i);
            }
        }
        p
    }
}

/// Spectral data of a point `A` (normally `x + u`) for a given `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFrame {
    g: ConvexFunction,
    point: Matrix,
    decomposition: Decomposition,
    partition: Partition,
    band_active: bool,
    tol: Tolerances,
}

impl SpectralFrame {
    /// Decomposes `a` and classifies its spectrum. No subgradient test.
    pub fn at_point(g: &ConvexFunction, a: &Matrix, tol: &Tolerances) -> Result<Self> {
        g.check_shape(a)?;
        let decomposition = match g {
            ConvexFunction::PsdIndicator { .. } => {
                let sym = symmetric_input(a)?;
                Decomposition::Eigen(eig_sym(&sym)?)
            }
            ConvexFunction::NuclearNorm { .. } => Decomposition::Svd(svd_full(a)?),
        };
        Self::assemble(g, a, decomposition, tol)
    }

    /// Builds a frame from a caller-supplied eigendecomposition, e.g. one
    /// with a different basis inside a block of equal eigenvalues.
    pub fn from_eigen(
        g: &ConvexFunction,
        a: &Matrix,
        eig: EigenFrame,
        tol: &Tolerances,
    ) -> Result<Self> {
        if !matches!(g, ConvexFunction::PsdIndicator { .. }) {
            return Err(Error::InvalidArgument(
                "eigen frames belong to the PSD indicator".into(),
            ));
        }
        g.check_shape(a)?;
        check_decomposition(a, &eig.reconstruct(), eig.orthogonality_residual(), tol)?;
        Self::assemble(g, a, Decomposition::Eigen(eig), tol)
    }

    /// Builds a frame from a caller-supplied SVD.
    pub fn from_svd(
        g: &ConvexFunction,
        a: &Matrix,
        svd: SvdFrame,
        tol: &Tolerances,
    ) -> Result<Self> {
        if !matches!(g, ConvexFunction::NuclearNorm { .. }) {
            return Err(Error::InvalidArgument(
                "SVD frames belong to the nuclear norm".into(),
            ));
        }
        g.check_shape(a)?;
        check_decomposition(a, &svd.reconstruct(), svd.orthogonality_residual(), tol)?;
        Self::assemble(g, a, Decomposition::Svd(svd), tol)
    }

    fn assemble(
        g: &ConvexFunction,
        a: &Matrix,
        decomposition: Decomposition,
        tol: &Tolerances,
    ) -> Result<Self> {
        let values = match &decomposition {
            Decomposition::Eigen(e) => &e.values,
            Decomposition::Svd(s) => &s.values,
        };
        if values.iter().zip(values.iter().skip(1)).any(|(a, b)| a < b) {
            return Err(Error::InvalidArgument(
                "spectrum must be sorted descending".into(),
            ));
        }
        let t = g.threshold();
        let partition = Partition::classify(values, t, tol.tol_class);
        let band_active = values.iter().any(|&v| {
            let gap = (v - t).abs();
            gap > 0.0 && gap <= tol.tol_class
        });
        Ok(Self {
            g: *g,
            point: a.clone(),
            decomposition,
            partition,
            band_active,
            tol: *tol,
        })
    }

    pub fn g(&self) -> &ConvexFunction {
        &self.g
    }

    pub fn point(&self) -> &Matrix {
        &self.point
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.decomposition
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// Some value sat strictly inside the classification band rather than
    /// exactly on the threshold.
    pub fn band_active(&self) -> bool {
        self.band_active
    }

    pub fn values(&self) -> &Vector {
        match &self.decomposition {
            Decomposition::Eigen(e) => &e.values,
            Decomposition::Svd(s) => &s.values,
        }
    }

    /// Prox of `g` is differentiable at the point iff the boundary cell is
    /// empty.
    pub fn is_differentiable(&self) -> bool {
        self.partition.at.is_empty()
    }

    /// `PᵀYP` or `RᵀYS`.
    pub fn to_frame_basis(&self, y: &Matrix) -> Matrix {
        match &self.decomposition {
            Decomposition::Eigen(e) => e.vectors.transpose() * y * &e.vectors,
            Decomposition::Svd(s) => s.left.transpose() * y * &s.right,
        }
    }

    /// `PỸPᵀ` or `RỸSᵀ`.
    pub fn from_frame_basis(&self, yt: &Matrix) -> Matrix {
        match &self.decomposition {
            Decomposition::Eigen(e) => &e.vectors * yt * e.vectors.transpose(),
            Decomposition::Svd(s) => &s.left * yt * s.right.transpose(),
        }
    }
}

fn check_decomposition(a: &Matrix, recon: &Matrix, orth: f64, tol: &Tolerances) -> Result<()> {
    let err = (recon - a).norm();
    if orth > tol.tol_orth || err > tol.tol_recon * (1.0 + a.norm()) {
        return Err(Error::InvalidArgument(format!(
            "supplied decomposition fails its invariants (orthogonality {orth:e}, reconstruction {err:e})"
        )));
    }
    Ok(())
}

/// Frame at `x + u` after checking `u ∈ ∂g(x)`.
pub fn make_frame(
    g: &ConvexFunction,
    x: &Matrix,
    u: &Matrix,
    tol: &Tolerances,
) -> Result<SpectralFrame> {
    let pair = subgradient_check(g, x, u, tol)?;
    if !pair.valid {
        return Err(Error::InvalidSubgradient {
            residual: pair.residual,
            threshold: pair.threshold,
        });
    }
    SpectralFrame::at_point(g, &(x + u), tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{gaussian_matrix, random_symmetric, seeded, uniform};
    use proptest::prelude::*;

    fn diag(v: &[f64]) -> Matrix {
        Matrix::from_diagonal(&Vector::from_row_slice(v))
    }

    fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    fn psd3() -> ConvexFunction {
        ConvexFunction::psd_indicator(3).unwrap()
    }

    fn nuc22() -> ConvexFunction {
        ConvexFunction::nuclear_norm(2, 2).unwrap()
    }

    #[test]
    fn invalid_dimensions_rejected() {
        assert!(ConvexFunction::psd_indicator(0).is_err());
        assert!(ConvexFunction::nuclear_norm(3, 2).is_err());
        assert!(ConvexFunction::nuclear_norm(0, 2).is_err());
    }

    #[test]
    fn prox_examples() {
        let w = diag(&[2.0, 0.0, -3.0]);
        assert!(close(
            &prox_apply(&psd3(), 1.0, &w).unwrap(),
            &diag(&[2.0, 0.0, 0.0]),
            1e-14
        ));
        let n = prox_apply(&nuc22(), 1.0, &diag(&[3.0, 0.5])).unwrap();
        assert!(close(&n, &diag(&[2.0, 0.0]), 1e-14));
        let g2 = ConvexFunction::psd_indicator(2).unwrap();
        let s = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let expect = Matrix::from_element(2, 2, 0.5);
        assert!(close(&prox_apply(&g2, 1.0, &s).unwrap(), &expect, 1e-14));
    }

    #[test]
    fn prox_rejects_bad_input() {
        assert!(matches!(
            prox_apply(&psd3(), 1.0, &Matrix::zeros(2, 2)),
            Err(Error::Shape { .. })
        ));
        assert!(prox_apply(&psd3(), 0.0, &Matrix::zeros(3, 3)).is_err());
        let asym = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let g2 = ConvexFunction::psd_indicator(2).unwrap();
        assert!(matches!(
            prox_apply(&g2, 1.0, &asym),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn conjugate_prox_examples() {
        let w = diag(&[2.0, 0.0, -3.0]);
        for sigma in [0.1, 1.0, 7.0] {
            let c = prox_conjugate_apply(&psd3(), sigma, &w).unwrap();
            assert!(close(&c, &diag(&[0.0, 0.0, -3.0]), 1e-13));
        }
        let c = prox_conjugate_apply(&nuc22(), 1.0, &diag(&[3.0, 0.5])).unwrap();
        assert!(close(&c, &diag(&[1.0, 0.5]), 1e-14));
    }

    #[test]
    fn envelope_gradient_examples() {
        let w = diag(&[2.0, 0.0, -3.0]);
        let g = moreau_envelope_grad(&psd3(), 1.0, &w).unwrap();
        assert!(close(&g, &diag(&[0.0, 0.0, -3.0]), 1e-14));
        let psd = diag(&[1.0, 2.0, 0.5]);
        assert!(moreau_envelope_grad(&psd3(), 2.0, &psd).unwrap().norm() < 1e-14);
    }

    #[test]
    fn envelope_gradient_matches_central_differences() {
        let mut rng = seeded(21);
        let cases = [
            (
                psd3(),
                random_symmetric(3, &mut rng),
                random_symmetric(3, &mut rng),
            ),
            (
                ConvexFunction::nuclear_norm(2, 3).unwrap(),
                gaussian_matrix(2, 3, &mut rng) * 2.0,
                gaussian_matrix(2, 3, &mut rng),
            ),
        ];
        for (g, w, d) in cases {
            for sigma in [0.5, 1.0, 3.0] {
                let t = 1e-6;
                let fd = (moreau_envelope(&g, sigma, &(&w + &d * t)).unwrap()
                    - moreau_envelope(&g, sigma, &(&w - &d * t)).unwrap())
                    / (2.0 * t);
                let an = moreau_envelope_grad(&g, sigma, &w)
                    .unwrap()
                    .component_mul(&d)
                    .sum();
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn subgradient_examples() {
        let tol = Tolerances::default();
        let p = subgradient_check(
            &psd3(),
            &diag(&[2.0, 0.0, 0.0]),
            &diag(&[0.0, 0.0, -3.0]),
            &tol,
        )
        .unwrap();
        assert!(p.valid);
        let ok = subgradient_check(&nuc22(), &diag(&[2.0, 0.0]), &diag(&[1.0, 0.5]), &tol).unwrap();
        assert!(ok.valid);
        let bad =
            subgradient_check(&nuc22(), &diag(&[2.0, 0.0]), &diag(&[1.0, 2.0]), &tol).unwrap();
        assert!(!bad.valid);
        assert!((bad.residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frame_partitions() {
        let tol = Tolerances::default();
        let f = make_frame(
            &psd3(),
            &diag(&[2.0, 0.0, 0.0]),
            &diag(&[0.0, 0.0, -3.0]),
            &tol,
        )
        .unwrap();
        assert_eq!(f.partition().above, vec![0]);
        assert_eq!(f.partition().at, vec![1]);
        assert_eq!(f.partition().below, vec![2]);

        let n = make_frame(&nuc22(), &diag(&[2.0, 0.0]), &diag(&[1.0, 0.5]), &tol).unwrap();
        assert_eq!(n.partition().above, vec![0]);
        assert!(n.partition().at.is_empty());
        assert_eq!(n.partition().below, vec![1]);
        assert!(n.is_differentiable());

        let g23 = ConvexFunction::nuclear_norm(2, 3).unwrap();
        let x = Matrix::from_row_slice(2, 3, &[2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let u = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let f = make_frame(&g23, &x, &u, &tol).unwrap();
        assert_eq!(f.partition().above, vec![0]);
        assert_eq!(f.partition().at, vec![1]);
        assert!(f.partition().below.is_empty());
        assert!(!f.band_active());
    }

    #[test]
    fn frame_rejects_invalid_pair() {
        let tol = Tolerances::default();
        let err = make_frame(&nuc22(), &diag(&[2.0, 0.0]), &diag(&[1.0, 2.0]), &tol).unwrap_err();
        assert!(
            matches!(err, Error::InvalidSubgradient { residual, .. } if (residual - 1.0).abs() < 1e-12)
        );
    }

    #[test]
    fn band_flag_reports_near_threshold_values() {
        let tol = Tolerances::default();
        let f = SpectralFrame::at_point(&nuc22(), &diag(&[3.0, 1.0 + 1e-11]), &tol).unwrap();
        assert_eq!(f.partition().at, vec![1]);
        assert!(f.band_active());
    }

    fn random_input(
        kind: usize,
        rng: &mut crate::random::TrialRng,
    ) -> (ConvexFunction, Matrix, Matrix) {
        if kind == 0 {
            let g = ConvexFunction::psd_indicator(3).unwrap();
            (
                g,
                random_symmetric(3, rng) * 2.0,
                random_symmetric(3, rng) * 2.0,
            )
        } else {
            let g = ConvexFunction::nuclear_norm(2, 3).unwrap();
            (
                g,
                gaussian_matrix(2, 3, rng) * 2.0,
                gaussian_matrix(2, 3, rng) * 2.0,
            )
        }
    }

    #[test]
    fn nonexpansive_on_many_pairs() {
        let mut rng = seeded(99);
        for trial in 0..1000 {
            let (g, a, b) = random_input(trial % 2, &mut rng);
            for sigma in [0.1, 1.0, 10.0] {
                let pa = prox_apply(&g, sigma, &a).unwrap();
                let pb = prox_apply(&g, sigma, &b).unwrap();
                let lhs = (&pa - &pb).norm();
                assert!(lhs <= (&a - &b).norm() + 1e-12);
                // firm nonexpansiveness
                let inner = (&pa - &pb).component_mul(&(&a - &b)).sum();
                assert!(inner >= lhs * lhs - 1e-10);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn moreau_identity_holds(seed in any::<u64>(), kind in 0usize..2, sigma in 0.05f64..20.0) {
            let mut rng = seeded(seed);
            let (g, w, _) = random_input(kind, &mut rng);
            let w = w * uniform(0.1, 5.0, &mut rng);
            let lhs = prox_apply(&g, sigma, &w).unwrap()
                + prox_conjugate_apply(&g, 1.0 / sigma, &(&w / sigma)).unwrap() * sigma;
            prop_assert!((lhs - &w).norm() <= 1e-12 * (1.0 + w.norm()));
        }

        #[test]
        fn psd_projection_idempotent(seed in any::<u64>()) {
            let mut rng = seeded(seed);
            let g = ConvexFunction::psd_indicator(4).unwrap();
            let w = random_symmetric(4, &mut rng);
            let p = prox_apply(&g, 1.0, &w).unwrap();
            let pp = prox_apply(&g, 1.0, &p).unwrap();
            prop_assert!((pp - p).norm() <= 1e-12);
        }
    }
}
