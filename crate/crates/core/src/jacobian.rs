//! Elements of the generalized Jacobian of `Prox_g` and `Prox_{σg*}`.
//!
//! Every element acts in the frame of `A = x + u` as a Hadamard multiplier on
//! the rotated direction. The only free parameters live on the boundary
//! cell (β for the PSD cone, α₂ for the nuclear norm) and are carried by a
//! [`JacobianChoice`]. Operators are materialized as explicit matrices on
//! `svec`/`vec` coordinates.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::linalg::{pinv, Matrix, SymMatrix, Tolerances, Vector};
use crate::prox::{ConvexFunction, Decomposition, SpectralFrame};
use crate::random::trial_rng;

pub const DEFAULT_DIM_CAP: usize = 4096;

/// Free parameters of one Jacobian element.
#[derive(Debug, Clone, PartialEq)]
pub enum JacobianChoice {
    /// `β = plus ∪ minus` given as positions inside β; `tau` is
    /// `|plus| × |minus|`. The β block maps `D ↦ M∘D` with `M = 1` on
    /// plus×plus, `τ` on plus×minus (and transposed), `0` on minus×minus.
    Psd {
        plus: Vec<usize>,
        minus: Vec<usize>,
        tau: Matrix,
    },
    /// Symmetric `|α₂| × |α₂|` values of `Ω^α` on the boundary block.
    Nuclear { omega: Matrix },
}

impl JacobianChoice {
    /// `τ ≡ 1, β₋ = ∅` or `Ω^α ≡ 1` on α₂×α₂.
    pub fn canonical(frame: &SpectralFrame) -> Self {
        let k = frame.partition().at.len();
        match frame.g() {
            ConvexFunction::PsdIndicator { .. } => Self::Psd {
                plus: (0..k).collect(),
                minus: Vec::new(),
                tau: Matrix::zeros(k, 0),
            },
            ConvexFunction::NuclearNorm { .. } => Self::Nuclear {
                omega: Matrix::from_element(k, k, 1.0),
            },
        }
    }

    /// `k × k` multiplier on the boundary block.
    pub fn boundary_weights(&self) -> Matrix {
        match self {
            Self::Psd { plus, minus, tau } => {
                let k = plus.len() + minus.len();
                let mut m = Matrix::zeros(k, k);
                for &i in plus {
                    for &j in plus {
                        m[(i, j)] = 1.0;
                    }
                }
                for (a, &i) in plus.iter().enumerate() {
                    for (b, &j) in minus.iter().enumerate() {
                        m[(i, j)] = tau[(a, b)];
                        m[(j, i)] = tau[(a, b)];
                    }
                }
                m
            }
            Self::Nuclear { omega } => omega.clone(),
        }
    }

    pub fn validate(&self, frame: &SpectralFrame) -> Result<()> {
        let k = frame.partition().at.len();
        match (self, frame.g()) {
            (Self::Psd { plus, minus, tau }, ConvexFunction::PsdIndicator { .. }) => {
                let mut seen: Vec<usize> = plus.iter().chain(minus).copied().collect();
                seen.sort_unstable();
                if seen != (0..k).collect::<Vec<_>>() {
                    return Err(Error::InvalidArgument(format!(
                        "plus/minus must partition the {k} boundary positions"
                    )));
                }
                if tau.shape() != (plus.len(), minus.len()) {
                    return Err(shape_err(
                        format!("tau {}x{}", plus.len(), minus.len()),
                        format!("{}x{}", tau.nrows(), tau.ncols()),
                    ));
                }
                if tau.iter().any(|t| !(0.0..=1.0).contains(t)) {
                    return Err(Error::InvalidArgument(
                        "tau entries must lie in [0, 1]".into(),
                    ));
                }
                Ok(())
            }
            (Self::Nuclear { omega }, ConvexFunction::NuclearNorm { .. }) => {
                if omega.shape() != (k, k) {
                    return Err(shape_err(
                        format!("omega {k}x{k}"),
                        format!("{}x{}", omega.nrows(), omega.ncols()),
                    ));
                }
                if omega != &omega.transpose() {
                    return Err(Error::InvalidArgument("omega must be symmetric".into()));
                }
                if omega.iter().any(|t| !(0.0..=1.0).contains(t)) {
                    return Err(Error::InvalidArgument(
                        "omega entries must lie in [0, 1]".into(),
                    ));
                }
                Ok(())
            }
            _ => Err(Error::InvalidArgument(
                "Jacobian choice does not match the frame's function".into(),
            )),
        }
    }
}

/// Hadamard multipliers of one element in frame coordinates.
enum Multipliers {
    Psd(Matrix),
    Nuclear {
        alpha: Matrix,
        gamma: Matrix,
        beta: Matrix,
    },
}

fn h(t: f64) -> f64 {
    (t - 1.0).max(0.0)
}

fn multipliers(frame: &SpectralFrame, choice: &JacobianChoice) -> Multipliers {
    let part = frame.partition();
    let v = frame.values();
    let weights = choice.boundary_weights();
    match frame.decomposition() {
        Decomposition::Eigen(_) => {
            let m = v.len();
            let mut om = Matrix::zeros(m, m);
            for &i in &part.above {
                for &j in part.above.iter().chain(&part.at) {
                    om[(i, j)] = 1.0;
                    om[(j, i)] = 1.0;
                }
                for &j in &part.below {
                    let s = v[i] / (v[i] - v[j]);
                    om[(i, j)] = s;
                    om[(j, i)] = s;
                }
            }
            for (a, &i) in part.at.iter().enumerate() {
                for (b, &j) in part.at.iter().enumerate() {
                    om[(i, j)] = weights[(a, b)];
                }
            }
            Multipliers::Psd(om)
        }
        Decomposition::Svd(s) => {
            let (p, q) = (s.rows(), s.cols());
            let mut alpha = Matrix::zeros(p, p);
            let mut gamma = Matrix::zeros(p, p);
            let mut beta = Matrix::zeros(p, q - p);
            for &i in &part.above {
                for &j in part.above.iter().chain(&part.at) {
                    alpha[(i, j)] = 1.0;
                    alpha[(j, i)] = 1.0;
                }
                for &j in &part.below {
                    let w = (v[i] - 1.0) / (v[i] - v[j]);
                    alpha[(i, j)] = w;
                    alpha[(j, i)] = w;
                }
                for j in 0..p {
                    let w = (h(v[i]) + h(v[j])) / (v[i] + v[j]);
                    gamma[(i, j)] = w;
                    gamma[(j, i)] = w;
                }
                for j in 0..q - p {
                    beta[(i, j)] = (v[i] - 1.0) / v[i];
                }
            }
            for (a, &i) in part.at.iter().enumerate() {
                for (b, &j) in part.at.iter().enumerate() {
                    alpha[(i, j)] = weights[(a, b)];
                }
            }
            Multipliers::Nuclear { alpha, gamma, beta }
        }
    }
}

fn apply_multipliers(frame: &SpectralFrame, mult: &Multipliers, d: &Matrix) -> Matrix {
    let dt = frame.to_frame_basis(d);
    let vt = match mult {
        Multipliers::Psd(om) => om.component_mul(&dt),
        Multipliers::Nuclear { alpha, gamma, beta } => {
            let p = dt.nrows();
            let q = dt.ncols();
            let d1 = dt.columns(0, p);
            let sym = (d1 + d1.transpose()) * 0.5;
            let anti = (d1 - d1.transpose()) * 0.5;
            let mut out = Matrix::zeros(p, q);
            out.columns_mut(0, p)
                .copy_from(&(alpha.component_mul(&sym) + gamma.component_mul(&anti)));
            out.columns_mut(p, q - p)
                .copy_from(&beta.component_mul(&dt.columns(p, q - p)));
            out
        }
    };
    frame.from_frame_basis(&vt)
}

/// Directional application `V = W(D)` of the element selected by `choice`.
pub fn jacobian_apply(
    frame: &SpectralFrame,
    choice: &JacobianChoice,
    d: &Matrix,
) -> Result<Matrix> {
    choice.validate(frame)?;
    frame.g().check_shape(d)?;
    let d = match frame.g() {
        ConvexFunction::PsdIndicator { .. } => {
            SymMatrix::from_nearly_symmetric(d, 1e-12 * (1.0 + d.norm()))?.into_inner()
        }
        ConvexFunction::NuclearNorm { .. } => d.clone(),
    };
    Ok(apply_multipliers(frame, &multipliers(frame, choice), &d))
}

/// A materialized Jacobian element on `svec`/`vec` coordinates. When
/// `conjugate` is set the matrix is `I − W` for the element `W` of the choice.
#[derive(Debug, Clone)]
pub struct ProxOperator {
    frame: Arc<SpectralFrame>,
    choice: JacobianChoice,
    conjugate: bool,
    matrix: Matrix,
}

impl ProxOperator {
    pub fn materialize(
        frame: Arc<SpectralFrame>,
        choice: JacobianChoice,
        cap: usize,
    ) -> Result<Self> {
        choice.validate(&frame)?;
        let g = *frame.g();
        let n = g.coord_dim();
        if n > cap {
            return Err(Error::DimensionCap { dim: n, cap });
        }
        let mult = multipliers(&frame, &choice);
        let mut matrix = Matrix::zeros(n, n);
        for k in 0..n {
            let e = g.from_coords(&Vector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 }))?;
            let col = g.to_coords(&apply_multipliers(&frame, &mult, &e));
            matrix.set_column(k, &col);
        }
        Ok(Self {
            frame,
            choice,
            conjugate: false,
            matrix,
        })
    }

    /// `I − W`, the matching element of the conjugate prox Jacobian.
    pub fn conjugate(&self) -> Self {
        let n = self.matrix.nrows();
        Self {
            frame: Arc::clone(&self.frame),
            choice: self.choice.clone(),
            conjugate: !self.conjugate,
            matrix: Matrix::identity(n, n) - &self.matrix,
        }
    }

    pub fn frame(&self) -> &SpectralFrame {
        &self.frame
    }

    pub fn choice(&self) -> &JacobianChoice {
        &self.choice
    }

    pub fn is_conjugate(&self) -> bool {
        self.conjugate
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, d: &Matrix) -> Result<Matrix> {
        let g = self.frame.g();
        g.check_shape(d)?;
        g.from_coords(&(&self.matrix * g.to_coords(d)))
    }
}

pub fn canonical_element(frame: &SpectralFrame) -> Result<ProxOperator> {
    ProxOperator::materialize(
        Arc::new(frame.clone()),
        JacobianChoice::canonical(frame),
        DEFAULT_DIM_CAP,
    )
}

/// The canonical element together with its pseudoinverse and the range
/// projector `W̄W̄†`.
#[derive(Debug, Clone)]
pub struct CanonicalRange {
    pub element: ProxOperator,
    pub pinv: Matrix,
    pub projector: Matrix,
    tol: Tolerances,
}

/// Result of a range-membership test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membership {
    /// `‖(I − W̄W̄†)v‖`
    pub residual: f64,
    pub threshold: f64,
    pub inside: bool,
}

impl CanonicalRange {
    pub fn new(frame: &SpectralFrame) -> Result<Self> {
        let element = canonical_element(frame)?;
        let tol = *frame.tolerances();
        let pinv = pinv(element.matrix(), tol.tol_class)?;
        let projector = element.matrix() * &pinv;
        Ok(Self {
            element,
            pinv,
            projector,
            tol,
        })
    }

    pub fn frame(&self) -> &SpectralFrame {
        self.element.frame()
    }

    pub fn membership(&self, v: &Vector) -> Membership {
        let residual = (v - &self.projector * v).norm();
        let threshold = self.tol.tol_range * (1.0 + v.norm());
        Membership {
            residual,
            threshold,
            inside: residual <= threshold,
        }
    }
}

pub fn range_projector(frame: &SpectralFrame) -> Result<Matrix> {
    Ok(CanonicalRange::new(frame)?.projector)
}

/// Sampled limiting elements; `exhaustive` when every generator of the
/// pattern family was enumerated.
#[derive(Debug, Clone)]
pub struct ElementSample {
    pub elements: Vec<ProxOperator>,
    pub exhaustive: bool,
}

fn psd_pattern_count(k: usize) -> u128 {
    let mut total: u128 = 0;
    for s in 0..=k {
        let binom = (0..s).fold(1u128, |acc, i| acc * (k - i) as u128 / (i as u128 + 1));
        let bits = (s * (k - s)) as u32;
        let patterns = if bits >= 100 {
            u128::MAX / 4
        } else {
            1u128 << bits
        };
        total = total.saturating_add(binom.saturating_mul(patterns));
    }
    total
}

fn nuclear_pattern_count(k: usize) -> u128 {
    let bits = (k * (k + 1) / 2) as u32;
    if bits >= 100 {
        u128::MAX
    } else {
        1u128 << bits
    }
}

fn psd_choice(k: usize, plus_mask: u64, tau_bits: u64) -> JacobianChoice {
    let plus: Vec<usize> = (0..k).filter(|i| plus_mask >> i & 1 == 1).collect();
    let minus: Vec<usize> = (0..k).filter(|i| plus_mask >> i & 1 == 0).collect();
    let cols = minus.len();
    let tau = Matrix::from_fn(plus.len(), cols, |a, b| {
        ((tau_bits >> (a * cols + b)) & 1) as f64
    });
    JacobianChoice::Psd { plus, minus, tau }
}

fn nuclear_choice(k: usize, bits: u64) -> JacobianChoice {
    let mut omega = Matrix::zeros(k, k);
    let mut b = 0;
    for i in 0..k {
        for j in i..k {
            let w = ((bits >> b) & 1) as f64;
            omega[(i, j)] = w;
            omega[(j, i)] = w;
            b += 1;
        }
    }
    JacobianChoice::Nuclear { omega }
}

fn choice_key(c: &JacobianChoice) -> Vec<u8> {
    c.boundary_weights().iter().map(|&w| w as u8).collect()
}

/// Generator patterns on the boundary block: all of them when their number
/// fits in `budget`, otherwise a seeded random sample of `budget` distinct
/// patterns. The canonical choice always comes first.
pub fn limiting_choices(
    frame: &SpectralFrame,
    budget: usize,
    seed: u64,
) -> Result<(Vec<JacobianChoice>, bool)> {
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be at least 1".into()));
    }
    let k = frame.partition().at.len();
    let canonical = JacobianChoice::canonical(frame);
    let is_psd = matches!(frame.g(), ConvexFunction::PsdIndicator { .. });
    let count = if is_psd {
        psd_pattern_count(k)
    } else {
        nuclear_pattern_count(k)
    };
    let mut seen = BTreeSet::new();
    seen.insert(choice_key(&canonical));
    let mut out = vec![canonical];

    if count <= budget as u128 {
        if is_psd {
            for mask in 0..(1u64 << k) {
                let s = mask.count_ones() as usize;
                for tau_bits in 0..(1u64 << (s * (k - s))) {
                    let c = psd_choice(k, mask, tau_bits);
                    if seen.insert(choice_key(&c)) {
                        out.push(c);
                    }
                }
            }
        } else {
            for bits in 0..(1u64 << (k * (k + 1) / 2)) {
                let c = nuclear_choice(k, bits);
                if seen.insert(choice_key(&c)) {
                    out.push(c);
                }
            }
        }
        return Ok((out, true));
    }

    let mut rng = trial_rng(seed, 0);
    let mut attempts = 0usize;
    while out.len() < budget && attempts < 20 * budget {
        attempts += 1;
        let c = if is_psd {
            let plus: Vec<usize> = (0..k).filter(|_| rng.random::<bool>()).collect();
            let minus: Vec<usize> = (0..k).filter(|i| !plus.contains(i)).collect();
            let tau = Matrix::from_fn(plus.len(), minus.len(), |_, _| {
                if rng.random::<bool>() {
                    1.0
                } else {
                    0.0
                }
            });
            JacobianChoice::Psd { plus, minus, tau }
        } else {
            let mut omega = Matrix::zeros(k, k);
            for i in 0..k {
                for j in i..k {
                    let w = if rng.random::<bool>() { 1.0 } else { 0.0 };
                    omega[(i, j)] = w;
                    omega[(j, i)] = w;
                }
            }
            JacobianChoice::Nuclear { omega }
        };
        if seen.insert(choice_key(&c)) {
            out.push(c);
        }
    }
    Ok((out, false))
}

pub fn sample_limiting_elements(
    frame: &SpectralFrame,
    budget: usize,
    seed: u64,
) -> Result<ElementSample> {
    let (choices, exhaustive) = limiting_choices(frame, budget, seed)?;
    let shared = Arc::new(frame.clone());
    let elements = choices
        .into_iter()
        .map(|c| ProxOperator::materialize(Arc::clone(&shared), c, DEFAULT_DIM_CAP))
        .collect::<Result<Vec<_>>>()?;
    Ok(ElementSample {
        elements,
        exhaustive,
    })
}

/// Elements `I − W` of `J Prox_{σg*}(w)`. By positive homogeneity,
/// `J Prox_{σ⁻¹g}(w/σ) = J Prox_g(w)`, so `W` is sampled in the frame of `w`
/// itself with the unit threshold.
pub fn conjugate_jacobian_elements(
    g: &ConvexFunction,
    sigma: f64,
    w: &Matrix,
    budget: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<ElementSample> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let frame = SpectralFrame::at_point(g, w, tol)?;
    let sample = sample_limiting_elements(&frame, budget, seed)?;
    Ok(ElementSample {
        elements: sample
            .elements
            .iter()
            .map(ProxOperator::conjugate)
            .collect(),
        exhaustive: sample.exhaustive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{lambda_min, svec_index};
    use crate::prox::make_frame;
    use crate::random::{random_orthogonal, seeded, uniform};
    use proptest::prelude::*;

    fn diag(v: &[f64]) -> Matrix {
        Matrix::from_diagonal(&Vector::from_row_slice(v))
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn psd_frame(values: &[f64]) -> SpectralFrame {
        let g = ConvexFunction::psd_indicator(values.len()).unwrap();
        SpectralFrame::at_point(&g, &diag(values), &tol()).unwrap()
    }

    fn sym_unit(m: usize, i: usize, j: usize) -> Matrix {
        let mut e = Matrix::zeros(m, m);
        e[(i, j)] = 1.0;
        e[(j, i)] = 1.0;
        e
    }

    #[test]
    fn psd_apply_examples() {
        let f = psd_frame(&[2.0, 0.0, -3.0]);
        let c = JacobianChoice::canonical(&f);
        let v = jacobian_apply(&f, &c, &sym_unit(3, 0, 2)).unwrap();
        assert!((v[(0, 2)] - 0.4).abs() < 1e-14);
        let mut e33 = Matrix::zeros(3, 3);
        e33[(2, 2)] = 1.0;
        assert!(jacobian_apply(&f, &c, &e33).unwrap().norm() < 1e-14);
    }

    #[test]
    fn psd_canonical_diagonal_on_svec() {
        let f = psd_frame(&[2.0, 0.0, -3.0]);
        let w = canonical_element(&f).unwrap();
        let expect = [
            ((0, 0), 1.0),
            ((0, 1), 1.0),
            ((1, 1), 1.0),
            ((0, 2), 0.4),
            ((1, 2), 0.0),
            ((2, 2), 0.0),
        ];
        let mut want = Matrix::zeros(6, 6);
        for ((i, j), val) in expect {
            let k = svec_index(3, i, j);
            want[(k, k)] = val;
        }
        assert!((w.matrix() - want).amax() < 1e-14);

        let pd = canonical_element(&psd_frame(&[3.0, 1.0, 0.5])).unwrap();
        assert!((pd.matrix() - Matrix::identity(6, 6)).amax() < 1e-14);
    }

    #[test]
    fn nuclear_canonical_spectrum() {
        let g = ConvexFunction::nuclear_norm(2, 2).unwrap();
        let f = SpectralFrame::at_point(&g, &diag(&[3.0, 0.5]), &tol()).unwrap();
        let w = canonical_element(&f).unwrap();
        // coordinate (1,1) is untouched, (2,2) is annihilated
        assert!((w.matrix()[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(w.matrix().row(3).norm() < 1e-14);
        assert!((w.matrix() - w.matrix().transpose()).amax() < 1e-14);
    }

    #[test]
    fn range_projector_examples() {
        let f = psd_frame(&[2.0, 0.0, -3.0]);
        let p = range_projector(&f).unwrap();
        let mut want = Matrix::zeros(6, 6);
        for (i, j) in [(0, 0), (0, 1), (1, 1), (0, 2)] {
            let k = svec_index(3, i, j);
            want[(k, k)] = 1.0;
        }
        assert!((&p - want).amax() < 1e-12);
        let id = range_projector(&psd_frame(&[3.0, 1.0])).unwrap();
        assert!((id - Matrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn range_membership_matches_block_pattern() {
        let mut rng = seeded(17);
        let g = ConvexFunction::psd_indicator(4).unwrap();
        let p = random_orthogonal(4, &mut rng);
        let a = &p * diag(&[2.0, 0.0, 0.0, -1.5]) * p.transpose();
        let f = SpectralFrame::at_point(&g, &a, &tol()).unwrap();
        let r = CanonicalRange::new(&f).unwrap();
        let part = f.partition().clone();
        for trial in 0..200 {
            let mut yt = Matrix::from_fn(4, 4, |_, _| uniform(-1.0, 1.0, &mut rng));
            yt = (&yt + yt.transpose()) * 0.5;
            if trial % 2 == 0 {
                for &i in part.at.iter().chain(&part.below) {
                    for &j in &part.below {
                        yt[(i, j)] = 0.0;
                        yt[(j, i)] = 0.0;
                    }
                }
            }
            let y = f.from_frame_basis(&yt);
            let pattern = part.at.iter().chain(&part.below).all(|&i| {
                part.below
                    .iter()
                    .all(|&j| f.to_frame_basis(&y)[(i, j)].abs() < 1e-9)
            });
            assert_eq!(
                r.membership(&g.to_coords(&y)).inside,
                pattern,
                "trial {trial}"
            );
        }
    }

    #[test]
    fn sample_sizes() {
        let single = sample_limiting_elements(&psd_frame(&[2.0, 1.0, -3.0]), 64, 0).unwrap();
        assert_eq!(single.elements.len(), 1);
        assert!(single.exhaustive);

        let two = sample_limiting_elements(&psd_frame(&[2.0, 0.0, -3.0]), 64, 0).unwrap();
        assert_eq!(two.elements.len(), 2);
        let kb = svec_index(3, 1, 1);
        assert_eq!(two.elements[0].matrix()[(kb, kb)], 1.0);
        assert_eq!(two.elements[1].matrix()[(kb, kb)], 0.0);

        let g = ConvexFunction::nuclear_norm(2, 3).unwrap();
        let a = Matrix::from_row_slice(2, 3, &[3.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let f = SpectralFrame::at_point(&g, &a, &tol()).unwrap();
        let s = sample_limiting_elements(&f, 64, 0).unwrap();
        assert_eq!(s.elements.len(), 2);
        assert!(s.exhaustive);

        assert_eq!(psd_pattern_count(4), 162);
        let big = sample_limiting_elements(&psd_frame(&[0.0; 6]), 40, 3).unwrap();
        assert_eq!(big.elements.len(), 40);
        assert!(!big.exhaustive);
        assert!(sample_limiting_elements(&psd_frame(&[1.0]), 0, 0).is_err());
    }

    #[test]
    fn conjugate_examples() {
        let g = ConvexFunction::psd_indicator(3).unwrap();
        for sigma in [0.5, 1.0, 4.0] {
            let s = conjugate_jacobian_elements(&g, sigma, &diag(&[2.0, 0.0, -3.0]), 16, 0, &tol())
                .unwrap();
            let c = s.elements[0].matrix();
            let want = [
                ((0, 0), 0.0),
                ((0, 1), 0.0),
                ((1, 1), 0.0),
                ((0, 2), 0.6),
                ((1, 2), 1.0),
                ((2, 2), 1.0),
            ];
            for ((i, j), val) in want {
                let k = svec_index(3, i, j);
                assert!((c[(k, k)] - val).abs() < 1e-14);
            }
        }
        let s =
            conjugate_jacobian_elements(&g, 1.0, &diag(&[1.0, 2.0, 0.5]), 16, 0, &tol()).unwrap();
        assert!(s.elements[0].matrix().amax() < 1e-14);
        let g1 = ConvexFunction::psd_indicator(1).unwrap();
        let s = conjugate_jacobian_elements(&g1, 2.0, &diag(&[-1.0]), 16, 0, &tol()).unwrap();
        assert_eq!(s.elements.len(), 1);
        assert_eq!(s.elements[0].matrix()[(0, 0)], 1.0);
    }

    #[test]
    fn choice_validation() {
        let f = psd_frame(&[2.0, 0.0, 0.0]);
        let bad = JacobianChoice::Psd {
            plus: vec![0],
            minus: vec![0],
            tau: Matrix::zeros(1, 1),
        };
        assert!(bad.validate(&f).is_err());
        let wrong_kind = JacobianChoice::Nuclear {
            omega: Matrix::zeros(2, 2),
        };
        assert!(wrong_kind.validate(&f).is_err());
        let ok = JacobianChoice::Psd {
            plus: vec![1],
            minus: vec![0],
            tau: Matrix::from_element(1, 1, 0.3),
        };
        assert!(ok.validate(&f).is_ok());
        let m = ok.boundary_weights();
        assert_eq!(m, Matrix::from_row_slice(2, 2, &[0.0, 0.3, 0.3, 1.0]));
    }

    #[test]
    fn dimension_cap_enforced() {
        let f = psd_frame(&[1.0, 2.0, 3.0]);
        let err = ProxOperator::materialize(Arc::new(f.clone()), JacobianChoice::canonical(&f), 5)
            .unwrap_err();
        assert_eq!(err, Error::DimensionCap { dim: 6, cap: 5 });
    }

    #[test]
    fn make_frame_feeds_elements() {
        let g = ConvexFunction::nuclear_norm(2, 2).unwrap();
        let f = make_frame(&g, &diag(&[2.0, 0.0]), &diag(&[1.0, 0.5]), &tol()).unwrap();
        let w = canonical_element(&f).unwrap();
        let y = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let direct = jacobian_apply(&f, &JacobianChoice::canonical(&f), &y).unwrap();
        assert!((w.apply(&y).unwrap() - direct).norm() < 1e-14);
    }

    /// Random frame whose boundary cell is forced to be non-empty.
    pub(super) fn random_frame(seed: u64, kind: usize) -> SpectralFrame {
        let mut rng = seeded(seed);
        if kind == 0 {
            let m = 4;
            let p = random_orthogonal(m, &mut rng);
            let vals: Vec<f64> = (0..m)
                .map(|i| match (i + seed as usize) % 3 {
                    0 => uniform(0.3, 3.0, &mut rng),
                    1 => 0.0,
                    _ => -uniform(0.3, 3.0, &mut rng),
                })
                .collect();
            let a = &p * diag(&vals) * p.transpose();
            let g = ConvexFunction::psd_indicator(m).unwrap();
            SpectralFrame::at_point(&g, &crate::linalg::symmetric_part(&a), &tol()).unwrap()
        } else {
            let (pp, qq) = (3, 4);
            let r = random_orthogonal(pp, &mut rng);
            let s = random_orthogonal(qq, &mut rng);
            let mut mid = Matrix::zeros(pp, qq);
            let mut vals: Vec<f64> = (0..pp)
                .map(|i| match (i + seed as usize) % 3 {
                    0 => uniform(1.3, 3.0, &mut rng),
                    1 => 1.0,
                    _ => uniform(0.0, 0.7, &mut rng),
                })
                .collect();
            vals.sort_by(|a, b| b.total_cmp(a));
            for i in 0..pp {
                mid[(i, i)] = vals[i];
            }
            let g = ConvexFunction::nuclear_norm(pp, qq).unwrap();
            let svd = crate::linalg::SvdFrame {
                left: r.clone(),
                right: s.clone(),
                values: Vector::from_vec(vals),
            };
            let a = svd.reconstruct();
            SpectralFrame::from_svd(&g, &a, svd, &tol()).unwrap()
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn elements_are_self_adjoint_contractions_in_canonical_range(
            seed in any::<u64>(), kind in 0usize..2,
        ) {
            let f = random_frame(seed, kind);
            let r = CanonicalRange::new(&f).unwrap();
            let n = r.projector.nrows();
            let s = sample_limiting_elements(&f, 64, seed).unwrap();
            for e in &s.elements {
                let w = e.matrix();
                prop_assert!((w - w.transpose()).amax() <= 1e-10);
                prop_assert!(lambda_min(w) >= -1e-10);
                prop_assert!(lambda_min(&(Matrix::identity(n, n) - w)) >= -1e-10);
                prop_assert!(((Matrix::identity(n, n) - &r.projector) * w).norm() <= 1e-8);
            }
            let idem = &r.projector * &r.projector - &r.projector;
            prop_assert!(idem.amax() <= 1e-10);
        }
    }
}
