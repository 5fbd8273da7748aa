//! Second-order variational function, SSOSC and the augmented-Lagrangian
//! Hessian sweep.
//!
//! The problem is `min ½xᵀQx + cᵀx + const + g(A₀ + Σ xᵢAᵢ)`. SSOSC is
//! decided on the subspace `K = {d : F'd ∈ rge W̄}`, where the second-order
//! variational function is the quadratic form `⟨v, (W̄† − I)v⟩`; off `K` it
//! is `+∞`. The sweep tests positive-definiteness of `Q + σ F'ᵀ U F'` over
//! sampled elements `U` of `J Prox_{σg*}(ū + σF(x̄))`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, shape_err, Error, Result};
use crate::jacobian::{conjugate_jacobian_elements, CanonicalRange, ProxOperator};
use crate::linalg::{
    lambda_min, max_asymmetry, null_space_basis, symmetric_part, Matrix, Tolerances, Vector,
};
use crate::parallel;
use crate::prox::{make_frame, subgradient_check, ConvexFunction, Partition, SpectralFrame};
use crate::random::trial_rng;

const SYMMETRY_TOL: f64 = 1e-12;

pub const DEFAULT_SIGMA_GRID: [f64; 5] = [1.0, 10.0, 100.0, 1000.0, 10000.0];
pub const DEFAULT_BUDGET: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeProblem {
    q: Matrix,
    c: Vector,
    constant: f64,
    a0: Matrix,
    a: Vec<Matrix>,
    g: ConvexFunction,
}

fn check_matrix_shape(key: &str, m: &Matrix, shape: (usize, usize)) -> Result<()> {
    if m.shape() != shape {
        return Err(input_err(
            key,
            format!(
                "expected {}x{}, found {}x{}",
                shape.0,
                shape.1,
                m.nrows(),
                m.ncols()
            ),
        ));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(input_err(key, "non-finite entry"));
    }
    Ok(())
}

fn check_symmetric(key: &str, m: &Matrix) -> Result<()> {
    let asym = max_asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(input_err(
            key,
            format!("not symmetric (max |a_ij - a_ji| = {asym:e})"),
        ));
    }
    Ok(())
}

impl CompositeProblem {
    /// Validates shapes and symmetry; `Q` and, for the PSD cone, `A₀, Aᵢ`
    /// must be symmetric to 1e-12 and are stored as their symmetric parts.
    pub fn new(
        q: Matrix,
        c: Vector,
        constant: f64,
        a0: Matrix,
        a: Vec<Matrix>,
        g: ConvexFunction,
    ) -> Result<Self> {
        g.validate()?;
        let n = c.len();
        if n == 0 {
            return Err(input_err("n", "decision dimension must be positive"));
        }
        check_matrix_shape("f0.Q", &q, (n, n))?;
        check_symmetric("f0.Q", &q)?;
        if c.iter().any(|v| !v.is_finite()) || !constant.is_finite() {
            return Err(input_err("f0", "non-finite entry"));
        }
        if a.len() != n {
            return Err(input_err(
                "F.A",
                format!("expected {n} matrices, found {}", a.len()),
            ));
        }
        let shape = g.shape();
        let psd = matches!(g, ConvexFunction::PsdIndicator { .. });
        check_matrix_shape("F.A0", &a0, shape)?;
        if psd {
            check_symmetric("F.A0", &a0)?;
        }
        for (i, ai) in a.iter().enumerate() {
            let key = format!("F.A[{i}]");
            check_matrix_shape(&key, ai, shape)?;
            if psd {
                check_symmetric(&key, ai)?;
            }
        }
        let (a0, a) = if psd {
            (symmetric_part(&a0), a.iter().map(symmetric_part).collect())
        } else {
            (a0, a)
        };
        Ok(Self {
            q: symmetric_part(&q),
            c,
            constant,
            a0,
            a,
            g,
        })
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn g(&self) -> &ConvexFunction {
        &self.g
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn c(&self) -> &Vector {
        &self.c
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn a0(&self) -> &Matrix {
        &self.a0
    }

    pub fn a(&self) -> &[Matrix] {
        &self.a
    }

    fn check_x(&self, x: &Vector) -> Result<()> {
        if x.len() != self.n() {
            return Err(shape_err(
                format!("x of length {}", self.n()),
                format!("length {}", x.len()),
            ));
        }
        Ok(())
    }

    /// `F(x) = A₀ + Σ xᵢAᵢ`
    pub fn map(&self, x: &Vector) -> Result<Matrix> {
        self.check_x(x)?;
        Ok(self
            .a
            .iter()
            .zip(x.iter())
            .fold(self.a0.clone(), |acc, (ai, &xi)| acc + ai * xi))
    }

    /// `F'(x)ᵀu = (⟨Aᵢ, u⟩)ᵢ`
    pub fn adjoint(&self, u: &Matrix) -> Result<Vector> {
        self.g.check_shape(u)?;
        Ok(Vector::from_iterator(
            self.n(),
            self.a.iter().map(|ai| ai.component_mul(u).sum()),
        ))
    }

    /// `Q x + c`
    pub fn grad_f0(&self, x: &Vector) -> Result<Vector> {
        self.check_x(x)?;
        Ok(&self.q * x + &self.c)
    }

    /// Columns are the coordinates of `Aᵢ`.
    pub fn fmat(&self) -> Matrix {
        let dim = self.g.coord_dim();
        let mut m = Matrix::zeros(dim, self.n());
        for (i, ai) in self.a.iter().enumerate() {
            m.set_column(i, &self.g.to_coords(ai));
        }
        m
    }

    /// Scale used by positive-definiteness decisions: `tol_pd · (1 + ‖Q‖_F)`.
    pub fn pd_threshold(&self, tol: &Tolerances) -> f64 {
        tol.tol_pd * (1.0 + self.q.norm())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktCandidate {
    pub x: Vector,
    pub u: Matrix,
    /// `‖Qx̄ + c + F'ᵀū‖`
    pub stationarity: f64,
    /// `‖Prox_g(F(x̄) + ū) − F(x̄)‖`
    pub subgradient: f64,
    pub threshold: f64,
    pub valid: bool,
}

impl KktCandidate {
    pub fn evaluate(
        problem: &CompositeProblem,
        x: Vector,
        u: Matrix,
        tol: &Tolerances,
    ) -> Result<Self> {
        let fx = problem.map(&x)?;
        let stationarity = (problem.grad_f0(&x)? + problem.adjoint(&u)?).norm();
        let subgradient = subgradient_check(problem.g(), &fx, &u, tol)?.residual;
        let threshold = tol.tol_range * (1.0 + x.norm() + u.norm());
        Ok(Self {
            valid: stationarity <= threshold && subgradient <= threshold,
            x,
            u,
            stationarity,
            subgradient,
            threshold,
        })
    }

    pub fn require_valid(&self) -> Result<()> {
        if self.valid {
            Ok(())
        } else {
            Err(Error::InvalidKkt {
                stationarity: self.stationarity,
                subgradient: self.subgradient,
                threshold: self.threshold,
            })
        }
    }
}

fn h(t: f64) -> f64 {
    (t - 1.0).max(0.0)
}

/// Closed-form Γ and the quadratic form Υ at one frame.
#[derive(Debug, Clone)]
pub struct Sovf {
    range: CanonicalRange,
}

impl Sovf {
    pub fn new(frame: &SpectralFrame) -> Result<Self> {
        Ok(Self {
            range: CanonicalRange::new(frame)?,
        })
    }

    pub fn frame(&self) -> &SpectralFrame {
        self.range.frame()
    }

    pub fn range(&self) -> &CanonicalRange {
        &self.range
    }

    fn coords(&self, y: &Matrix) -> Result<Vector> {
        let g = self.frame().g();
        g.check_shape(y)?;
        if matches!(g, ConvexFunction::PsdIndicator { .. }) {
            let asym = max_asymmetry(y);
            if asym > SYMMETRY_TOL * (1.0 + y.norm()) {
                return Err(Error::NotSymmetric(asym));
            }
        }
        Ok(g.to_coords(y))
    }

    /// Γ(Y): `+∞` off the range of `W̄`, the spectral closed form on it.
    pub fn gamma(&self, y: &Matrix) -> Result<f64> {
        let v = self.coords(y)?;
        if !self.range.membership(&v).inside {
            return Ok(f64::INFINITY);
        }
        let frame = self.frame();
        let yt = frame.to_frame_basis(y);
        let part = frame.partition();
        let s = frame.values();
        let value = match frame.g() {
            ConvexFunction::PsdIndicator { .. } => {
                let mut acc = 0.0;
                for &i in &part.above {
                    for &j in &part.below {
                        acc += (s[j] / s[i]) * yt[(i, j)].powi(2);
                    }
                }
                -2.0 * acc
            }
            ConvexFunction::NuclearNorm { p, q } => {
                let (p, q) = (*p, *q);
                let mut acc = 0.0;
                for &i in &part.above {
                    for &j in part.above.iter().chain(&part.at).filter(|&&j| j > i) {
                        let a = (yt[(i, j)] - yt[(j, i)]) / 2.0;
                        acc += 2.0 * ((s[i] + s[j]) / (h(s[i]) + h(s[j])) - 1.0) * a * a;
                    }
                    for &j in &part.below {
                        let sym = (yt[(i, j)] + yt[(j, i)]) / 2.0;
                        let a = (yt[(i, j)] - yt[(j, i)]) / 2.0;
                        acc += 2.0
                            * ((1.0 - s[j]) / (s[i] - 1.0) * sym * sym
                                + (1.0 + s[j]) / (s[i] - 1.0) * a * a);
                    }
                    let tail: f64 = (p..q).map(|j| yt[(i, j)].powi(2)).sum();
                    acc += tail / (s[i] - 1.0);
                }
                acc
            }
        };
        Ok(value)
    }

    /// Υ(v) = ⟨v, (W̄† − I)v⟩; `v` must lie in the range of `W̄`.
    pub fn upsilon(&self, v: &Matrix) -> Result<f64> {
        let vv = self.coords(v)?;
        let m = self.range.membership(&vv);
        if !m.inside {
            return Err(Error::OutsideRange {
                residual: m.residual,
                threshold: m.threshold,
            });
        }
        Ok(vv.dot(&(&self.range.pinv * &vv)) - vv.norm_squared())
    }
}

pub fn gamma_closed_form(frame: &SpectralFrame, y: &Matrix) -> Result<f64> {
    Sovf::new(frame)?.gamma(y)
}

pub fn upsilon(frame: &SpectralFrame, v: &Matrix) -> Result<f64> {
    Sovf::new(frame)?.upsilon(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsoscResult {
    /// `λ_min` of the reduced form; `+∞` when `K = {0}`.
    pub margin: f64,
    pub holds: bool,
    pub subspace_dim: usize,
    pub threshold: f64,
}

pub fn frame_at_candidate(
    problem: &CompositeProblem,
    kkt: &KktCandidate,
    tol: &Tolerances,
) -> Result<SpectralFrame> {
    kkt.require_valid()?;
    make_frame(problem.g(), &problem.map(&kkt.x)?, &kkt.u, tol)
}

pub fn ssosc_margin(
    problem: &CompositeProblem,
    kkt: &KktCandidate,
    tol: &Tolerances,
) -> Result<SsoscResult> {
    let frame = frame_at_candidate(problem, kkt, tol)?;
    let range = CanonicalRange::new(&frame)?;
    let fmat = problem.fmat();
    let dim = fmat.nrows();
    let constraint = (Matrix::identity(dim, dim) - &range.projector) * &fmat;
    let basis = null_space_basis(&constraint, tol.tol_class)?;
    let threshold = problem.pd_threshold(tol);
    if basis.ncols() == 0 {
        return Ok(SsoscResult {
            margin: f64::INFINITY,
            holds: true,
            subspace_dim: 0,
            threshold,
        });
    }
    let curvature = &range.pinv - Matrix::identity(dim, dim);
    let full = problem.q() + fmat.transpose() * curvature * &fmat;
    let reduced = basis.transpose() * full * &basis;
    let margin = lambda_min(&reduced);
    Ok(SsoscResult {
        margin,
        holds: margin > threshold,
        subspace_dim: basis.ncols(),
        threshold,
    })
}

/// `Q + σ F'ᵀ U F'` for an element `U` of `J Prox_{σg*}`.
pub fn aug_hessian(
    problem: &CompositeProblem,
    sigma: f64,
    element: &ProxOperator,
) -> Result<Matrix> {
    let dim = problem.g().coord_dim();
    if element.dim() != dim || element.frame().g() != problem.g() {
        return Err(shape_err(
            format!("element on {dim} coordinates of {:?}", problem.g()),
            format!("{} coordinates of {:?}", element.dim(), element.frame().g()),
        ));
    }
    let fmat = problem.fmat();
    let h = problem.q() + fmat.transpose() * element.matrix() * &fmat * sigma;
    Ok(symmetric_part(&h))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub sigma: f64,
    /// Smallest eigenvalue over all sampled Hessians.
    pub min_eig: f64,
    pub pd: bool,
    pub elements_tested: usize,
    pub exhaustive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyOptions {
    pub sigma_grid: Vec<f64>,
    pub budget: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub tol: Tolerances,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            sigma_grid: DEFAULT_SIGMA_GRID.to_vec(),
            budget: DEFAULT_BUDGET,
            seed: 0,
            threads: None,
            tol: Tolerances::default(),
        }
    }
}

impl CertifyOptions {
    pub fn validate(&self) -> Result<()> {
        self.tol.validate()?;
        if self.sigma_grid.is_empty() {
            return Err(Error::InvalidArgument("sigma grid is empty".into()));
        }
        if self.sigma_grid.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidArgument(
                "sigma values must be positive".into(),
            ));
        }
        if self.sigma_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "sigma grid must be strictly ascending".into(),
            ));
        }
        if self.budget == 0 {
            return Err(Error::InvalidArgument("budget must be at least 1".into()));
        }
        Ok(())
    }
}

fn sweep_point(
    problem: &CompositeProblem,
    kkt: &KktCandidate,
    sigma: f64,
    index: usize,
    opts: &CertifyOptions,
) -> Result<SweepPoint> {
    let w = &kkt.u + problem.map(&kkt.x)? * sigma;
    let seed = rand::Rng::random::<u64>(&mut trial_rng(opts.seed, index as u64));
    let sample = conjugate_jacobian_elements(problem.g(), sigma, &w, opts.budget, seed, &opts.tol)?;
    let eigs = sample
        .elements
        .par_iter()
        .map(|u| aug_hessian(problem, sigma, u).map(|h| lambda_min(&h)))
        .collect::<Result<Vec<f64>>>()?;
    let min_eig = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SweepPoint {
        sigma,
        min_eig,
        pd: min_eig > problem.pd_threshold(&opts.tol),
        elements_tested: eigs.len(),
        exhaustive: sample.exhaustive,
    })
}

pub fn hessian_pd_sweep(
    problem: &CompositeProblem,
    kkt: &KktCandidate,
    opts: &CertifyOptions,
) -> Result<Vec<SweepPoint>> {
    opts.validate()?;
    kkt.require_valid()?;
    parallel::install(opts.threads, || {
        opts.sigma_grid
            .par_iter()
            .enumerate()
            .map(|(i, &sigma)| sweep_point(problem, kkt, sigma, i, opts))
            .collect::<Result<Vec<_>>>()
    })?
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    Inconclusive,
}

impl Verdict {
    pub fn decide(ssosc_holds: bool, sweep: &[SweepPoint]) -> Self {
        let some_pd = sweep.iter().any(|p| p.pd);
        match (ssosc_holds, some_pd) {
            (true, true) | (false, false) => Verdict::Consistent,
            (true, false) => Verdict::Inconclusive,
            (false, true) => Verdict::Inconsistent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub function: ConvexFunction,
    pub values: Vec<f64>,
    pub partition: Partition,
    pub band_active: bool,
}

impl From<&SpectralFrame> for FrameSummary {
    fn from(f: &SpectralFrame) -> Self {
        Self {
            function: *f.g(),
            values: f.values().iter().copied().collect(),
            partition: f.partition().clone(),
            band_active: f.band_active(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub kkt: KktCandidate,
    pub frame: FrameSummary,
    pub ssosc: SsoscResult,
    pub sweep: Vec<SweepPoint>,
    pub verdict: Verdict,
    pub sampling_exhaustive: bool,
}

pub fn certify(
    problem: &CompositeProblem,
    kkt: &KktCandidate,
    opts: &CertifyOptions,
) -> Result<Certificate> {
    opts.validate()?;
    let frame = frame_at_candidate(problem, kkt, &opts.tol)?;
    let ssosc = ssosc_margin(problem, kkt, &opts.tol)?;
    let sweep = hessian_pd_sweep(problem, kkt, opts)?;
    Ok(Certificate {
        kkt: kkt.clone(),
        frame: FrameSummary::from(&frame),
        verdict: Verdict::decide(ssosc.holds, &sweep),
        sampling_exhaustive: sweep.iter().all(|p| p.exhaustive),
        ssosc,
        sweep,
    })
}
