//! Independent checks of the closed forms: central differences of the prox,
//! second-order difference quotients of the nuclear norm, brute-force
//! minimization over sampled Jacobian elements, and the coderivative
//! inequality chain. Also seeded random frame generators and the `selftest`
//! suite built from them.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jacobian::{jacobian_apply, sample_limiting_elements, CanonicalRange, JacobianChoice};
use crate::linalg::{pinv, symmetric_part, EigenFrame, Matrix, SvdFrame, Tolerances, Vector};
use crate::parallel;
use crate::prox::{make_frame, prox_apply, ConvexFunction, SpectralFrame};
use crate::random::{gaussian_matrix, random_orthogonal, trial_rng, uniform, TrialRng};
use crate::sovf::{gamma_closed_form, Sovf};

pub const DEFAULT_FD_GRID: [f64; 3] = [1e-4, 1e-5, 1e-6];
pub const DEFAULT_DELTA2_GRID: [f64; 3] = [1e-2, 1e-3, 1e-4];
pub const FD_TOLERANCE: f64 = 1e-5;
pub const DELTA2_TOLERANCE: f64 = 1e-2;
pub const BRUTEFORCE_TOLERANCE: f64 = 1e-6;
pub const BRUTEFORCE_DIM_CAP: usize = 36;
pub const CHAIN_SIGMAS: [f64; 3] = [2.0, 10.0, 100.0];
pub const DECAY_SIGMAS: [f64; 6] = [1e1, 1e2, 1e3, 1e4, 1e5, 1e6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub closed_form: f64,
    pub oracle: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// The check did not apply (e.g. non-differentiable point).
    pub flagged: bool,
}

impl OracleReport {
    /// `rel_gap = abs_gap / scale`; equal infinities count as zero gap.
    fn compare(name: &str, closed_form: f64, oracle: f64, scale: f64, tolerance: f64) -> Self {
        let abs_gap = if closed_form == oracle {
            0.0
        } else {
            (closed_form - oracle).abs()
        };
        let rel_gap = abs_gap / scale;
        Self {
            name: name.to_string(),
            closed_form,
            oracle,
            abs_gap,
            rel_gap,
            tolerance,
            pass: rel_gap <= tolerance,
            flagged: false,
        }
    }

    fn flagged(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            closed_form: f64::NAN,
            oracle: f64::NAN,
            abs_gap: f64::NAN,
            rel_gap: f64::NAN,
            tolerance,
            pass: false,
            flagged: true,
        }
    }
}

/// Central differences of `Prox_g` at `w` against the canonical Jacobian.
/// Reports the best relative gap over `t_grid`, measured against
/// `max(‖J D‖, 1e-3 ‖D‖)`.
pub fn fd_prox_jacobian(
    g: &ConvexFunction,
    w: &Matrix,
    d: &Matrix,
    t_grid: &[f64],
    tol: &Tolerances,
) -> Result<OracleReport> {
    let name = "fd_prox_jacobian";
    if t_grid.is_empty() {
        return Err(Error::InvalidArgument("empty step grid".into()));
    }
    let frame = SpectralFrame::at_point(g, w, tol)?;
    if !frame.is_differentiable() {
        return Ok(OracleReport::flagged(name, FD_TOLERANCE));
    }
    let jd = jacobian_apply(&frame, &JacobianChoice::canonical(&frame), d)?;
    let scale = jd.norm().max(1e-3 * d.norm());
    let mut best: Option<(f64, Matrix)> = None;
    for &t in t_grid {
        let fd =
            (prox_apply(g, 1.0, &(w + d * t))? - prox_apply(g, 1.0, &(w - d * t))?) / (2.0 * t);
        let gap = (&fd - &jd).norm() / scale;
        if best.as_ref().is_none_or(|(b, _)| gap < *b) {
            best = Some((gap, fd));
        }
    }
    let (_, fd) = best.expect("non-empty grid");
    let mut report = OracleReport::compare(name, jd.norm(), fd.norm(), scale, FD_TOLERANCE);
    report.abs_gap = (&fd - &jd).norm();
    report.rel_gap = report.abs_gap / scale;
    report.pass = report.rel_gap <= FD_TOLERANCE;
    Ok(report)
}

/// Fixed-direction second-order quotient
/// `[‖x+td‖_* − ‖x‖_* − t⟨u,d⟩] / (t²/2)` of the nuclear norm, extrapolated
/// linearly from the two smallest steps and compared with Γ(d).
///
/// When Γ(d) = +∞ the check passes if the quotient grows at least 5× per
/// decade of `t`.
pub fn delta2_quotient(
    g: &ConvexFunction,
    x: &Matrix,
    u: &Matrix,
    d: &Matrix,
    t_grid: &[f64],
    tol: &Tolerances,
) -> Result<OracleReport> {
    let name = "delta2_quotient";
    if !matches!(g, ConvexFunction::NuclearNorm { .. }) {
        return Err(Error::InvalidArgument(
            "difference quotients are only defined here for the nuclear norm; indicator quotients can be +inf along fixed directions".into(),
        ));
    }
    let mut grid = t_grid.to_vec();
    if grid.len() < 2 || grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidArgument(
            "need at least two positive steps".into(),
        ));
    }
    grid.sort_by(|a, b| b.total_cmp(a));
    let frame = make_frame(g, x, u, tol)?;
    if !frame.is_differentiable() {
        return Err(Error::InvalidArgument(
            "frame has singular values at the threshold".into(),
        ));
    }
    g.check_shape(d)?;
    let base = g.value(x, 0.0)?;
    let slope = u.component_mul(d).sum();
    let quotients = grid
        .iter()
        .map(|&t| Ok((g.value(&(x + d * t), 0.0)? - base - t * slope) / (t * t / 2.0)))
        .collect::<Result<Vec<f64>>>()?;
    let gamma = gamma_closed_form(&frame, d)?;
    let n = grid.len();
    let (t1, t2) = (grid[n - 2], grid[n - 1]);
    let (q1, q2) = (quotients[n - 2], quotients[n - 1]);
    if gamma.is_infinite() {
        let growing = quotients.windows(2).zip(grid.windows(2)).all(|(q, t)| {
            let decades = (t[0] / t[1]).log10();
            q[0] > 0.0 && q[1] >= q[0] * 5f64.powf(decades)
        });
        return Ok(OracleReport {
            name: name.to_string(),
            closed_form: gamma,
            oracle: q2,
            abs_gap: 0.0,
            rel_gap: 0.0,
            tolerance: DELTA2_TOLERANCE,
            pass: growing,
            flagged: false,
        });
    }
    let limit = (t1 * q2 - t2 * q1) / (t1 - t2);
    let scale = gamma.abs().max(1e-3 * d.norm_squared());
    Ok(OracleReport::compare(
        name,
        gamma,
        limit,
        scale,
        DELTA2_TOLERANCE,
    ))
}

struct Candidate {
    w: Matrix,
    pinv: Matrix,
    projector: Matrix,
}

/// Minimizer of `⟨y, W†y − y⟩` over sampled Jacobian elements and random
/// convex combinations of them.
pub struct BruteForce {
    g: ConvexFunction,
    candidates: Vec<Candidate>,
    exhaustive: bool,
    tol_range: f64,
}

impl BruteForce {
    /// Enumerates the limiting generators and fills the rest of `budget`
    /// with random convex combinations.
    pub fn new(frame: &SpectralFrame, budget: usize, seed: u64) -> Result<Self> {
        let g = *frame.g();
        let dim = g.coord_dim();
        if dim > BRUTEFORCE_DIM_CAP {
            return Err(Error::DimensionCap {
                dim,
                cap: BRUTEFORCE_DIM_CAP,
            });
        }
        let sample = sample_limiting_elements(frame, budget, seed)?;
        let mut mats: Vec<Matrix> = sample.elements.iter().map(|e| e.matrix().clone()).collect();
        let generators = mats.len();
        if generators > 1 {
            for r in 0..budget.saturating_sub(generators) {
                let mut rng = trial_rng(seed, 1 + r as u64);
                let parts = rng.random_range(2..=3.min(generators));
                let weights: Vec<f64> = (0..parts).map(|_| uniform(0.05, 1.0, &mut rng)).collect();
                let total: f64 = weights.iter().sum();
                let mut w = Matrix::zeros(dim, dim);
                for wt in weights {
                    w += &mats[rng.random_range(0..generators)] * (wt / total);
                }
                mats.push(w);
            }
        }
        let tol = frame.tolerances();
        let candidates = mats
            .into_iter()
            .map(|w| {
                let p = pinv(&w, tol.tol_class)?;
                let projector = &w * &p;
                Ok(Candidate {
                    w,
                    pinv: p,
                    projector,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            g,
            candidates,
            exhaustive: sample.exhaustive,
            tol_range: tol.tol_range,
        })
    }

    pub fn elements(&self) -> usize {
        self.candidates.len()
    }

    pub fn exhaustive(&self) -> bool {
        self.exhaustive
    }

    /// Largest `‖(I − W̄W̄†)W‖` over the candidates, against a projector.
    pub fn worst_range_leak(&self, range: &CanonicalRange) -> f64 {
        let n = range.projector.nrows();
        let comp = Matrix::identity(n, n) - &range.projector;
        self.candidates
            .iter()
            .map(|c| (&comp * &c.w).norm())
            .fold(0.0, f64::max)
    }

    pub fn gamma(&self, y: &Matrix) -> Result<f64> {
        self.g.check_shape(y)?;
        let v = self.g.to_coords(y);
        let threshold = self.tol_range * (1.0 + v.norm());
        let mut best = f64::INFINITY;
        for c in &self.candidates {
            if (&c.projector * &v - &v).norm() <= threshold {
                best = best.min(v.dot(&(&c.pinv * &v)) - v.norm_squared());
            }
        }
        Ok(best)
    }
}

pub fn gamma_bruteforce(
    frame: &SpectralFrame,
    y: &Matrix,
    budget: usize,
    seed: u64,
) -> Result<f64> {
    BruteForce::new(frame, budget, seed)?.gamma(y)
}

/// Outcome of [`coderivative_chain_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub trials: usize,
    /// Largest violation of `‖z‖² ≥ ‖(I−UU†)d‖² ≥ ‖(I−W̄W̄†)d‖²`, relative
    /// to `‖d‖²` (≤ 0 means satisfied).
    pub worst_violation: f64,
    /// Largest `‖σ(I+(σ−1)U)⁻¹Ud − UU†d‖ / ‖d‖` at the top decay σ.
    pub worst_decay: f64,
    /// Some trial's decay sequence increased.
    pub decay_monotone: bool,
    pub pass: bool,
}

fn chain_trial(
    ops: &[Candidate],
    range_comp: &Matrix,
    sigmas: &[f64],
    rng: &mut TrialRng,
) -> Result<(f64, f64, bool)> {
    let c = &ops[rng.random_range(0..ops.len())];
    let n = c.w.nrows();
    let d = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let dn2 = d.norm_squared();
    let id = Matrix::identity(n, n);
    let ker = (&id - &c.projector) * &d;
    let outside = range_comp * &d;
    let mut violation = (outside.norm_squared() - ker.norm_squared() - 1e-10 * dn2) / dn2;
    for &sigma in sigmas {
        let m = &id + &c.w * (sigma - 1.0);
        let z = m
            .clone()
            .lu()
            .solve(&((&id - &c.w) * &d))
            .ok_or(Error::Decomposition("I + (σ-1)U is singular"))?;
        violation = violation.max((ker.norm_squared() - z.norm_squared() - 1e-10 * dn2) / dn2);
    }
    let target = &c.projector * &d;
    let mut prev = f64::INFINITY;
    let mut monotone = true;
    let mut last = 0.0;
    for &sigma in &DECAY_SIGMAS {
        let m = &id + &c.w * (sigma - 1.0);
        let y = m
            .lu()
            .solve(&(&c.w * &d))
            .ok_or(Error::Decomposition("I + (σ-1)U is singular"))?;
        let e = (y * sigma - &target).norm() / dn2.sqrt();
        if e > prev + 1e-9 {
            monotone = false;
        }
        prev = e;
        last = e;
    }
    Ok((violation, last, monotone))
}

/// Checks the coderivative inequality chain and the large-σ decay on random
/// directions and sampled elements `U` of the frame (generators plus
/// two-element combinations with weights in [0.2, 0.8]).
pub fn coderivative_chain_check(
    frame: &SpectralFrame,
    sigmas: &[f64],
    trials: usize,
    seed: u64,
) -> Result<ChainReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidArgument(
            "sigma values must be positive".into(),
        ));
    }
    let sample = sample_limiting_elements(frame, 64, seed)?;
    let tol = frame.tolerances();
    let mut mats: Vec<Matrix> = sample.elements.iter().map(|e| e.matrix().clone()).collect();
    let generators = mats.len();
    if generators > 1 {
        let mut rng = trial_rng(seed, u64::MAX);
        for _ in 0..generators {
            let a = rng.random_range(0..generators);
            let b = rng.random_range(0..generators);
            let t = uniform(0.2, 0.8, &mut rng);
            mats.push(&mats[a] * t + &mats[b] * (1.0 - t));
        }
    }
    let ops = mats
        .into_iter()
        .map(|w| {
            let p = pinv(&w, tol.tol_class)?;
            let projector = &w * &p;
            Ok(Candidate {
                w,
                pinv: p,
                projector,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let range = CanonicalRange::new(frame)?;
    let n = range.projector.nrows();
    let comp = Matrix::identity(n, n) - &range.projector;
    let results = (0..trials)
        .into_par_iter()
        .map(|t| chain_trial(&ops, &comp, sigmas, &mut trial_rng(seed, t as u64)))
        .collect::<Result<Vec<_>>>()?;
    let worst_violation = results
        .iter()
        .map(|r| r.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let worst_decay = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let decay_monotone = results.iter().all(|r| r.2);
    Ok(ChainReport {
        trials,
        worst_violation,
        worst_decay,
        decay_monotone,
        pass: worst_violation <= 0.0 && decay_monotone && worst_decay <= 1e-4,
    })
}

/// Cell of a spectral value relative to the threshold of `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Above,
    At,
    Below,
}

/// PSD frame `P diag(λ) Pᵀ` with Haar `P` and one eigenvalue per cell
/// entry: `|λ| ∈ [0.5, 3]` off the boundary, `λ = 0` on it.
pub fn random_psd_frame(
    cells: &[Cell],
    rng: &mut TrialRng,
    tol: &Tolerances,
) -> Result<SpectralFrame> {
    let m = cells.len();
    let mut values: Vec<f64> = cells
        .iter()
        .map(|c| match c {
            Cell::Above => uniform(0.5, 3.0, rng),
            Cell::At => 0.0,
            Cell::Below => -uniform(0.5, 3.0, rng),
        })
        .collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let p = random_orthogonal(m, rng);
    let values = Vector::from_vec(values);
    let a = symmetric_part(&(&p * Matrix::from_diagonal(&values) * p.transpose()));
    let g = ConvexFunction::psd_indicator(m)?;
    SpectralFrame::from_eigen(&g, &a, EigenFrame { vectors: p, values }, tol)
}

/// Nuclear frame `R [Σ 0] Sᵀ` with Haar `R, S`: `σ ∈ [1.5, 3]` above the
/// threshold, `σ = 1` on it, `σ ∈ [0, 0.5]` below.
pub fn random_nuclear_frame(
    q: usize,
    cells: &[Cell],
    rng: &mut TrialRng,
    tol: &Tolerances,
) -> Result<SpectralFrame> {
    let p = cells.len();
    let g = ConvexFunction::nuclear_norm(p, q)?;
    let mut values: Vec<f64> = cells
        .iter()
        .map(|c| match c {
            Cell::Above => uniform(1.5, 3.0, rng),
            Cell::At => 1.0,
            Cell::Below => uniform(0.0, 0.5, rng),
        })
        .collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let svd = SvdFrame {
        left: random_orthogonal(p, rng),
        right: random_orthogonal(q, rng),
        values: Vector::from_vec(values),
    };
    let a = svd.reconstruct();
    SpectralFrame::from_svd(&g, &a, svd, tol)
}

fn random_cells(len: usize, allow_at: bool, rng: &mut TrialRng) -> Vec<Cell> {
    (0..len)
        .map(
            |_| match rng.random_range(0..if allow_at { 3 } else { 2 }) {
                0 => Cell::Above,
                1 => Cell::Below,
                _ => Cell::At,
            },
        )
        .collect()
}

/// A frame of either kind with random shape; `allow_at` permits boundary
/// cells.
pub fn random_frame(
    g_kind: usize,
    allow_at: bool,
    rng: &mut TrialRng,
    tol: &Tolerances,
) -> Result<SpectralFrame> {
    if g_kind == 0 {
        let m = rng.random_range(1..=4);
        let cells = random_cells(m, allow_at, rng);
        random_psd_frame(&cells, rng, tol)
    } else {
        let (p, q) = [(2, 2), (2, 3), (3, 3)][rng.random_range(0..3)];
        let cells = random_cells(p, allow_at, rng);
        random_nuclear_frame(q, &cells, rng, tol)
    }
}

/// Random direction in the range of `W̄`.
pub fn random_in_range(range: &CanonicalRange, rng: &mut TrialRng) -> Result<Matrix> {
    let g = range.frame().g();
    let v = Vector::from_fn(g.coord_dim(), |_, _| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    g.from_coords(&(&range.projector * v))
}

/// Random direction with a unit-size component outside the range of `W̄`,
/// or `None` when the range is everything.
pub fn random_out_of_range(range: &CanonicalRange, rng: &mut TrialRng) -> Result<Option<Matrix>> {
    let g = range.frame().g();
    let n = g.coord_dim();
    let comp = Matrix::identity(n, n) - &range.projector;
    if comp.norm() < 0.5 {
        return Ok(None);
    }
    loop {
        let v = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let out = &comp * &v;
        if out.norm() > 0.1 {
            let inside = &range.projector * &v;
            let scale = 1.0 / out.norm();
            return Ok(Some(g.from_coords(&(inside + out * scale))?));
        }
    }
}

/// Direction for the quotient oracle at a differentiable nuclear frame:
/// random in frame coordinates with the α₃ rows zeroed, so that the
/// fixed-direction quotient attains the second subderivative.
pub fn random_delta2_direction(frame: &SpectralFrame, rng: &mut TrialRng) -> Matrix {
    let (p, q) = frame.g().shape();
    let part = frame.partition();
    let mut yt = gaussian_matrix(p, q, rng);
    for &i in &part.below {
        yt.row_mut(i).fill(0.0);
    }
    frame.from_frame_basis(&yt)
}

/// A random point where `Prox_g` is differentiable, with spectrum bounded
/// away from the threshold, plus a random direction.
pub fn random_differentiable_point(
    g_kind: usize,
    rng: &mut TrialRng,
    tol: &Tolerances,
) -> Result<(ConvexFunction, Matrix, Matrix)> {
    let f = random_frame(g_kind, false, rng, tol)?;
    let g = *f.g();
    let (r, c) = g.shape();
    let d = gaussian_matrix(r, c, rng);
    let d = match g {
        ConvexFunction::PsdIndicator { .. } => symmetric_part(&d),
        ConvexFunction::NuclearNorm { .. } => d,
    };
    Ok((g, f.point().clone(), d))
}

/// Aggregate of one oracle family in the self-test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub trials: usize,
    pub passed: usize,
    pub flagged: usize,
    /// Worst gap in the family's own measure.
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl SuiteResult {
    fn from_reports(name: &str, reports: &[OracleReport], tolerance: f64) -> Self {
        let flagged = reports.iter().filter(|r| r.flagged).count();
        let passed = reports.iter().filter(|r| r.pass).count();
        let worst = reports
            .iter()
            .filter(|r| !r.flagged)
            .map(|r| r.rel_gap)
            .fold(0.0, f64::max);
        Self {
            name: name.to_string(),
            trials: reports.len(),
            passed,
            flagged,
            worst,
            tolerance,
            pass: passed + flagged == reports.len(),
        }
    }
}

fn kind_name(kind: usize) -> &'static str {
    if kind == 0 {
        "psd"
    } else {
        "nuclear"
    }
}

fn fd_suite(kind: usize, trials: usize, seed: u64, tol: &Tolerances) -> Result<SuiteResult> {
    let reports = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let (g, w, d) = random_differentiable_point(kind, &mut rng, tol)?;
            fd_prox_jacobian(&g, &w, &d, &DEFAULT_FD_GRID, tol)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteResult::from_reports(
        &format!("fd_prox_jacobian/{}", kind_name(kind)),
        &reports,
        FD_TOLERANCE,
    ))
}

/// Frame N1: `X = diag(2, 0)`, `U = diag(1, 0.5)` for the 2×2 nuclear norm.
pub fn frame_n1() -> (ConvexFunction, Matrix, Matrix) {
    let g = ConvexFunction::NuclearNorm { p: 2, q: 2 };
    let x = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
    let u = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
    (g, x, u)
}

/// Random differentiable nuclear pair `(X, U)` and quotient direction.
pub fn random_delta2_case(
    rng: &mut TrialRng,
    tol: &Tolerances,
) -> Result<(ConvexFunction, Matrix, Matrix, Matrix)> {
    let (p, q) = [(2, 2), (2, 3), (3, 3)][rng.random_range(0..3)];
    let mut cells = random_cells(p, false, rng);
    cells[0] = Cell::Above;
    let f = random_nuclear_frame(q, &cells, rng, tol)?;
    let g = *f.g();
    let a = f.point().clone();
    let x = prox_apply(&g, 1.0, &a)?;
    let u = &a - &x;
    let frame = make_frame(&g, &x, &u, tol)?;
    let d = random_delta2_direction(&frame, rng);
    Ok((g, x, u, d))
}

fn delta2_suite(trials: usize, seed: u64, tol: &Tolerances) -> Result<SuiteResult> {
    let (g, x, u) = frame_n1();
    let e12 = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let e11 = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let mut reports = vec![
        delta2_quotient(&g, &x, &u, &e12, &DEFAULT_DELTA2_GRID, tol)?,
        delta2_quotient(&g, &x, &u, &e11, &DEFAULT_DELTA2_GRID, tol)?,
    ];
    let random = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let (g, x, u, d) = random_delta2_case(&mut rng, tol)?;
            delta2_quotient(&g, &x, &u, &d, &DEFAULT_DELTA2_GRID, tol)
        })
        .collect::<Result<Vec<_>>>()?;
    reports.extend(random);
    Ok(SuiteResult::from_reports(
        "delta2_quotient/nuclear",
        &reports,
        DELTA2_TOLERANCE,
    ))
}

/// Closed form against brute force on one frame: `per_frame` in-range and,
/// when the range is proper, `per_frame` out-of-range directions.
pub fn bruteforce_frame_reports(
    frame: &SpectralFrame,
    per_frame: usize,
    budget: usize,
    seed: u64,
) -> Result<Vec<OracleReport>> {
    let bf = BruteForce::new(frame, budget, seed)?;
    let sovf = Sovf::new(frame)?;
    let mut rng = trial_rng(seed, 0xB0F);
    let mut reports = Vec::with_capacity(2 * per_frame);
    for _ in 0..per_frame {
        let y = random_in_range(sovf.range(), &mut rng)?;
        let closed = sovf.gamma(&y)?;
        let brute = bf.gamma(&y)?;
        reports.push(OracleReport::compare(
            "gamma_bruteforce/in_range",
            closed,
            brute,
            1.0,
            BRUTEFORCE_TOLERANCE,
        ));
    }
    for _ in 0..per_frame {
        let Some(y) = random_out_of_range(sovf.range(), &mut rng)? else {
            break;
        };
        let closed = sovf.gamma(&y)?;
        let brute = bf.gamma(&y)?;
        let mut r = OracleReport::compare(
            "gamma_bruteforce/out_of_range",
            closed,
            brute,
            1.0,
            BRUTEFORCE_TOLERANCE,
        );
        r.pass = closed.is_infinite() && brute.is_infinite();
        reports.push(r);
    }
    Ok(reports)
}

fn bruteforce_suite(
    kind: usize,
    trials: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<SuiteResult> {
    let frames = trials.div_ceil(10).max(1);
    let per_frame = trials.div_ceil(frames);
    let reports = (0..frames)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let frame = random_frame(kind, true, &mut rng, tol)?;
            bruteforce_frame_reports(&frame, per_frame, 256, seed ^ t as u64)
        })
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<OracleReport> = reports.into_iter().flatten().collect();
    Ok(SuiteResult::from_reports(
        &format!("gamma_bruteforce/{}", kind_name(kind)),
        &reports,
        BRUTEFORCE_TOLERANCE,
    ))
}

fn upsilon_suite(trials: usize, seed: u64, tol: &Tolerances) -> Result<SuiteResult> {
    let reports = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let frame = random_frame(t % 2, true, &mut rng, tol)?;
            let sovf = Sovf::new(&frame)?;
            let v = random_in_range(sovf.range(), &mut rng)?;
            let gamma = sovf.gamma(&v)?;
            let ups = sovf.upsilon(&v)?;
            Ok(OracleReport::compare(
                "gamma_vs_upsilon",
                gamma,
                ups,
                1.0 + gamma.abs(),
                1e-8,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteResult::from_reports(
        "gamma_vs_upsilon",
        &reports,
        1e-8,
    ))
}

fn chain_suite(kind: usize, trials: usize, seed: u64, tol: &Tolerances) -> Result<SuiteResult> {
    let frames = trials.div_ceil(20).max(1);
    let per_frame = trials.div_ceil(frames);
    let results = (0..frames)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let frame = random_frame(kind, true, &mut rng, tol)?;
            coderivative_chain_check(&frame, &CHAIN_SIGMAS, per_frame, seed ^ t as u64)
        })
        .collect::<Result<Vec<_>>>()?;
    let passed: usize = results.iter().filter(|r| r.pass).map(|r| r.trials).sum();
    let total: usize = results.iter().map(|r| r.trials).sum();
    let worst = results.iter().map(|r| r.worst_decay).fold(0.0, f64::max);
    Ok(SuiteResult {
        name: format!("coderivative_chain/{}", kind_name(kind)),
        trials: total,
        passed,
        flagged: 0,
        worst,
        tolerance: 1e-4,
        pass: passed == total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestSummary {
    pub suites: Vec<SuiteResult>,
    pub all_pass: bool,
}

/// Runs every oracle family with `trials` random cases each (the quotient
/// oracle uses `min(trials, 20)` random frames plus frame N1).
pub fn selftest(trials: usize, seed: u64, threads: Option<usize>) -> Result<SelftestSummary> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let tol = Tolerances::default();
    parallel::install(threads, || {
        let suites = vec![
            fd_suite(0, trials, seed, &tol)?,
            fd_suite(1, trials, seed, &tol)?,
            delta2_suite(trials.min(20), seed, &tol)?,
            bruteforce_suite(0, trials, seed, &tol)?,
            bruteforce_suite(1, trials, seed, &tol)?,
            upsilon_suite(trials, seed, &tol)?,
            chain_suite(0, trials, seed, &tol)?,
            chain_suite(1, trials, seed, &tol)?,
        ];
        let all_pass = suites.iter().all(|s| s.pass);
        Ok(SelftestSummary { suites, all_pass })
    })?
}
