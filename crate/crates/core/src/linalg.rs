//! Dense linear-algebra substrate.
//!
//! Symmetric eigendecomposition, full SVD, Moore–Penrose pseudoinverse and
//! null-space bases on top of `nalgebra`, plus the isometric vectorizations
//! (`svec` for symmetric matrices, row-major `vec` for rectangular ones) that
//! every operator matrix in this crate is expressed in.
//!
//! Eigenvalues and singular values are always returned in descending order.
//! Values that are numerically equal are never merged; ties keep whatever
//! column order the backend produced.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Numerical thresholds shared by every module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Band used to classify eigen/singular values against 0 (PSD) or 1
    /// (nuclear norm). Also the relative rank cut of `pinv`.
    pub tol_class: f64,
    pub tol_orth: f64,
    pub tol_recon: f64,
    /// Positive-definiteness margin.
    pub tol_pd: f64,
    /// Range-membership and residual acceptance.
    pub tol_range: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_class: 1e-9,
            tol_orth: 1e-10,
            tol_recon: 1e-10,
            tol_pd: 1e-8,
            tol_range: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("tol_class", self.tol_class),
            ("tol_orth", self.tol_orth),
            ("tol_recon", self.tol_recon),
            ("tol_pd", self.tol_pd),
            ("tol_range", self.tol_range),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// A real symmetric matrix. Symmetry is exact as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    /// Accepts only matrices that are square, finite and exactly symmetric.
    pub fn new(m: Matrix) -> Result<Self> {
        check_square(&m)?;
        check_finite(&m, "symmetric matrix")?;
        let asym = max_asymmetry(&m);
        if asym != 0.0 {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self(m))
    }

    /// Accepts matrices whose asymmetry is at most `tol` and stores the
    /// symmetric part.
    pub fn from_nearly_symmetric(m: &Matrix, tol: f64) -> Result<Self> {
        check_square(m)?;
        check_finite(m, "symmetric matrix")?;
        let asym = max_asymmetry(m);
        if asym > tol {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self(symmetric_part(m)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }
}

/// `A = P diag(values) Pᵀ` with values sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenFrame {
    pub vectors: Matrix,
    pub values: Vector,
}

impl EigenFrame {
    pub fn reconstruct(&self) -> Matrix {
        &self.vectors * Matrix::from_diagonal(&self.values) * self.vectors.transpose()
    }

    pub fn orthogonality_residual(&self) -> f64 {
        let n = self.vectors.ncols();
        (self.vectors.transpose() * &self.vectors - Matrix::identity(n, n)).norm()
    }
}

/// `A = R [diag(values) 0] Sᵀ` with `R` p×p, `S` q×q orthogonal, values
/// sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFrame {
    pub left: Matrix,
    pub right: Matrix,
    pub values: Vector,
}

impl SvdFrame {
    pub fn rows(&self) -> usize {
        self.left.nrows()
    }

    pub fn cols(&self) -> usize {
        self.right.nrows()
    }

    /// The p×q middle factor `[diag(values) 0]`.
    pub fn middle(&self) -> Matrix {
        let (p, q) = (self.rows(), self.cols());
        let mut m = Matrix::zeros(p, q);
        for i in 0..p {
            m[(i, i)] = self.values[i];
        }
        m
    }

    pub fn reconstruct(&self) -> Matrix {
        &self.left * self.middle() * self.right.transpose()
    }

    pub fn orthogonality_residual(&self) -> f64 {
        let p = self.rows();
        let q = self.cols();
        let r = (self.left.transpose() * &self.left - Matrix::identity(p, p)).norm();
        let s = (self.right.transpose() * &self.right - Matrix::identity(q, q)).norm();
        r.max(s)
    }
}

fn check_square(m: &Matrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(shape_err(
            "square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

pub(crate) fn check_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn max_asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows().min(m.ncols());
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetric_part(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Symmetric eigendecomposition with eigenvalues sorted descending.
pub fn eig_sym(a: &SymMatrix) -> Result<EigenFrame> {
    let m = a.as_matrix().clone();
    let n = m.nrows();
    if n == 0 {
        return Ok(EigenFrame {
            vectors: Matrix::zeros(0, 0),
            values: Vector::zeros(0),
        });
    }
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0).ok_or(Error::Decomposition(
        "symmetric eigensolver did not converge",
    ))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = eig.eigenvectors.select_columns(order.iter());
    Ok(EigenFrame { vectors, values })
}

/// One-sided Jacobi on the columns of `m` (rows ≥ cols expected). Returns
/// the rotated matrix `B = M V`, whose columns are mutually orthogonal, and
/// the accumulated orthogonal `V`.
fn jacobi_columns(mut b: Matrix) -> Result<(Matrix, Matrix)> {
    let k = b.ncols();
    let mut v = Matrix::identity(k, k);
    // columns below this squared norm are numerically zero
    let negligible = (f64::EPSILON * b.norm()).powi(2);
    let orth_tol = 4.0 * f64::EPSILON * (b.nrows() as f64).sqrt();
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..k {
            for j in (i + 1)..k {
                let alpha = b.column(i).norm_squared();
                let beta = b.column(j).norm_squared();
                let gamma = b.column(i).dot(&b.column(j));
                if alpha <= negligible
                    || beta <= negligible
                    || gamma.abs() <= orth_tol * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for m in [&mut b, &mut v] {
                    for r in 0..m.nrows() {
                        let (x, y) = (m[(r, i)], m[(r, j)]);
                        m[(r, i)] = c * x - s * y;
                        m[(r, j)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            return Ok((b, v));
        }
    }
    Err(Error::Decomposition("Jacobi SVD did not converge"))
}

/// Column norms of `b` as singular values and the normalized columns; zero
/// columns stay zero.
fn split_columns(b: &Matrix) -> (Vector, Matrix) {
    let values = Vector::from_fn(b.ncols(), |j, _| b.column(j).norm());
    let mut dirs = b.clone();
    for (j, &s) in values.iter().enumerate() {
        if s > 0.0 {
            dirs.column_mut(j).unscale_mut(s);
        }
    }
    (values, dirs)
}

fn descending(values: &Vector) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    order
}

/// SVD `A = U diag(values) Vᵀ` with values descending. `U` is complete when
/// `r ≤ c`, `V` when `r > c`; directions paired with zero singular values on
/// the other side are zero.
fn thin_svd(a: &Matrix) -> Result<(Matrix, Vector, Matrix)> {
    check_finite(a, "matrix")?;
    let (r, c) = (a.nrows(), a.ncols());
    let k = r.min(c);
    if k == 0 {
        return Ok((Matrix::zeros(r, 0), Vector::zeros(0), Matrix::zeros(0, c)));
    }
    if r > c {
        let (b, v) = jacobi_columns(a.clone())?;
        let (values, u) = split_columns(&b);
        let order = descending(&values);
        Ok((
            u.select_columns(order.iter()),
            Vector::from_iterator(k, order.iter().map(|&i| values[i])),
            v.select_columns(order.iter()).transpose(),
        ))
    } else {
        let (b, u) = jacobi_columns(a.transpose())?;
        let (values, v) = split_columns(&b);
        let order = descending(&values);
        Ok((
            u.select_columns(order.iter()),
            Vector::from_iterator(k, order.iter().map(|&i| values[i])),
            v.select_columns(order.iter()).transpose(),
        ))
    }
}

/// Orthonormal basis of the orthogonal complement of the span of the
/// (orthonormal) columns of `basis`.
fn orthonormal_complement(basis: &Matrix) -> Result<Matrix> {
    let n = basis.nrows();
    let r = basis.ncols();
    if r == 0 {
        return Ok(Matrix::identity(n, n));
    }
    let proj = Matrix::identity(n, n) - basis * basis.transpose();
    let f = eig_sym(&SymMatrix(symmetric_part(&proj)))?;
    Ok(f.vectors.columns(0, n - r).into_owned())
}

/// Full SVD `A = R [Σ 0] Sᵀ` of a p×q matrix with p ≤ q.
pub fn svd_full(a: &Matrix) -> Result<SvdFrame> {
    let (p, q) = (a.nrows(), a.ncols());
    if p > q {
        return Err(shape_err(
            "p <= q (pass the transposed problem)",
            format!("{p}x{q}"),
        ));
    }
    let (left, values, v_t) = thin_svd(a)?;
    let floor = 1e3 * f64::EPSILON * values.iter().copied().fold(0.0, f64::max);
    let nonzero: Vec<usize> = (0..p).filter(|&i| values[i] > floor).collect();
    let s_r = v_t.select_rows(nonzero.iter()).transpose();
    let complement = orthonormal_complement(&s_r)?;
    let mut right = Matrix::zeros(q, q);
    right.columns_mut(0, s_r.ncols()).copy_from(&s_r);
    right
        .columns_mut(s_r.ncols(), q - s_r.ncols())
        .copy_from(&complement);
    Ok(SvdFrame {
        left,
        right,
        values,
    })
}

fn rank_cut(values: &Vector, tol: f64) -> f64 {
    let smax = values.iter().copied().fold(0.0_f64, f64::max);
    tol * smax.max(1.0)
}

/// Moore–Penrose pseudoinverse; singular values at or below
/// `tol · max(1, σ_max)` are treated as zero.
pub fn pinv(a: &Matrix, tol: f64) -> Result<Matrix> {
    let (u, values, v_t) = thin_svd(a)?;
    let cut = rank_cut(&values, tol);
    let mut out = Matrix::zeros(a.ncols(), a.nrows());
    for (i, &s) in values.iter().enumerate() {
        if s > cut {
            out += (v_t.row(i).transpose() / s) * u.column(i).transpose();
        }
    }
    Ok(out)
}

/// Orthonormal basis (as columns) of `ker A` under the rank cut
/// `tol · max(1, σ_max)`.
pub fn null_space_basis(a: &Matrix, tol: f64) -> Result<Matrix> {
    check_finite(a, "matrix")?;
    let n = a.ncols();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    if a.nrows() == 0 {
        return Ok(Matrix::identity(n, n));
    }
    let (b, v) = jacobi_columns(a.clone())?;
    let values = Vector::from_fn(n, |j, _| b.column(j).norm());
    let cut = rank_cut(&values, tol);
    let keep: Vec<usize> = (0..n).filter(|&j| values[j] <= cut).collect();
    Ok(v.select_columns(keep.iter()))
}

pub fn svec_len(m: usize) -> usize {
    m * (m + 1) / 2
}

/// Row-major upper triangle with √2 on off-diagonal entries, so that
/// `⟨A, B⟩_F = ⟨svec A, svec B⟩`.
pub fn svec(a: &SymMatrix) -> Vector {
    svec_upper(a.as_matrix())
}

/// `svec` reading only the upper triangle of a square matrix.
pub(crate) fn svec_upper(a: &Matrix) -> Vector {
    let m = a.nrows();
    let mut v = Vector::zeros(svec_len(m));
    let mut k = 0;
    for i in 0..m {
        for j in i..m {
            v[k] = if i == j {
                a[(i, i)]
            } else {
                std::f64::consts::SQRT_2 * a[(i, j)]
            };
            k += 1;
        }
    }
    v
}

pub fn sunvec(v: &Vector) -> Result<SymMatrix> {
    let len = v.len();
    let m = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    if svec_len(m) != len {
        return Err(shape_err("svec length m(m+1)/2", format!("length {len}")));
    }
    let mut a = Matrix::zeros(m, m);
    let mut k = 0;
    for i in 0..m {
        for j in i..m {
            if i == j {
                a[(i, i)] = v[k];
            } else {
                let x = v[k] / std::f64::consts::SQRT_2;
                a[(i, j)] = x;
                a[(j, i)] = x;
            }
            k += 1;
        }
    }
    Ok(SymMatrix(a))
}

/// Position of entry (i, j), i ≤ j, in the `svec` ordering.
pub fn svec_index(m: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // rows before i hold m + (m-1) + ... + (m-i+1) entries
    i * m - i * i.saturating_sub(1) / 2 + (j - i)
}

/// Row-major vectorization of a rectangular matrix.
pub fn vec_rect(a: &Matrix) -> Vector {
    let (p, q) = (a.nrows(), a.ncols());
    Vector::from_iterator(p * q, (0..p).flat_map(|i| (0..q).map(move |j| a[(i, j)])))
}

pub fn unvec_rect(v: &Vector, p: usize, q: usize) -> Result<Matrix> {
    if v.len() != p * q {
        return Err(shape_err(
            format!("length {}", p * q),
            format!("length {}", v.len()),
        ));
    }
    Ok(Matrix::from_fn(p, q, |i, j| v[i * q + j]))
}

/// Smallest eigenvalue of the symmetric part; `+∞` for an empty matrix.
pub fn lambda_min(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let eig = SymmetricEigen::new(symmetric_part(m));
    eig.eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
