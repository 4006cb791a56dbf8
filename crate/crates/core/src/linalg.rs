//! Small dense complex linear-algebra helpers shared by all kernels.
//!
//! Every factorization goes through [`factor`], which owns the jitter
//! policy: a plain Cholesky attempt first, then diagonal loading of
//! `eps * (trace / d) * I` with `eps` escalating from `1e-10` by decades up
//! to `1e-6`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{contract, Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-6;
/// Relative tolerance for the Hermitian contract check.
pub const HERMITIAN_TOL: f64 = 1e-10;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn scaled_eye(n: usize, s: f64) -> CMat {
    CMat::from_diagonal_element(n, n, c64(s, 0.0))
}

pub fn real_trace(m: &CMat) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// Frobenius norm of `m - m^H` relative to the Frobenius norm of `m`.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let scale = m.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.adjoint()).norm() / scale
}

pub fn check_hermitian(m: &CMat, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(contract(format!("{what} is not square ({}x{})", m.nrows(), m.ncols())));
    }
    let defect = hermitian_defect(m);
    if defect > HERMITIAN_TOL || !defect.is_finite() {
        return Err(contract(format!("{what} is not Hermitian (relative defect {defect:.3e})")));
    }
    Ok(())
}

/// Symmetrized copy `(m + m^H) / 2`.
pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Ratio of largest to smallest absolute eigenvalue of the Hermitian part.
pub fn condition_estimate(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return f64::INFINITY;
    }
    let eig = hermitize(m).symmetric_eigen();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &l in eig.eigenvalues.iter() {
        lo = lo.min(l.abs());
        hi = hi.max(l.abs());
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Cholesky factor of a Hermitian positive definite matrix, possibly of a
/// diagonally loaded copy.
#[derive(Clone, Debug)]
pub struct Factor {
    chol: Cholesky<C64, Dyn>,
    jitter: f64,
}

fn valid_factor(chol: &Cholesky<C64, Dyn>) -> bool {
    // nalgebra takes complex square roots, so an indefinite pivot shows up
    // as a (nearly) imaginary diagonal entry rather than a failure.
    chol.l_dirty()
        .diagonal()
        .iter()
        .all(|z| z.re > 0.0 && z.re.is_finite() && z.im.abs() <= 1e-8 * z.re)
}

/// Factorizes a Hermitian PSD matrix under the jitter policy.
pub fn factor(m: &CMat) -> Result<Factor> {
    let d = m.nrows();
    if d == 0 {
        return Ok(Factor { chol: CMat::zeros(0, 0).cholesky().expect("empty"), jitter: 0.0 });
    }
    if let Some(chol) = m.clone().cholesky() {
        if valid_factor(&chol) {
            return Ok(Factor { chol, jitter: 0.0 });
        }
    }
    let load = real_trace(m) / d as f64;
    if load > 0.0 && load.is_finite() {
        let mut eps = JITTER_START;
        while eps <= JITTER_MAX * (1.0 + 1e-9) {
            let mut loaded = m.clone();
            for i in 0..d {
                loaded[(i, i)] += c64(eps * load, 0.0);
            }
            if let Some(chol) = loaded.cholesky() {
                if valid_factor(&chol) {
                    return Ok(Factor { chol, jitter: eps * load });
                }
            }
            eps *= 10.0;
        }
    }
    Err(Error::Numerical { condition: condition_estimate(m) })
}

impl Factor {
    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Absolute diagonal loading that was applied (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn solve_vec(&self, b: &CVec) -> CVec {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &CMat) -> CMat {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> CMat {
        hermitize(&self.chol.inverse())
    }

    /// `ln det` of the factorized matrix.
    pub fn ln_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|z| z.re.ln()).sum::<f64>()
    }

    /// `x^H M^{-1} x` via one triangular solve.
    pub fn quad(&self, x: &CVec) -> f64 {
        let l = self.chol.l();
        let w = l
            .solve_lower_triangular(x)
            .expect("Cholesky factor has a positive diagonal");
        w.norm_squared()
    }

    /// `tr(M^{-1} S)` for a square `S`.
    pub fn trace_solve(&self, s: &CMat) -> f64 {
        real_trace(&self.solve_mat(s))
    }
}

/// Inverse of a Hermitian PSD matrix under the jitter policy.
pub fn inv_hpd(m: &CMat) -> Result<CMat> {
    Ok(factor(m)?.inverse())
}

pub fn outer(a: &CVec, b: &CVec) -> CMat {
    a * b.adjoint()
}

/// `a^H b` as a complex scalar.
pub fn dot_h(a: &CVec, b: &CVec) -> C64 {
    a.dotc(b)
}

pub fn has_infinite_diagonal(m: &CMat) -> bool {
    m.diagonal().iter().any(|z| z.re.is_infinite())
}

pub fn is_finite_mat(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Hermitian eigen-decomposition `m = V diag(lambda) V^H`.
pub fn hermitian_eigen(m: &CMat) -> (DVector<f64>, CMat) {
    let eig = hermitize(m).symmetric_eigen();
    (eig.eigenvalues, eig.eigenvectors)
}

/// Rebuilds `V diag(lambda) V^H`.
pub fn from_eigen(values: &DVector<f64>, vectors: &CMat) -> CMat {
    let mut scaled = vectors.clone();
    for (j, &l) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(l);
    }
    hermitize(&(scaled * vectors.adjoint()))
}

/// Block-diagonal embedding of equally sized square blocks.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(n, n);
    let mut at = 0;
    for b in blocks {
        let d = b.nrows();
        out.view_mut((at, at), (d, d)).copy_from(b);
        at += d;
    }
    out
}
