//! Circularly-symmetric complex Gaussian algebra.
//!
//! Every message, prior and belief in the inference stack is one of the
//! three families defined here. A vacuous (flat) density is represented
//! explicitly by infinite variance with zero mean; products and ratios treat
//! it as the identity element.

use std::f64::consts::PI;


use crate::error::{contract, Result};
use crate::linalg::{
    c64, check_hermitian, factor, from_eigen, has_infinite_diagonal, hermitian_eigen, hermitize,
    min_eigenvalue, real_trace, CMat, CVec, C64,
};

/// Precision eigenvalues at or below this fraction of the numerator's largest
/// precision are treated as exactly cancelled.
const CANCEL_TOL: f64 = 1e-12;
/// Floor on the precision left by an EP division, relative to the
/// numerator's largest precision.
pub const RATIO_PRECISION_FLOOR: f64 = 1e-8;

/// Mean vector and Hermitian covariance of a complex Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStats {
    pub mean: CVec,
    pub cov: CMat,
}

impl GaussianStats {
    pub fn new(mean: CVec, cov: CMat) -> Self {
        debug_assert_eq!(mean.len(), cov.nrows());
        Self { mean, cov }
    }

    /// Flat density over `C^d`.
    pub fn vacuous(d: usize) -> Self {
        Self {
            mean: CVec::zeros(d),
            cov: CMat::from_diagonal_element(d, d, c64(f64::INFINITY, 0.0)),
        }
    }

    pub fn zero_mean(cov: CMat) -> Self {
        Self { mean: CVec::zeros(cov.nrows()), cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_vacuous(&self) -> bool {
        has_infinite_diagonal(&self.cov)
    }

    /// Inverse covariance; the zero matrix for a vacuous density.
    pub fn precision(&self) -> Result<CMat> {
        if self.is_vacuous() {
            return Ok(CMat::zeros(self.dim(), self.dim()));
        }
        Ok(factor(&self.cov)?.inverse())
    }

    /// `E[x x^H] = C + m m^H`.
    pub fn second_moment(&self) -> CMat {
        &self.cov + &self.mean * self.mean.adjoint()
    }

    /// Whether the density is a point mass (all-zero covariance).
    pub fn is_point_mass(&self) -> bool {
        self.cov.iter().all(|c| *c == C64::new(0.0, 0.0))
    }

    /// Normalized product of two densities over the same variable. A point
    /// mass absorbs the other factor.
    pub fn multiply(&self, other: &GaussianStats) -> Result<GaussianStats> {
        if self.is_vacuous() || other.is_point_mass() {
            return Ok(other.clone());
        }
        if other.is_vacuous() || self.is_point_mass() {
            return Ok(self.clone());
        }
        let identity = CMat::identity(self.dim(), self.dim());
        Ok(gaussian_product(&self.mean, &identity, &self.cov, other)?.0)
    }

    pub fn log_pdf(&self, x: &CVec) -> Result<f64> {
        log_gaussian_pdf(x, &self.mean, &self.cov)
    }

    /// Checks the Hermitian contract and that the smallest eigenvalue is not
    /// below `-1e-9 * trace / d`.
    pub fn validate(&self) -> Result<()> {
        if self.is_vacuous() {
            return Ok(());
        }
        check_hermitian(&self.cov, "covariance")?;
        let d = self.dim().max(1) as f64;
        let tr = real_trace(&self.cov);
        let lo = min_eigenvalue(&self.cov);
        if lo < -1e-9 * tr.abs() / d {
            return Err(contract(format!("covariance not PSD (min eigenvalue {lo:.3e})")));
        }
        Ok(())
    }
}

/// Scalar complex Gaussian `CN(mean, var)`; `var = +inf` is the flat message.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarGaussian {
    pub mean: C64,
    pub var: f64,
}

impl ScalarGaussian {
    pub fn new(mean: C64, var: f64) -> Self {
        debug_assert!(var >= 0.0 || var.is_nan());
        Self { mean, var }
    }

    pub fn vacuous() -> Self {
        Self { mean: C64::new(0.0, 0.0), var: f64::INFINITY }
    }

    pub fn is_vacuous(&self) -> bool {
        self.var.is_infinite()
    }

    pub fn precision(&self) -> f64 {
        1.0 / self.var
    }

    /// `E|x|^2`.
    pub fn second_moment(&self) -> f64 {
        self.var + self.mean.norm_sqr()
    }

    pub fn multiply(&self, other: &ScalarGaussian) -> ScalarGaussian {
        if self.is_vacuous() {
            return *other;
        }
        if other.is_vacuous() {
            return *self;
        }
        if self.var == 0.0 {
            return *self;
        }
        if other.var == 0.0 {
            return *other;
        }
        let p = self.precision() + other.precision();
        let var = 1.0 / p;
        ScalarGaussian {
            mean: (self.mean / self.var + other.mean / other.var) * var,
            var,
        }
    }

    /// EP division `self / den`. Returns the quotient and whether the
    /// precision floor was applied.
    pub fn ratio(&self, den: &ScalarGaussian) -> (ScalarGaussian, bool) {
        if den.is_vacuous() || self.var == 0.0 {
            return (*self, false);
        }
        if self.is_vacuous() {
            return (ScalarGaussian::vacuous(), den.var > 0.0);
        }
        let pn = self.precision();
        let p = pn - den.precision();
        if p.abs() <= CANCEL_TOL * pn {
            return (ScalarGaussian::vacuous(), false);
        }
        if p < RATIO_PRECISION_FLOOR * pn {
            let floored = RATIO_PRECISION_FLOOR * pn;
            return (ScalarGaussian { mean: self.mean, var: 1.0 / floored }, true);
        }
        let var = 1.0 / p;
        let mean = (self.mean * pn - den.mean * den.precision()) * var;
        (ScalarGaussian { mean, var }, false)
    }

    pub fn log_pdf(&self, x: C64) -> f64 {
        -(PI * self.var).ln() - (x - self.mean).norm_sqr() / self.var
    }
}

/// Gaussian over a `T * N` vector whose covariance is block diagonal with
/// `T` blocks of size `N x N` (one per time index).
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDiagGaussianStats {
    pub mean: CVec,
    pub blocks: Vec<CMat>,
}

impl BlockDiagGaussianStats {
    pub fn new(mean: CVec, blocks: Vec<CMat>) -> Self {
        debug_assert!(blocks.iter().all(|b| b.nrows() * blocks.len() == mean.len()));
        Self { mean, blocks }
    }

    pub fn vacuous(num_blocks: usize, block_size: usize) -> Self {
        Self {
            mean: CVec::zeros(num_blocks * block_size),
            blocks: vec![GaussianStats::vacuous(block_size).cov; num_blocks],
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_size(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.nrows())
    }

    pub fn block_mean(&self, t: usize) -> CVec {
        let n = self.block_size();
        self.mean.rows(t * n, n).into_owned()
    }

    pub fn block(&self, t: usize) -> GaussianStats {
        GaussianStats::new(self.block_mean(t), self.blocks[t].clone())
    }

    pub fn set_block(&mut self, t: usize, g: &GaussianStats) {
        let n = self.block_size();
        self.mean.rows_mut(t * n, n).copy_from(&g.mean);
        self.blocks[t] = g.cov.clone();
    }

    pub fn from_blocks(blocks: Vec<GaussianStats>) -> Self {
        let n = blocks.first().map_or(0, |b| b.dim());
        let mut mean = CVec::zeros(n * blocks.len());
        let mut covs = Vec::with_capacity(blocks.len());
        for (t, b) in blocks.into_iter().enumerate() {
            mean.rows_mut(t * n, n).copy_from(&b.mean);
            covs.push(b.cov);
        }
        Self { mean, blocks: covs }
    }

    pub fn is_block_vacuous(&self, t: usize) -> bool {
        has_infinite_diagonal(&self.blocks[t])
    }

    /// Dense `TN x TN` covariance.
    pub fn dense_cov(&self) -> CMat {
        crate::linalg::block_diag(&self.blocks)
    }
}

/// Product of a linear-Gaussian likelihood and a Gaussian prior:
///
/// `CN(m1 | A x, C1) CN(x | m2, C2) = CN(x | m3, C3) CN(m1 | A m2, C1 + A C2 A^H)`.
///
/// Returns `(m3, C3)` and the log evidence `ln CN(m1 | A m2, C1 + A C2 A^H)`.
/// Computed in gain form so that singular prior or observation covariances
/// are admissible; only the innovation covariance is factorized.
pub fn gaussian_product(
    obs_mean: &CVec,
    map: &CMat,
    obs_cov: &CMat,
    prior: &GaussianStats,
) -> Result<(GaussianStats, f64)> {
    let (d_obs, d_x) = (obs_mean.len(), prior.dim());
    if map.nrows() != d_obs || map.ncols() != d_x || obs_cov.nrows() != d_obs {
        return Err(contract("gaussian_product: inconsistent dimensions"));
    }
    if prior.is_vacuous() || has_infinite_diagonal(obs_cov) {
        return Err(contract("gaussian_product: vacuous factor has no normalizable evidence"));
    }
    check_hermitian(obs_cov, "observation covariance")?;
    check_hermitian(&prior.cov, "prior covariance")?;

    let c2_ah = &prior.cov * map.adjoint();
    let innovation_cov = hermitize(&(obs_cov + map * &c2_ah));
    let innov = factor(&innovation_cov)?;
    let residual = obs_mean - map * &prior.mean;

    // gain = C2 A^H S^{-1}; S is Hermitian so solve S G^H = A C2.
    let gain = innov.solve_mat(&c2_ah.adjoint()).adjoint();
    let mean = &prior.mean + &gain * &residual;
    let cov = hermitize(&(&prior.cov - &gain * c2_ah.adjoint()));

    let evidence = -(d_obs as f64) * PI.ln() - innov.ln_det() - innov.quad(&residual);
    Ok((GaussianStats::new(mean, cov), evidence))
}

/// `ln CN(x | mean, cov) = -ln det(pi cov) - (x - m)^H cov^{-1} (x - m)`,
/// evaluated through a Cholesky factor.
pub fn log_gaussian_pdf(x: &CVec, mean: &CVec, cov: &CMat) -> Result<f64> {
    if x.len() != mean.len() || cov.nrows() != x.len() {
        return Err(contract("log_gaussian_pdf: inconsistent dimensions"));
    }
    check_hermitian(cov, "covariance")?;
    let f = factor(cov)?;
    let r = x - mean;
    Ok(-(x.len() as f64) * PI.ln() - f.ln_det() - f.quad(&r))
}

/// EP division of two Gaussians over the same variable.
pub fn gaussian_ratio(numerator: &GaussianStats, denominator: &GaussianStats) -> Result<GaussianStats> {
    Ok(gaussian_ratio_floored(numerator, denominator)?.0)
}

/// [`gaussian_ratio`] that also reports whether any precision eigenvalue was
/// raised to the floor.
///
/// Precision eigenvalues that cancel exactly (within `1e-12` of the
/// numerator's spectral radius) leave a vacuous result when every direction
/// cancels; otherwise eigenvalues below `1e-8 * lambda_max(num)` are raised
/// to that floor and the mean along those directions is taken from the
/// numerator.
pub fn gaussian_ratio_floored(
    numerator: &GaussianStats,
    denominator: &GaussianStats,
) -> Result<(GaussianStats, bool)> {
    let d = numerator.dim();
    if denominator.dim() != d {
        return Err(contract("gaussian_ratio: dimension mismatch"));
    }
    if denominator.is_vacuous() {
        return Ok((numerator.clone(), false));
    }
    if numerator.is_vacuous() {
        return Ok((GaussianStats::vacuous(d), true));
    }
    if numerator.is_point_mass() {
        return Ok((numerator.clone(), false));
    }
    // A numerator too singular to factor even with loading has no usable
    // precision: divide in covariance form instead.
    let prec_num = match numerator.precision() {
        Ok(p) => p,
        Err(_) => return singular_ratio(numerator, denominator),
    };
    let prec_den = denominator.precision()?;
    let info = &prec_num * &numerator.mean - &prec_den * &denominator.mean;
    let (num_vals, _) = hermitian_eigen(&prec_num);
    let lam_max = num_vals.iter().copied().fold(0.0f64, f64::max);

    let (mut vals, vecs) = hermitian_eigen(&(prec_num - prec_den));
    if vals.iter().all(|l| l.abs() <= CANCEL_TOL * lam_max) {
        return Ok((GaussianStats::vacuous(d), false));
    }
    let floor = RATIO_PRECISION_FLOOR * lam_max;
    let mut floored = false;
    let mut mean_coords = CVec::zeros(d);
    for j in 0..d {
        let v = vecs.column(j);
        if vals[j] < floor {
            vals[j] = floor;
            floored = true;
            mean_coords[j] = v.dotc(&numerator.mean);
        } else {
            mean_coords[j] = v.dotc(&info) / c64(vals[j], 0.0);
        }
    }
    let mean = &vecs * mean_coords;
    let cov = from_eigen(&vals.map(|l| 1.0 / l), &vecs);
    Ok((GaussianStats::new(mean, cov), floored))
}

/// Covariance-form ratio for a numerator without a usable precision:
/// `C = C_n (C_d - C_n)^{-1} C_d`, `m = m_n + C_n (C_d - C_n)^{-1} (m_n - m_d)`.
/// Exact when `C_d - C_n` is positive definite; otherwise the numerator is
/// returned and the result is reported as floored.
fn singular_ratio(numerator: &GaussianStats, denominator: &GaussianStats) -> Result<(GaussianStats, bool)> {
    let gap = hermitize(&(&denominator.cov - &numerator.cov));
    let Some(chol) = gap.clone().cholesky() else {
        return Ok((numerator.clone(), true));
    };
    let mean = &numerator.mean + &numerator.cov * chol.solve(&(&numerator.mean - &denominator.mean));
    let cov = hermitize(&(&numerator.cov * chol.solve(&denominator.cov)));
    Ok((GaussianStats::new(mean, cov), false))
}

/// Moment-matching projection onto the block-diagonal family: keeps the
/// mean and the `(t, t)` diagonal blocks of size `block x block`.
pub fn project_blockdiag(mean: &CVec, cov: &CMat, block: usize) -> BlockDiagGaussianStats {
    assert!(block > 0 && mean.len() % block == 0, "project_blockdiag: block size must divide dimension");
    assert_eq!(cov.nrows(), mean.len(), "project_blockdiag: covariance dimension");
    let t = mean.len() / block;
    let blocks = (0..t)
        .map(|i| cov.view((i * block, i * block), (block, block)).into_owned())
        .collect();
    BlockDiagGaussianStats::new(mean.clone(), blocks)
}

/// Moment-domain convex combination `beta * new + (1 - beta) * old`; a
/// vacuous `old` is replaced outright.
pub fn damp_stats(new: &GaussianStats, old: &GaussianStats, beta: f64) -> GaussianStats {
    if beta >= 1.0 || old.is_vacuous() || new.is_vacuous() {
        return new.clone();
    }
    GaussianStats::new(
        new.mean.scale(beta) + old.mean.scale(1.0 - beta),
        new.cov.scale(beta) + old.cov.scale(1.0 - beta),
    )
}

pub fn damp_blocks(new: &BlockDiagGaussianStats, old: &BlockDiagGaussianStats, beta: f64) -> BlockDiagGaussianStats {
    let blocks = (0..new.num_blocks())
        .map(|t| damp_stats(&new.block(t), &old.block(t), beta))
        .collect();
    BlockDiagGaussianStats::from_blocks(blocks)
}
