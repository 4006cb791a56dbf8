//! Distributed variable-level EP for the pseudo prior.
//!
//! Each user's channel at each AP is estimated separately, with every other
//! user folded into Gaussian interference; symbols are re-estimated from the
//! channel means with a Gaussian stand-in for the constellation prior. The
//! M-step runs before the E-step, starting from the channel prior.

use crate::config::VlepParams;
use crate::error::Result;
use crate::gaussian::{gaussian_product, GaussianStats, ScalarGaussian};
use crate::linalg::{c64, factor, hermitize, scaled_eye, CMat, CVec, C64};
use crate::model::PrunedModel;

/// Pseudo prior handed to VB-EP.
#[derive(Clone, Debug)]
pub struct PseudoPrior {
    /// `[l][k]`.
    pub channels: Vec<Vec<GaussianStats>>,
    /// `[k][t]`.
    pub symbols: Vec<Vec<ScalarGaussian>>,
    pub iterations: usize,
    pub converged: bool,
}

impl PseudoPrior {
    pub fn empty(num_aps: usize) -> Self {
        Self { channels: vec![Vec::new(); num_aps], symbols: Vec::new(), iterations: 0, converged: true }
    }

    pub fn num_users(&self) -> usize {
        self.symbols.len()
    }
}

/// `sigma_v2 I + sum_{k' != k} sigma_x2 (C_k' + m_k' m_k'^H)`, the data-phase
/// interference covariance seen by user `k` at one AP.
///
/// Each interferer contributes its own second moment; the mean outer product
/// belongs to `k'`, not to the user being estimated.
pub fn data_interference_cov(channels: &[GaussianStats], k: usize, sigma_v2: f64, sigma_x2: f64) -> CMat {
    let n = channels.first().map_or(0, GaussianStats::dim);
    let mut c = scaled_eye(n, sigma_v2);
    for (j, ch) in channels.iter().enumerate() {
        if j != k {
            c += ch.second_moment().scale(sigma_x2);
        }
    }
    hermitize(&c)
}

/// Residual co-pilot interference on the despread pilot of user `k`:
/// `(sum m_k', C_v~ + sum C_k')` over the other members of its group.
pub fn pilot_interference_stats(
    channels: &[GaussianStats],
    co_pilot: impl IntoIterator<Item = usize>,
    despread_noise_var: f64,
    n: usize,
) -> GaussianStats {
    let mut mean = CVec::zeros(n);
    let mut cov = scaled_eye(n, despread_noise_var);
    for j in co_pilot {
        mean += &channels[j].mean;
        cov += &channels[j].cov;
    }
    GaussianStats::new(mean, cov)
}

/// Per-AP symbol likelihood `CN(x_t | m_t, tau)` from one channel mean.
///
/// Returns `(precision 1/tau, precision * m_t for each t)`; a zero channel
/// mean yields zero precision (a flat message).
pub fn ap_symbol_evidence(m_h: &CVec, c_v0: &CMat, y: &CMat) -> Result<(f64, Vec<C64>)> {
    let f = factor(c_v0)?;
    let w = f.solve_vec(m_h);
    let prec = m_h.dotc(&w).re.max(0.0);
    let info = (0..y.ncols()).map(|t| w.dotc(&y.column(t).into_owned())).collect();
    Ok((prec, info))
}

/// Fuses per-AP symbol evidence `(precision, info)` with the `CN(0, sigma_x2)`
/// prior.
pub fn fuse_symbol_evidence(evidence: &[(f64, Vec<C64>)], sigma_x2: f64, data_len: usize) -> Vec<ScalarGaussian> {
    let prec: f64 = 1.0 / sigma_x2 + evidence.iter().map(|(p, _)| p).sum::<f64>();
    let tau = 1.0 / prec;
    (0..data_len)
        .map(|t| {
            let info: C64 = evidence.iter().map(|(_, i)| i[t]).sum();
            ScalarGaussian::new(info * tau, tau)
        })
        .collect()
}

/// E-step for user `k`: `channel_means[l]` and `c_v0[l]` are the user's
/// current channel mean and data interference covariance at AP `l`.
pub fn e_step(channel_means: &[CVec], c_v0: &[CMat], y: &[CMat], sigma_x2: f64) -> Result<Vec<ScalarGaussian>> {
    let data_len = y.first().map_or(0, |y| y.ncols());
    let evidence = channel_means
        .iter()
        .zip(c_v0)
        .zip(y)
        .map(|((m, c), y)| ap_symbol_evidence(m, c, y))
        .collect::<Result<Vec<_>>>()?;
    Ok(fuse_symbol_evidence(&evidence, sigma_x2, data_len))
}

/// M-step for one (AP, user) pair from AP-local quantities only.
///
/// The pilot and data terms are first merged into one Gaussian pseudo
/// observation of `h` with precision `C_vp^{-1} + (sum_t r_t) C_v0^{-1}`,
/// which is then combined with the prior `CN(0, xi)` in gain form so that a
/// vanishing prior covariance is handled exactly.
pub fn m_step(
    y: &CMat,
    ytilde: &CVec,
    xi: &CMat,
    c_v0: &CMat,
    pilot_interference: &GaussianStats,
    symbols: &[ScalarGaussian],
) -> Result<GaussianStats> {
    let n = ytilde.len();
    let fp = factor(&pilot_interference.cov)?;
    let fd = factor(c_v0)?;
    let r_sum: f64 = symbols.iter().map(ScalarGaussian::second_moment).sum();
    let mut weighted_y = CVec::zeros(n);
    for (t, s) in symbols.iter().enumerate() {
        weighted_y += y.column(t).into_owned() * s.mean.conj();
    }
    let precision = hermitize(&(fp.inverse() + fd.inverse().scale(r_sum)));
    let info = fd.solve_vec(&weighted_y) + fp.solve_vec(&(ytilde - &pilot_interference.mean));
    let fj = factor(&precision)?;
    let obs_cov = fj.inverse();
    let obs_mean = fj.solve_vec(&info);
    let prior = GaussianStats::zero_mean(xi.clone());
    let (post, _) = gaussian_product(&obs_mean, &CMat::identity(n, n), &obs_cov, &prior)?;
    Ok(post)
}

/// Iterative state of the pseudo-prior estimator.
#[derive(Clone, Debug)]
pub struct VlepState<'a> {
    model: &'a PrunedModel,
    params: VlepParams,
    /// `[l][k]`.
    pub channels: Vec<Vec<GaussianStats>>,
    /// `[k][t]`.
    pub symbols: Vec<Vec<ScalarGaussian>>,
    /// Data interference covariances `[l][k]`.
    pub c_v0: Vec<Vec<CMat>>,
    /// Pilot interference `[l][k]`.
    pub pilot_interference: Vec<Vec<GaussianStats>>,
    pub iterations: usize,
}

impl<'a> VlepState<'a> {
    /// Channels at their prior, symbols at `CN(0, init_symbol_var)`, and
    /// interference computed from that prior state.
    pub fn new(model: &'a PrunedModel, params: &VlepParams) -> Self {
        let channels: Vec<Vec<GaussianStats>> = model
            .xi
            .iter()
            .map(|row| row.iter().map(|x| GaussianStats::zero_mean(x.clone())).collect())
            .collect();
        let symbols = vec![
            vec![ScalarGaussian::new(c64(0.0, 0.0), params.init_symbol_var); model.data_len()];
            model.num_users()
        ];
        let mut s = Self {
            model,
            params: params.clone(),
            channels,
            symbols,
            c_v0: Vec::new(),
            pilot_interference: Vec::new(),
            iterations: 0,
        };
        s.refresh_interference();
        s
    }

    fn refresh_interference(&mut self) {
        let m = self.model;
        let n = m.antennas();
        self.c_v0 = (0..m.num_aps())
            .map(|l| {
                (0..m.num_users())
                    .map(|k| data_interference_cov(&self.channels[l], k, m.sigma_v2, m.sigma_x2))
                    .collect()
            })
            .collect();
        self.pilot_interference = (0..m.num_aps())
            .map(|l| {
                (0..m.num_users())
                    .map(|k| pilot_interference_stats(&self.channels[l], m.co_pilot(k), m.despread_noise_var, n))
                    .collect()
            })
            .collect();
    }

    /// M-step of `(l, k)` under the current interference and symbols.
    pub fn m_step_at(&self, l: usize, k: usize) -> Result<GaussianStats> {
        let m = self.model;
        m_step(
            &m.y[l],
            &m.despread[l][m.group_of[k]],
            &m.xi[l][k],
            &self.c_v0[l][k],
            &self.pilot_interference[l][k],
            &self.symbols[k],
        )
    }

    /// One M-step / interference refresh / E-step round. Returns the largest
    /// relative channel-mean movement.
    pub fn iterate(&mut self) -> Result<f64> {
        let m = self.model;
        let (nl, nk) = (m.num_aps(), m.num_users());
        let beta = self.params.damping;
        let mut updated = Vec::with_capacity(nl);
        for l in 0..nl {
            let row = (0..nk).map(|k| self.m_step_at(l, k)).collect::<Result<Vec<_>>>()?;
            updated.push(row);
        }
        let mut movement = 0.0f64;
        for (l, row) in updated.into_iter().enumerate() {
            for (k, mut new) in row.into_iter().enumerate() {
                let old = &self.channels[l][k];
                if beta < 1.0 {
                    new.mean = new.mean.scale(beta) + old.mean.scale(1.0 - beta);
                }
                let scale = crate::linalg::real_trace(&m.xi[l][k]).max(0.0).sqrt();
                let rel = (&new.mean - &old.mean).norm() / (new.mean.norm() + CONVERGENCE_FLOOR * scale);
                if rel.is_finite() {
                    movement = movement.max(rel);
                } else if (&new.mean - &old.mean).norm() > 0.0 {
                    movement = f64::INFINITY;
                }
                self.channels[l][k] = new;
            }
        }
        self.refresh_interference();
        for k in 0..nk {
            let means: Vec<CVec> = (0..nl).map(|l| self.channels[l][k].mean.clone()).collect();
            let c_v0: Vec<CMat> = (0..nl).map(|l| self.c_v0[l][k].clone()).collect();
            self.symbols[k] = e_step(&means, &c_v0, &m.y, m.sigma_x2)?;
        }
        self.iterations += 1;
        Ok(movement)
    }

    pub fn pseudo_prior(&self, converged: bool) -> PseudoPrior {
        PseudoPrior {
            channels: self.channels.clone(),
            symbols: self.symbols.clone(),
            iterations: self.iterations,
            converged,
        }
    }
}

/// Channel means smaller than this fraction of the prior standard deviation
/// are measured in absolute rather than relative terms.
pub const CONVERGENCE_FLOOR: f64 = 1e-6;

/// Iterates until the largest relative channel-mean movement falls below
/// `params.tol` or `params.max_iters` is reached. A numerical failure stops
/// iteration and returns the last complete state.
pub fn run_vlep(model: &PrunedModel, params: &VlepParams) -> PseudoPrior {
    if model.num_users() == 0 {
        return PseudoPrior::empty(model.num_aps());
    }
    let mut state = VlepState::new(model, params);
    let mut converged = false;
    while state.iterations < params.max_iters {
        let snapshot = state.clone();
        match state.iterate() {
            Ok(movement) if movement < params.tol => {
                converged = true;
                break;
            }
            Ok(_) => {}
            Err(e) => {
                log::warn!("VL-EP stopped after {} iterations: {e}", snapshot.iterations);
                state = snapshot;
                break;
            }
        }
    }
    state.pseudo_prior(converged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: f64) -> CVec {
        CVec::from_element(1, c64(x, 0.0))
    }

    #[test]
    fn data_interference_examples() {
        let ch = vec![GaussianStats::new(s(5.0), scaled_eye(1, 2.0))];
        assert_eq!(data_interference_cov(&ch, 0, 1.0, 1.0), scaled_eye(1, 1.0));
        let ch = vec![GaussianStats::new(s(5.0), scaled_eye(1, 2.0)), GaussianStats::new(s(1.0), scaled_eye(1, 1.0))];
        assert!((data_interference_cov(&ch, 0, 1.0, 1.0)[(0, 0)].re - 3.0).abs() < 1e-15);
    }

    #[test]
    fn pilot_interference_examples() {
        let ch = vec![GaussianStats::new(s(9.0), scaled_eye(1, 9.0)), GaussianStats::new(s(0.5), scaled_eye(1, 0.2))];
        let single = pilot_interference_stats(&ch, std::iter::empty(), 0.5, 1);
        assert_eq!(single.mean, s(0.0));
        assert_eq!(single.cov, scaled_eye(1, 0.5));
        let pair = pilot_interference_stats(&ch, [1], 0.5, 1);
        assert!((pair.mean[0].re - 0.5).abs() < 1e-15);
        assert!((pair.cov[(0, 0)].re - 0.7).abs() < 1e-15);
    }

    #[test]
    fn scalar_e_step() {
        let y = CMat::from_element(1, 1, c64(2.0, 0.0));
        let (prec, info) = ap_symbol_evidence(&s(1.0), &scaled_eye(1, 1.0), &y).unwrap();
        assert!((1.0 / prec - 1.0).abs() < 1e-15);
        assert!((info[0] / prec - c64(2.0, 0.0)).norm() < 1e-15);
        let post = e_step(&[s(1.0)], &[scaled_eye(1, 1.0)], &[y], 1.0).unwrap();
        assert!((post[0].var - 0.5).abs() < 1e-15);
        assert!((post[0].mean - c64(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_channel_means_return_the_prior() {
        let y = CMat::from_element(2, 3, c64(1.0, -1.0));
        let post = e_step(&[CVec::zeros(2), CVec::zeros(2)], &[scaled_eye(2, 1.0), scaled_eye(2, 2.0)], &[y.clone(), y], 4.0)
            .unwrap();
        for p in post {
            assert_eq!(p.mean, c64(0.0, 0.0));
            assert!((p.var - 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_aps_add_precision() {
        let y = CMat::from_element(1, 1, c64(0.3, 0.0));
        let one = ap_symbol_evidence(&s(1.0), &scaled_eye(1, 1.0), &y).unwrap();
        let prior_var = 1e12;
        let a = fuse_symbol_evidence(&[one.clone()], prior_var, 1);
        let b = fuse_symbol_evidence(&[one.clone(), one], prior_var, 1);
        assert!((b[0].var / a[0].var - 0.5).abs() < 1e-9);
    }

    #[test]
    fn scalar_m_step() {
        let y = CMat::from_element(1, 1, c64(2.0, 0.0));
        let sym = [ScalarGaussian::new(c64(1.0, 0.0), 0.5)];
        let interference = GaussianStats::zero_mean(scaled_eye(1, 1.0));
        let post = m_step(&y, &s(1.0), &scaled_eye(1, 1.0), &scaled_eye(1, 1.0), &interference, &sym).unwrap();
        assert!((post.cov[(0, 0)].re - 1.0 / 3.5).abs() < 1e-14);
        assert!((post.mean[0].re - 3.0 / 3.5).abs() < 1e-14);
    }

    #[test]
    fn uninformative_m_step_gives_zero_mean() {
        let y = CMat::from_element(1, 2, c64(2.0, 1.0));
        let sym = [ScalarGaussian::new(c64(0.0, 0.0), 1.0); 2];
        let interference = GaussianStats::zero_mean(scaled_eye(1, 1e300));
        let post = m_step(&y, &s(1.0), &scaled_eye(1, 1.0), &scaled_eye(1, 1.0), &interference, &sym).unwrap();
        assert!(post.mean.norm() < 1e-250);
    }

    #[test]
    fn vanishing_prior_m_step() {
        let y = CMat::from_element(1, 1, c64(2.0, 0.0));
        let sym = [ScalarGaussian::new(c64(1.0, 0.0), 0.5)];
        let interference = GaussianStats::zero_mean(scaled_eye(1, 1.0));
        let post = m_step(&y, &s(1.0), &scaled_eye(1, 1e-15), &scaled_eye(1, 1.0), &interference, &sym).unwrap();
        assert!(post.mean.norm() < 1e-14 && post.cov.norm() < 1e-14);
    }
}
