//! Component-wise iterative maximum-likelihood activity detection.
//!
//! The objective is `L_tot(u) = L_p(u) + L_d(u)`: the exact log-likelihood
//! of the despread pilots plus a CLT approximation of the data
//! log-likelihood in which each active user's data contribution is Gaussian
//! with per-AP covariance `sigma_x2 (C_h|u + m_h|u m_h|u^H)` and cross-AP
//! blocks are neglected. The `-d ln(pi)` constants are dropped throughout.

use std::f64::consts::PI;

use crate::config::ActivityParams;
use crate::error::Result;
use crate::gaussian::{gaussian_product, log_gaussian_pdf, GaussianStats};
use crate::linalg::{factor, hermitize, scaled_eye, CMat, CVec};
use crate::scenario::{despread_all, Realization};

/// Observations and model quantities that activity detection reads.
#[derive(Clone, Debug)]
pub struct ActivityProblem {
    /// Despread pilots `[l][g]`.
    pub despread: Vec<Vec<CVec>>,
    /// `S_l = Y_l Y_l^H`; the data term only needs this Gram matrix.
    pub data_gram: Vec<CMat>,
    /// Link covariances `[l][k]`.
    pub xi: Vec<Vec<CMat>>,
    pub pilot_groups: Vec<Vec<usize>>,
    pub pilot_of: Vec<usize>,
    pub sigma_x2: f64,
    pub sigma_v2: f64,
    /// Despread noise variance `sigma_v2 / (P sigma_x2)`.
    pub despread_noise_var: f64,
    pub data_len: usize,
    pub antennas: usize,
}

impl ActivityProblem {
    pub fn new(r: &Realization) -> Self {
        Self {
            despread: despread_all(r),
            data_gram: r.y.iter().map(|y| y * y.adjoint()).collect(),
            xi: r.xi.clone(),
            pilot_groups: r.pilot_groups.clone(),
            pilot_of: r.pilot_of.clone(),
            sigma_x2: r.sigma_x2,
            sigma_v2: r.sigma_v2,
            despread_noise_var: r.despread_noise_var(),
            data_len: r.data_len(),
            antennas: r.antennas(),
        }
    }

    pub fn num_aps(&self) -> usize {
        self.despread.len()
    }

    pub fn num_users(&self) -> usize {
        self.pilot_of.len()
    }

    fn active_members(&self, g: usize, u: &[bool]) -> Vec<usize> {
        self.pilot_groups[g].iter().copied().filter(|&k| u[k]).collect()
    }
}

/// Pilot-based posterior of one (AP, pilot group) pair under a hypothesis.
#[derive(Clone, Debug)]
pub struct GroupPosterior {
    /// `C_y = C_v~ + sum_{active k in group} Xi_lk`.
    pub c_y: CMat,
    /// `(k, CN(m_h|u, C_h|u))` for each active member.
    pub members: Vec<(usize, GaussianStats)>,
}

/// Pilot-based channel posteriors for one AP and pilot group.
///
/// `ytilde` is the despread observation, `xi` the link covariances of the
/// AP, and `active` the active members of the group.
pub fn pilot_posterior(
    ytilde: &CVec,
    xi: &[CMat],
    active: &[usize],
    despread_noise_var: f64,
) -> Result<GroupPosterior> {
    let n = ytilde.len();
    let mut c_y = scaled_eye(n, despread_noise_var);
    for &k in active {
        c_y += &xi[k];
    }
    let identity = CMat::identity(n, n);
    let members = active
        .iter()
        .map(|&k| {
            // Everything in the group except user k acts as noise on it.
            let c_yp_given_h = hermitize(&(&c_y - &xi[k]));
            let prior = GaussianStats::zero_mean(xi[k].clone());
            let (post, _) = gaussian_product(ytilde, &identity, &c_yp_given_h, &prior)?;
            Ok((k, post))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroupPosterior { c_y, members })
}

/// Per-AP data covariance contribution `sigma_x2 (C_h|u + m_h|u m_h|u^H)` of
/// an active user.
pub fn data_dispersion(posterior: &GaussianStats, sigma_x2: f64) -> CMat {
    hermitize(&posterior.second_moment().scale(sigma_x2))
}

/// `-ln det C - y^H C^{-1} y` (the complex Gaussian log-density without its
/// `-d ln(pi)` constant).
fn centered_log_density(y: &CVec, cov: &CMat) -> Result<f64> {
    let v = log_gaussian_pdf(y, &CVec::zeros(y.len()), cov)?;
    Ok(v + y.len() as f64 * PI.ln())
}

/// All pilot posteriors and per-term likelihood contributions for one
/// hypothesis.
#[derive(Clone, Debug)]
pub struct PilotPosteriorCache {
    /// `[l][g]`.
    pub groups: Vec<Vec<GroupPosterior>>,
    /// Pilot log-likelihood term of each `(l, g)`.
    pub pilot_terms: Vec<Vec<f64>>,
    /// Data dispersion of each active `(l, k)`.
    pub dispersion: Vec<Vec<Option<CMat>>>,
}

impl PilotPosteriorCache {
    pub fn build(problem: &ActivityProblem, u: &[bool]) -> Result<Self> {
        let (nl, ng, nk) = (problem.num_aps(), problem.pilot_groups.len(), problem.num_users());
        let mut groups = Vec::with_capacity(nl);
        let mut pilot_terms = Vec::with_capacity(nl);
        let mut dispersion = vec![vec![None; nk]; nl];
        for l in 0..nl {
            let mut gl = Vec::with_capacity(ng);
            let mut tl = Vec::with_capacity(ng);
            for g in 0..ng {
                let (post, term) = group_term(problem, l, g, u)?;
                for (k, m) in &post.members {
                    dispersion[l][*k] = Some(data_dispersion(m, problem.sigma_x2));
                }
                gl.push(post);
                tl.push(term);
            }
            groups.push(gl);
            pilot_terms.push(tl);
        }
        Ok(Self { groups, pilot_terms, dispersion })
    }

    pub fn posterior(&self, l: usize, k: usize, g: usize) -> Option<&GaussianStats> {
        self.groups[l][g].members.iter().find(|(j, _)| *j == k).map(|(_, p)| p)
    }
}

fn group_term(problem: &ActivityProblem, l: usize, g: usize, u: &[bool]) -> Result<(GroupPosterior, f64)> {
    let active = problem.active_members(g, u);
    let post = pilot_posterior(&problem.despread[l][g], &problem.xi[l], &active, problem.despread_noise_var)?;
    let term = centered_log_density(&problem.despread[l][g], &post.c_y)?;
    Ok((post, term))
}

/// `L_p = sum_{l,g} [-ln det C_y - y~^H C_y^{-1} y~]`.
pub fn log_likelihood_pilot(cache: &PilotPosteriorCache) -> f64 {
    cache.pilot_terms.iter().flatten().sum()
}

/// Data log-likelihood term of AP `l`: `-T ln det B_l - tr(B_l^{-1} Y_l Y_l^H)`
/// with `B_l = sigma_v2 I + sum_{active k} dispersion_lk`.
fn data_term(problem: &ActivityProblem, l: usize, dispersion: &[Option<CMat>]) -> Result<f64> {
    let mut b = scaled_eye(problem.antennas, problem.sigma_v2);
    for d in dispersion.iter().flatten() {
        b += d;
    }
    let f = factor(&b)?;
    Ok(-(problem.data_len as f64) * f.ln_det() - f.trace_solve(&problem.data_gram[l]))
}

/// `L^_d = sum_l { -T ln det B_l - sum_t y_lt^H B_l^{-1} y_lt }`.
pub fn log_likelihood_data(problem: &ActivityProblem, cache: &PilotPosteriorCache) -> Result<f64> {
    (0..problem.num_aps()).map(|l| data_term(problem, l, &cache.dispersion[l])).sum()
}

/// `L_tot(u)` evaluated from scratch.
pub fn log_likelihood_total(problem: &ActivityProblem, u: &[bool]) -> Result<f64> {
    let cache = PilotPosteriorCache::build(problem, u)?;
    Ok(log_likelihood_pilot(&cache) + log_likelihood_data(problem, &cache)?)
}

/// Coordinate-ascent state holding per-term caches so that a single flip
/// only re-evaluates the flipped user's pilot group and the per-AP data
/// terms.
#[derive(Clone, Debug)]
pub struct ActivityState<'a> {
    problem: &'a ActivityProblem,
    u: Vec<bool>,
    cache: PilotPosteriorCache,
    data_terms: Vec<f64>,
    total: f64,
}

/// Re-evaluated pieces of the state after a candidate flip.
#[derive(Clone, Debug)]
pub struct Proposal {
    k: usize,
    value: bool,
    groups: Vec<GroupPosterior>,
    pilot_terms: Vec<f64>,
    data_terms: Vec<f64>,
    pub total: f64,
}

impl<'a> ActivityState<'a> {
    pub fn new(problem: &'a ActivityProblem, u: Vec<bool>) -> Result<Self> {
        let cache = PilotPosteriorCache::build(problem, &u)?;
        let data_terms = (0..problem.num_aps())
            .map(|l| data_term(problem, l, &cache.dispersion[l]))
            .collect::<Result<Vec<_>>>()?;
        let mut s = Self { problem, u, cache, data_terms, total: 0.0 };
        s.total = s.sum_terms();
        Ok(s)
    }

    fn sum_terms(&self) -> f64 {
        log_likelihood_pilot(&self.cache) + self.data_terms.iter().sum::<f64>()
    }

    pub fn u(&self) -> &[bool] {
        &self.u
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn cache(&self) -> &PilotPosteriorCache {
        &self.cache
    }

    /// Evaluates `L_tot` with `u_k = value`, leaving the state untouched.
    pub fn propose(&self, k: usize, value: bool) -> Result<Proposal> {
        let p = self.problem;
        let g = p.pilot_of[k];
        let mut u = self.u.clone();
        u[k] = value;
        let mut groups = Vec::with_capacity(p.num_aps());
        let mut pilot_terms = Vec::with_capacity(p.num_aps());
        let mut data_terms = Vec::with_capacity(p.num_aps());
        for l in 0..p.num_aps() {
            let (post, term) = group_term(p, l, g, &u)?;
            let mut disp = self.cache.dispersion[l].clone();
            for &j in &p.pilot_groups[g] {
                disp[j] = None;
            }
            for (j, m) in &post.members {
                disp[*j] = Some(data_dispersion(m, p.sigma_x2));
            }
            data_terms.push(data_term(p, l, &disp)?);
            groups.push(post);
            pilot_terms.push(term);
        }
        let mut total = 0.0;
        for l in 0..p.num_aps() {
            for (gg, t) in self.cache.pilot_terms[l].iter().enumerate() {
                total += if gg == g { pilot_terms[l] } else { *t };
            }
        }
        total += data_terms.iter().sum::<f64>();
        Ok(Proposal { k, value, groups, pilot_terms, data_terms, total })
    }

    pub fn commit(&mut self, proposal: Proposal) {
        let p = self.problem;
        let g = p.pilot_of[proposal.k];
        self.u[proposal.k] = proposal.value;
        for (l, post) in proposal.groups.into_iter().enumerate() {
            for &j in &p.pilot_groups[g] {
                self.cache.dispersion[l][j] = None;
            }
            for (j, m) in &post.members {
                self.cache.dispersion[l][*j] = Some(data_dispersion(m, p.sigma_x2));
            }
            self.cache.groups[l][g] = post;
            self.cache.pilot_terms[l][g] = proposal.pilot_terms[l];
        }
        self.data_terms = proposal.data_terms;
        self.total = self.sum_terms();
    }
}

/// Result of [`iterative_ml`].
#[derive(Clone, Debug, PartialEq)]
pub struct ActivityHypothesis {
    pub u_hat: Vec<bool>,
    pub log_likelihood: f64,
    pub passes: usize,
    pub converged: bool,
}

impl ActivityHypothesis {
    pub fn num_active(&self) -> usize {
        self.u_hat.iter().filter(|&&a| a).count()
    }
}

/// Cyclic coordinate ascent on `L_tot` starting from all users inactive.
///
/// Users are visited in index order; a flip is accepted only if it strictly
/// increases the objective. Stops after a pass without changes or after
/// `max_passes` passes. Hypotheses whose objective cannot be evaluated
/// count as `-inf`.
pub fn iterative_ml(problem: &ActivityProblem, params: &ActivityParams) -> ActivityHypothesis {
    let k_total = problem.num_users();
    let mut u = vec![false; k_total];
    // `None` while the current hypothesis has no finite objective.
    let mut state = ActivityState::new(problem, u.clone()).ok();
    let mut passes = 0;
    let mut converged = false;
    while passes < params.max_passes {
        passes += 1;
        let mut changed = false;
        for k in 0..k_total {
            let value = !u[k];
            match state.as_mut() {
                Some(s) => {
                    if let Ok(prop) = s.propose(k, value) {
                        if prop.total > s.total() {
                            s.commit(prop);
                            u[k] = value;
                            changed = true;
                        }
                    }
                }
                None => {
                    let mut trial = u.clone();
                    trial[k] = value;
                    if let Ok(s) = ActivityState::new(problem, trial) {
                        if s.total() > f64::NEG_INFINITY {
                            state = Some(s);
                            u[k] = value;
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    let log_likelihood = state.as_ref().map_or(f64::NEG_INFINITY, |s| s.total());
    ActivityHypothesis { u_hat: u, log_likelihood, passes, converged }
}
