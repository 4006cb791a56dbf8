//! Pseudo-prior-regularized bilinear VB-EP.
//!
//! Per AP `l` and user `k` the graph carries `z_lk = vec(h_lk x_k^T)` with a
//! block-diagonal (over time) Gaussian family. Message naming follows
//! `<factor>_<variable>` for factor-to-variable messages; the
//! variable-to-factor messages are never stored because each variable has
//! only two kinds of neighbours:
//!
//! * `mu(z -> f_z) = mu(delta -> z)`, `mu(z -> delta) = mu(f_z -> z)`;
//! * `mu(h -> f_H) = mu(delta -> h)`, `mu(h -> delta) = mu(f_H -> h)`;
//! * `mu(x_k -> delta_lk) = p_breve(x_k) prod_{l' != l} mu(delta_l'k -> x_k)`.
//!
//! The last product times `mu(delta_lk -> x_k)` is the same for every `l`, so
//! one discrete symbol belief per `(k, t)` serves all APs.

use std::fmt::Write as _;

use crate::config::{SymbolPrior, VbepParams};
use crate::error::Result;
use crate::gaussian::{
    damp_blocks, damp_stats, gaussian_ratio_floored, BlockDiagGaussianStats, GaussianStats, ScalarGaussian,
};
use crate::linalg::{c64, factor, hermitize, real_trace, scaled_eye, CMat, CVec, C64};
use crate::model::PrunedModel;
use crate::vlep::{PseudoPrior, CONVERGENCE_FLOOR};

/// Enhanced priors: pseudo prior times true prior.
#[derive(Clone, Debug)]
pub struct EnhancedPriors {
    /// `p_breve(h_lk)`, `[l][k]`.
    pub channels: Vec<Vec<GaussianStats>>,
    /// `p_check(x_kt)`, `[k][t]`; multiplied with the constellation prior
    /// where needed.
    pub symbols: Vec<Vec<ScalarGaussian>>,
}

/// Combines the pseudo prior with `CN(0, xi)`. A vacuous pseudo channel
/// leaves the true prior unchanged.
pub fn build_enhanced_priors(pseudo: &PseudoPrior, model: &PrunedModel) -> Result<EnhancedPriors> {
    let channels = model
        .xi
        .iter()
        .zip(&pseudo.channels)
        .map(|(xi_row, ps_row)| {
            xi_row
                .iter()
                .zip(ps_row)
                .map(|(xi, ps)| ps.multiply(&GaussianStats::zero_mean(xi.clone())))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnhancedPriors { channels, symbols: pseudo.symbols.clone() })
}

/// Posterior over one symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolBelief {
    /// Probabilities of each constellation point; empty under a Gaussian
    /// symbol prior.
    pub probs: Vec<f64>,
    pub mean: C64,
    pub var: f64,
}

impl SymbolBelief {
    pub fn second_moment(&self) -> f64 {
        self.var + self.mean.norm_sqr()
    }

    /// Index of the most probable point (nearest point to the mean when the
    /// belief is Gaussian).
    pub fn decision(&self, symbols: &[C64]) -> usize {
        if self.probs.is_empty() {
            return nearest(symbols, self.mean);
        }
        argmax(&self.probs)
    }

    /// Shannon entropy in nats (0 for a Gaussian belief).
    pub fn entropy(&self) -> f64 {
        self.probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate() {
        if p > v[best] {
            best = i;
        }
    }
    best
}

fn nearest(symbols: &[C64], x: C64) -> usize {
    let d: Vec<f64> = symbols.iter().map(|s| -(s - x).norm_sqr()).collect();
    argmax(&d)
}

/// Normalizes log-weights with the log-sum-exp shift.
fn normalize_log_weights(logw: &[f64]) -> Vec<f64> {
    let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|&v| (v - top).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

/// Symbol posterior from the Gaussian messages about `x_kt`, the pseudo
/// prior, and the symbol prior.
///
/// Under the discrete prior each point `s` has weight
/// `p_check(s) prod_i CN(s | m_i, tau_i)` (uniform constellation prior) and
/// moments are exact by enumeration. A zero-variance message is hard
/// evidence for the point nearest its mean.
pub fn symbol_belief(
    messages: &[ScalarGaussian],
    pseudo: &ScalarGaussian,
    symbols: &[C64],
    sigma_x2: f64,
    prior: SymbolPrior,
) -> SymbolBelief {
    let all = messages.iter().chain(std::iter::once(pseudo));
    match prior {
        SymbolPrior::Gaussian => {
            let mut post = ScalarGaussian::new(c64(0.0, 0.0), sigma_x2);
            for m in all {
                post = post.multiply(m);
            }
            SymbolBelief { probs: Vec::new(), mean: post.mean, var: post.var }
        }
        SymbolPrior::Discrete => {
            let mut logw = vec![0.0; symbols.len()];
            let mut hard: Option<usize> = None;
            for m in all {
                if m.is_vacuous() {
                    continue;
                }
                if m.var <= 0.0 {
                    hard.get_or_insert(nearest(symbols, m.mean));
                    continue;
                }
                for (w, s) in logw.iter_mut().zip(symbols) {
                    *w -= (s - m.mean).norm_sqr() / m.var;
                }
            }
            let probs = match hard {
                Some(i) => (0..symbols.len()).map(|j| if j == i { 1.0 } else { 0.0 }).collect(),
                None => normalize_log_weights(&logw),
            };
            discrete_moments(probs, symbols)
        }
    }
}

fn discrete_moments(probs: Vec<f64>, symbols: &[C64]) -> SymbolBelief {
    let mean: C64 = probs.iter().zip(symbols).map(|(&p, &s)| s * p).sum();
    let second: f64 = probs.iter().zip(symbols).map(|(&p, s)| p * s.norm_sqr()).sum();
    let var = (second - mean.norm_sqr()).max(0.0);
    SymbolBelief { probs, mean, var }
}

/// `mu(f_z -> z_lk)`: the data likelihood with every other user's
/// `mu(delta -> z)` subtracted, per time block.
pub fn update_mu_fz_z(y: &CMat, delta_z: &[BlockDiagGaussianStats], k: usize, sigma_v2: f64) -> BlockDiagGaussianStats {
    let (n, t_len) = (y.nrows(), y.ncols());
    let blocks = (0..t_len)
        .map(|t| {
            let mut mean = y.column(t).into_owned();
            let mut cov = scaled_eye(n, sigma_v2);
            for (j, dz) in delta_z.iter().enumerate() {
                if j == k {
                    continue;
                }
                if dz.is_block_vacuous(t) {
                    return GaussianStats::vacuous(n);
                }
                mean -= dz.block_mean(t);
                cov += &dz.blocks[t];
            }
            GaussianStats::new(mean, hermitize(&cov))
        })
        .collect();
    BlockDiagGaussianStats::from_blocks(blocks)
}

/// `mu(f_H -> h_lk)` for the members of one pilot group at one AP.
///
/// `delta_h[i]` and `enhanced[i]` belong to group member `i`; co-members
/// enter through `h~ = mu(delta -> h) p_breve(h)`.
pub fn update_mu_fh_h(
    ytilde: &CVec,
    delta_h: &[GaussianStats],
    enhanced: &[GaussianStats],
    member: usize,
    despread_noise_var: f64,
) -> Result<GaussianStats> {
    let n = ytilde.len();
    let mut mean = ytilde.clone();
    let mut cov = scaled_eye(n, despread_noise_var);
    for j in 0..delta_h.len() {
        if j == member {
            continue;
        }
        let tilde = delta_h[j].multiply(&enhanced[j])?;
        mean -= &tilde.mean;
        cov += &tilde.cov;
    }
    GaussianStats::new(mean, hermitize(&cov)).multiply(&enhanced[member])
}

/// `mu(delta_lk -> x_kt)` for every `t` from the channel belief and
/// `mu(z -> delta) = mu(f_z -> z)`.
pub fn update_mu_delta_x(belief_h: &GaussianStats, fz_z: &BlockDiagGaussianStats) -> Result<Vec<ScalarGaussian>> {
    let r = belief_h.second_moment();
    (0..fz_z.num_blocks())
        .map(|t| {
            if fz_z.is_block_vacuous(t) {
                return Ok(ScalarGaussian::vacuous());
            }
            let f = factor(&fz_z.blocks[t])?;
            let prec = f.trace_solve(&r);
            if !(prec > 0.0) {
                return Ok(ScalarGaussian::vacuous());
            }
            let tau = 1.0 / prec;
            let w = f.solve_vec(&fz_z.block_mean(t));
            Ok(ScalarGaussian::new(belief_h.mean.dotc(&w) * tau, tau))
        })
        .collect()
}

/// `mu(delta_lk -> h_lk)` from the symbol beliefs `(m_t, r_t)` and
/// `mu(f_z -> z_lk)`; vacuous without data.
/// `n` is the antenna count (needed when there are no time blocks).
pub fn update_mu_delta_h(beliefs: &[SymbolBelief], fz_z: &BlockDiagGaussianStats, n: usize) -> Result<GaussianStats> {
    let mut precision = CMat::zeros(n, n);
    let mut info = CVec::zeros(n);
    let mut any = false;
    for (t, b) in beliefs.iter().enumerate() {
        if fz_z.is_block_vacuous(t) {
            continue;
        }
        let f = factor(&fz_z.blocks[t])?;
        precision += f.inverse().scale(b.second_moment());
        info += f.solve_vec(&fz_z.block_mean(t)) * b.mean.conj();
        any = true;
    }
    if !any || precision.iter().all(|v| *v == c64(0.0, 0.0)) {
        return Ok(GaussianStats::vacuous(n));
    }
    let f = factor(&hermitize(&precision))?;
    Ok(GaussianStats::new(f.solve_vec(&info), f.inverse()))
}

/// Moments of `z = h x^T` for independent `h ~ belief_h` and symbols with
/// per-time moments, restricted to the block-diagonal family.
pub fn product_moments(belief_h: &GaussianStats, beliefs: &[SymbolBelief]) -> BlockDiagGaussianStats {
    let mm = &belief_h.mean * belief_h.mean.adjoint();
    let blocks = beliefs
        .iter()
        .map(|b| {
            let cov = belief_h.cov.scale(b.second_moment()) + mm.scale(b.var);
            GaussianStats::new(&belief_h.mean * b.mean, hermitize(&cov))
        })
        .collect();
    BlockDiagGaussianStats::from_blocks(blocks)
}

/// `mu(delta_lk -> z_lk)`: projected product moments divided by
/// `mu(f_z -> z_lk)`. The flag reports whether the precision floor fired in
/// any block.
pub fn update_mu_delta_z(
    belief_h: &GaussianStats,
    beliefs: &[SymbolBelief],
    fz_z: &BlockDiagGaussianStats,
) -> Result<(BlockDiagGaussianStats, bool)> {
    let projected = product_moments(belief_h, beliefs);
    let mut floored = false;
    let blocks = (0..projected.num_blocks())
        .map(|t| {
            let (msg, f) = gaussian_ratio_floored(&projected.block(t), &fz_z.block(t))?;
            floored |= f;
            Ok(msg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((BlockDiagGaussianStats::from_blocks(blocks), floored))
}

/// One per-sweep trace record.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepTrace {
    pub sweep: usize,
    /// Largest relative channel-belief movement.
    pub movement: f64,
    /// Mean symbol-belief entropy per user (nats).
    pub entropy: Vec<f64>,
}

impl SweepTrace {
    pub fn line(&self) -> String {
        let mut s = format!("sweep={} movement={:.6e} entropy=[", self.sweep, self.movement);
        for (i, e) in self.entropy.iter().enumerate() {
            let sep = if i == 0 { "" } else { "," };
            let _ = write!(s, "{sep}{e:.4}");
        }
        s.push(']');
        s
    }
}

/// All messages and beliefs of the VB-EP graph.
#[derive(Clone, Debug)]
pub struct MessageState {
    /// `mu(f_z -> z_lk)`, `[l][k]`.
    pub fz_z: Vec<Vec<BlockDiagGaussianStats>>,
    /// `mu(delta_lk -> z_lk)`.
    pub delta_z: Vec<Vec<BlockDiagGaussianStats>>,
    /// `mu(f_H -> h_lk)`.
    pub fh_h: Vec<Vec<GaussianStats>>,
    /// `mu(delta_lk -> h_lk)`.
    pub delta_h: Vec<Vec<GaussianStats>>,
    /// `mu(delta_lk -> x_kt)`, `[l][k][t]`.
    pub delta_x: Vec<Vec<Vec<ScalarGaussian>>>,
    /// `b_delta_h,lk`.
    pub belief_h: Vec<Vec<GaussianStats>>,
    /// Symbol beliefs `[k][t]`, shared by all APs.
    pub belief_x: Vec<Vec<SymbolBelief>>,
    /// Whether the last `delta -> z` update of `(l, k)` hit the precision floor.
    pub floored: Vec<Vec<bool>>,
}

/// Iterative VB-EP solver; each `update_*` method performs one line of the
/// sweep for all `(l, k)` from the state left by the previous line.
#[derive(Clone, Debug)]
pub struct VbepState<'a> {
    pub model: &'a PrunedModel,
    pub enhanced: &'a EnhancedPriors,
    pub params: VbepParams,
    pub messages: MessageState,
    pub sweeps: usize,
}

fn pairs(model: &PrunedModel) -> impl Iterator<Item = (usize, usize)> {
    let nk = model.num_users();
    (0..model.num_aps()).flat_map(move |l| (0..nk).map(move |k| (l, k)))
}

fn grid<T, F: FnMut(usize, usize) -> Result<T>>(model: &PrunedModel, mut f: F) -> Result<Vec<Vec<T>>> {
    (0..model.num_aps())
        .map(|l| (0..model.num_users()).map(|k| f(l, k)).collect())
        .collect()
}

impl<'a> VbepState<'a> {
    /// `mu(delta -> z)` starts from the pseudo prior moments of `h x^T`;
    /// every other factor-to-variable message starts vacuous.
    pub fn new(model: &'a PrunedModel, enhanced: &'a EnhancedPriors, pseudo: &PseudoPrior, params: &VbepParams) -> Self {
        let (nl, nk, n, t_len) = (model.num_aps(), model.num_users(), model.antennas(), model.data_len());
        let pseudo_beliefs: Vec<Vec<SymbolBelief>> = pseudo
            .symbols
            .iter()
            .map(|row| row.iter().map(|s| SymbolBelief { probs: Vec::new(), mean: s.mean, var: s.var }).collect())
            .collect();
        let delta_z = (0..nl)
            .map(|l| (0..nk).map(|k| product_moments(&pseudo.channels[l][k], &pseudo_beliefs[k])).collect())
            .collect();
        let belief_x = (0..nk)
            .map(|k| {
                (0..t_len)
                    .map(|t| symbol_belief(&[], &enhanced.symbols[k][t], &model.symbols, model.sigma_x2, params.symbol_prior))
                    .collect()
            })
            .collect();
        let messages = MessageState {
            fz_z: vec![vec![BlockDiagGaussianStats::vacuous(t_len, n); nk]; nl],
            delta_z,
            fh_h: vec![vec![GaussianStats::vacuous(n); nk]; nl],
            delta_h: vec![vec![GaussianStats::vacuous(n); nk]; nl],
            delta_x: vec![vec![vec![ScalarGaussian::vacuous(); t_len]; nk]; nl],
            belief_h: enhanced.channels.clone(),
            belief_x,
            floored: vec![vec![false; nk]; nl],
        };
        Self { model, enhanced, params: params.clone(), messages, sweeps: 0 }
    }

    pub fn update_fz(&mut self) {
        let m = self.model;
        let msgs = &self.messages;
        let fz = (0..m.num_aps())
            .map(|l| (0..m.num_users()).map(|k| update_mu_fz_z(&m.y[l], &msgs.delta_z[l], k, m.sigma_v2)).collect())
            .collect();
        self.messages.fz_z = fz;
    }

    pub fn update_fh(&mut self) -> Result<()> {
        let m = self.model;
        let msgs = &self.messages;
        let fh = grid(m, |l, k| {
            let g = m.group_of[k];
            let members = &m.groups[g];
            let member = members.iter().position(|&j| j == k).expect("user belongs to its group");
            let dh: Vec<GaussianStats> = members.iter().map(|&j| msgs.delta_h[l][j].clone()).collect();
            let en: Vec<GaussianStats> = members.iter().map(|&j| self.enhanced.channels[l][j].clone()).collect();
            update_mu_fh_h(&m.despread[l][g], &dh, &en, member, m.despread_noise_var)
        })?;
        self.messages.fh_h = fh;
        Ok(())
    }

    /// `b_delta_h = mu(f_H -> h) mu(delta -> h)`.
    pub fn update_belief_h(&mut self) -> Result<()> {
        let msgs = &self.messages;
        let b = grid(self.model, |l, k| msgs.fh_h[l][k].multiply(&msgs.delta_h[l][k]))?;
        self.messages.belief_h = b;
        Ok(())
    }

    pub fn update_delta_x(&mut self) -> Result<()> {
        let msgs = &self.messages;
        let dx = grid(self.model, |l, k| update_mu_delta_x(&msgs.belief_h[l][k], &msgs.fz_z[l][k]))?;
        self.messages.delta_x = dx;
        Ok(())
    }

    /// Symbol beliefs from all APs' messages, the pseudo prior and the
    /// symbol prior.
    pub fn update_belief_x(&mut self) {
        let m = self.model;
        let msgs = &self.messages;
        let bx = (0..m.num_users())
            .map(|k| {
                (0..m.data_len())
                    .map(|t| {
                        let incoming: Vec<ScalarGaussian> = (0..m.num_aps()).map(|l| msgs.delta_x[l][k][t]).collect();
                        symbol_belief(&incoming, &self.enhanced.symbols[k][t], &m.symbols, m.sigma_x2, self.params.symbol_prior)
                    })
                    .collect()
            })
            .collect();
        self.messages.belief_x = bx;
    }

    /// Undamped `mu(delta -> h)` for all `(l, k)`.
    pub fn compute_delta_h(&self) -> Result<Vec<Vec<GaussianStats>>> {
        let msgs = &self.messages;
        grid(self.model, |l, k| update_mu_delta_h(&msgs.belief_x[k], &msgs.fz_z[l][k], self.model.antennas()))
    }

    pub fn apply_delta_h(&mut self, raw: Vec<Vec<GaussianStats>>) {
        let beta = self.params.damping;
        for (l, k) in pairs(self.model) {
            self.messages.delta_h[l][k] = damp_stats(&raw[l][k], &self.messages.delta_h[l][k], beta);
        }
    }

    /// Undamped `mu(delta -> z)` for all `(l, k)` with floor flags.
    pub fn compute_delta_z(&self) -> Result<Vec<Vec<(BlockDiagGaussianStats, bool)>>> {
        let msgs = &self.messages;
        grid(self.model, |l, k| update_mu_delta_z(&msgs.belief_h[l][k], &msgs.belief_x[k], &msgs.fz_z[l][k]))
    }

    pub fn apply_delta_z(&mut self, raw: Vec<Vec<(BlockDiagGaussianStats, bool)>>) {
        let beta = self.params.damping;
        for (l, row) in raw.into_iter().enumerate() {
            for (k, (msg, floored)) in row.into_iter().enumerate() {
                self.messages.delta_z[l][k] = damp_blocks(&msg, &self.messages.delta_z[l][k], beta);
                self.messages.floored[l][k] = floored;
            }
        }
    }

    /// One full sweep; returns the largest relative movement of the channel
    /// belief means and of the symbol belief means (the latter in units of
    /// the symbol standard deviation).
    pub fn sweep(&mut self) -> Result<f64> {
        let before: Vec<Vec<CVec>> = self.messages.belief_h.iter().map(|r| r.iter().map(|b| b.mean.clone()).collect()).collect();
        let before_x: Vec<Vec<C64>> = self.messages.belief_x.iter().map(|r| r.iter().map(|b| b.mean).collect()).collect();
        self.update_fz();
        self.update_fh()?;
        self.update_belief_h()?;
        self.update_delta_x()?;
        self.update_belief_x();
        let dh = self.compute_delta_h()?;
        self.apply_delta_h(dh);
        self.update_belief_h()?;
        let dz = self.compute_delta_z()?;
        self.apply_delta_z(dz);
        self.sweeps += 1;
        let mut movement = 0.0f64;
        for (l, k) in pairs(self.model) {
            let new = &self.messages.belief_h[l][k].mean;
            let scale = real_trace(&self.model.xi[l][k]).max(0.0).sqrt();
            let step = (new - &before[l][k]).norm();
            let rel = step / (new.norm() + CONVERGENCE_FLOOR * scale);
            movement = movement.max(if rel.is_nan() { f64::INFINITY } else { rel });
        }
        let sigma_x = self.model.sigma_x2.sqrt();
        for (row, old) in self.messages.belief_x.iter().zip(&before_x) {
            for (b, m) in row.iter().zip(old) {
                let rel = (b.mean - m).norm() / sigma_x;
                movement = movement.max(if rel.is_nan() { f64::INFINITY } else { rel });
            }
        }
        Ok(movement)
    }

    /// Decision statistic `[mu(x -> f_x) prod_l mu(x -> delta_lk)]^{1/L}` in
    /// log domain; it reduces to the shared symbol belief.
    pub fn decision_log_weights(&self, k: usize, t: usize) -> Vec<f64> {
        let m = self.model;
        let symbols = &m.symbols;
        let nl = m.num_aps();
        let log_msg = |msg: &ScalarGaussian, s: &C64| -> f64 {
            if msg.is_vacuous() {
                0.0
            } else {
                -(s - msg.mean).norm_sqr() / msg.var
            }
        };
        symbols
            .iter()
            .map(|s| {
                let pseudo = log_msg(&self.enhanced.symbols[k][t], s);
                let to_fx: f64 = (0..nl).map(|l| log_msg(&self.messages.delta_x[l][k][t], s)).sum();
                let to_delta: f64 = (0..nl)
                    .map(|l| {
                        pseudo + (0..nl).filter(|&j| j != l).map(|j| log_msg(&self.messages.delta_x[j][k][t], s)).sum::<f64>()
                    })
                    .sum();
                (to_fx + to_delta) / nl.max(1) as f64
            })
            .collect()
    }

    pub fn trace(&self, movement: f64) -> SweepTrace {
        let entropy = self
            .messages
            .belief_x
            .iter()
            .map(|row| if row.is_empty() { 0.0 } else { row.iter().map(SymbolBelief::entropy).sum::<f64>() / row.len() as f64 })
            .collect();
        SweepTrace { sweep: self.sweeps, movement, entropy }
    }
}

/// Result of [`run_vbep`].
#[derive(Clone, Debug)]
pub struct VbepOutput {
    /// Channel beliefs `b_delta_h`, `[l][k]`.
    pub channels: Vec<Vec<GaussianStats>>,
    /// Decided symbol values `[k][t]`.
    pub decisions: Vec<Vec<C64>>,
    pub symbol_beliefs: Vec<Vec<SymbolBelief>>,
    pub sweeps: usize,
    pub converged: bool,
    /// Set when a numerical failure ended the run early.
    pub failed: bool,
    pub trace: Vec<SweepTrace>,
}

/// Runs sweeps until the channel beliefs move less than `params.tol`
/// (relative) or `params.max_sweeps` is reached. On a numerical failure the
/// last completed sweep is returned with `failed` set.
pub fn run_vbep(model: &PrunedModel, enhanced: &EnhancedPriors, pseudo: &PseudoPrior, params: &VbepParams) -> VbepOutput {
    let mut state = VbepState::new(model, enhanced, pseudo, params);
    let mut converged = false;
    let mut failed = false;
    let mut trace = Vec::new();
    if model.num_users() > 0 {
        // Pilot-only posteriors so a failure in the first sweep still yields
        // estimates.
        if state.update_fh().and_then(|_| state.update_belief_h()).is_err() {
            failed = true;
        }
    }
    while !failed && model.num_users() > 0 && state.sweeps < params.max_sweeps {
        let snapshot = state.messages.clone();
        match state.sweep() {
            Ok(movement) => {
                if params.trace {
                    let rec = state.trace(movement);
                    log::debug!("{}", rec.line());
                    trace.push(rec);
                }
                if movement < params.tol {
                    converged = true;
                    break;
                }
            }
            Err(e) => {
                log::warn!("VB-EP stopped after {} sweeps: {e}", state.sweeps);
                state.messages = snapshot;
                failed = true;
            }
        }
    }
    let msgs = state.messages;
    let decisions = msgs
        .belief_x
        .iter()
        .map(|row| row.iter().map(|b| model.symbols[b.decision(&model.symbols)]).collect())
        .collect();
    VbepOutput {
        channels: msgs.belief_h,
        decisions,
        symbol_beliefs: msgs.belief_x,
        sweeps: state.sweeps,
        converged,
        failed,
        trace,
    }
}
