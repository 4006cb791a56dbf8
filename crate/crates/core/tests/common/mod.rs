//! Brute-force reference computations shared by the integration tests.
//!
//! Everything here deliberately avoids the library's Cholesky-based kernels:
//! inverses and determinants go through LU decompositions of dense matrices,
//! and joint posteriors are formed over all variables at once.
#![allow(dead_code)]

use std::f64::consts::PI;

use gfcf_core::activity::{log_likelihood_total, ActivityProblem};
use gfcf_core::gaussian::{GaussianStats, ScalarGaussian};
use gfcf_core::linalg::{c64, CMat, CVec, C64};
use gfcf_core::vbep::{SymbolBelief, VbepState};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn lu_inv(m: &CMat) -> CMat {
    m.clone().lu().try_inverse().expect("oracle: singular matrix")
}

pub fn lu_ln_det(m: &CMat) -> f64 {
    m.clone().lu().determinant().norm().ln()
}

pub fn cn<R: Rng>(rng: &mut R) -> C64 {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    c64(a, b) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_cmat<R: Rng>(rng: &mut R, r: usize, c: usize) -> CMat {
    CMat::from_fn(r, c, |_, _| cn(rng))
}

pub fn random_cvec<R: Rng>(rng: &mut R, d: usize) -> CVec {
    CVec::from_fn(d, |_, _| cn(rng))
}

/// Well-conditioned Hermitian positive definite matrix times `scale`.
pub fn random_hpd<R: Rng>(rng: &mut R, d: usize, scale: f64) -> CMat {
    let b = random_cmat(rng, d, d);
    let m = (&b * b.adjoint()).scale(1.0 / d as f64) + CMat::identity(d, d).scale(0.5);
    (m.clone() + m.adjoint()).scale(0.5 * scale)
}

pub fn rel_err_mat(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn rel_err_vec(a: &CVec, b: &CVec, scale: f64) -> f64 {
    (a - b).norm() / b.norm().max(scale)
}

/// Information-form posterior and evidence for `m1 = A x + n`,
/// `n ~ CN(0, C1)`, `x ~ CN(m2, C2)`.
pub fn dense_product(m1: &CVec, a: &CMat, c1: &CMat, m2: &CVec, c2: &CMat) -> (CVec, CMat, f64) {
    let c1i = lu_inv(c1);
    let c2i = lu_inv(c2);
    let c3 = lu_inv(&(a.adjoint() * &c1i * a + &c2i));
    let m3 = &c3 * (a.adjoint() * &c1i * m1 + &c2i * m2);
    let s = c1 + a * c2 * a.adjoint();
    (m3, c3, dense_log_pdf(m1, &(a * m2), &s))
}

pub fn dense_log_pdf(x: &CVec, mean: &CVec, cov: &CMat) -> f64 {
    let r = x - mean;
    let q = (r.adjoint() * lu_inv(cov) * &r)[(0, 0)].re;
    -(x.len() as f64) * PI.ln() - lu_ln_det(cov) - q
}

/// Product of two Gaussians via explicit precisions; a vacuous factor is
/// the identity.
pub fn dense_multiply(a: &GaussianStats, b: &GaussianStats) -> GaussianStats {
    if a.is_vacuous() {
        return b.clone();
    }
    if b.is_vacuous() {
        return a.clone();
    }
    let (pa, pb) = (lu_inv(&a.cov), lu_inv(&b.cov));
    let cov = lu_inv(&(&pa + &pb));
    let mean = &cov * (&pa * &a.mean + &pb * &b.mean);
    GaussianStats::new(mean, cov)
}

/// Posterior of jointly Gaussian blocks `x_j ~ CN(m_j, C_j)` observed as
/// `obs = sum_j x_j + n`, `n ~ CN(0, noise)`, in covariance (Kalman) form
/// over the stacked vector. Returns the marginal of every block.
pub fn dense_sum_posterior(priors: &[GaussianStats], obs: &CVec, noise: &CMat) -> Vec<GaussianStats> {
    let n = obs.len();
    let k = priors.len();
    let mut mean = CVec::zeros(n * k);
    let mut cov = CMat::zeros(n * k, n * k);
    for (j, p) in priors.iter().enumerate() {
        mean.rows_mut(j * n, n).copy_from(&p.mean);
        cov.view_mut((j * n, j * n), (n, n)).copy_from(&p.cov);
    }
    let mut s_map = CMat::zeros(n, n * k);
    for j in 0..k {
        s_map.view_mut((0, j * n), (n, n)).copy_from(&CMat::identity(n, n));
    }
    let innovation = &s_map * &cov * s_map.adjoint() + noise;
    let gain = &cov * s_map.adjoint() * lu_inv(&innovation);
    let post_mean = &mean + &gain * (obs - &s_map * &mean);
    let post_cov = &cov - &gain * &s_map * &cov;
    (0..k)
        .map(|j| {
            GaussianStats::new(
                post_mean.rows(j * n, n).into_owned(),
                post_cov.view((j * n, j * n), (n, n)).into_owned(),
            )
        })
        .collect()
}

/// [`dense_sum_posterior`] in information form; suited to priors with very
/// large covariances.
pub fn dense_sum_posterior_info(priors: &[GaussianStats], obs: &CVec, noise: &CMat) -> Vec<GaussianStats> {
    let n = obs.len();
    let k = priors.len();
    let noise_prec = lu_inv(noise);
    let mut j = CMat::zeros(n * k, n * k);
    let mut h = CVec::zeros(n * k);
    for (a, p) in priors.iter().enumerate() {
        let pa = lu_inv(&p.cov);
        h.rows_mut(a * n, n).copy_from(&(&pa * &p.mean + &noise_prec * obs));
        for b in 0..k {
            let mut blk = noise_prec.clone();
            if a == b {
                blk += &pa;
            }
            j.view_mut((a * n, b * n), (n, n)).copy_from(&blk);
        }
    }
    let cov = lu_inv(&j);
    let mean = &cov * h;
    (0..k)
        .map(|a| GaussianStats::new(mean.rows(a * n, n).into_owned(), cov.view((a * n, a * n), (n, n)).into_owned()))
        .collect()
}

pub fn gaussian_rel_err(a: &GaussianStats, b: &GaussianStats) -> f64 {
    let scale = b.cov.norm().sqrt();
    rel_err_vec(&a.mean, &b.mean, scale).max(rel_err_mat(&a.cov, &b.cov))
}

/// Largest residual of the data-factor moment constraint: the marginal of
/// `z_lk` under the dense joint posterior of one AP and time versus the
/// product `mu(f_z -> z) mu(delta -> z)`.
pub fn cons1_residual(state: &VbepState) -> f64 {
    let m = state.model;
    let msgs = &state.messages;
    let n = m.antennas();
    let mut worst = 0.0f64;
    for l in 0..m.num_aps() {
        for t in 0..m.data_len() {
            let priors: Vec<GaussianStats> = msgs.delta_z[l].iter().map(|dz| dz.block(t)).collect();
            if priors.iter().any(GaussianStats::is_vacuous) {
                continue;
            }
            let noise = CMat::identity(n, n).scale(m.sigma_v2);
            let joint = dense_sum_posterior_info(&priors, &m.y[l].column(t).into_owned(), &noise);
            for k in 0..m.num_users() {
                let product = dense_multiply(&msgs.fz_z[l][k].block(t), &priors[k]);
                worst = worst.max(gaussian_rel_err(&product, &joint[k]));
            }
        }
    }
    worst
}

/// Residual of the pilot-factor constraint: marginal of `h_lk` under the
/// dense pilot-group posterior versus `mu(f_H -> h) mu(delta -> h)`.
pub fn cons3_residual(state: &VbepState) -> f64 {
    let m = state.model;
    let msgs = &state.messages;
    let n = m.antennas();
    let mut worst = 0.0f64;
    for l in 0..m.num_aps() {
        for (g, members) in m.groups.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let priors: Vec<GaussianStats> = members
                .iter()
                .map(|&k| dense_multiply(&state.enhanced.channels[l][k], &msgs.delta_h[l][k]))
                .collect();
            let noise = CMat::identity(n, n).scale(m.despread_noise_var);
            let joint = dense_sum_posterior(&priors, &m.despread[l][g], &noise);
            for (i, &k) in members.iter().enumerate() {
                let product = dense_multiply(&msgs.fh_h[l][k], &msgs.delta_h[l][k]);
                worst = worst.max(gaussian_rel_err(&product, &joint[i]));
            }
        }
    }
    worst
}

/// Residual of the bilinear channel constraint for raw `mu(delta -> h)`
/// messages: `ln mu(delta -> h)(h) - E_{b_x}[ln mu(z -> delta)(vec(h x^T))]`
/// must not depend on `h`. The expectation is enumerated over the
/// constellation at random probe points around the channel belief.
pub fn cons4_residual<R: Rng>(state: &VbepState, raw: &[Vec<GaussianStats>], rng: &mut R) -> f64 {
    let m = state.model;
    let msgs = &state.messages;
    let n = m.antennas();
    let mut worst = 0.0f64;
    for l in 0..m.num_aps() {
        for k in 0..m.num_users() {
            let msg = &raw[l][k];
            if msg.is_vacuous() {
                continue;
            }
            let centre = &msgs.belief_h[l][k];
            let spread = centre.cov.trace().re.max(0.0).sqrt() / (n as f64).sqrt();
            let probes: Vec<CVec> = (0..6).map(|_| &centre.mean + random_cvec(rng, n) * c64(spread, 0.0)).collect();
            let exponent = |h: &CVec| -> f64 {
                let mut total = 0.0;
                for t in 0..m.data_len() {
                    let fz = msgs.fz_z[l][k].block(t);
                    let b = &msgs.belief_x[k][t];
                    for (s, p) in m.symbols.iter().zip(&b.probs) {
                        total += p * dense_log_pdf(&(h * *s), &fz.mean, &fz.cov);
                    }
                }
                total
            };
            let diffs: Vec<f64> = probes
                .iter()
                .map(|h| dense_log_pdf(h, &msg.mean, &msg.cov) - exponent(h))
                .collect();
            let spreads: Vec<f64> = probes.iter().map(|h| dense_log_pdf(h, &msg.mean, &msg.cov).abs()).collect();
            let scale = spreads.iter().copied().fold(1.0, f64::max);
            for d in &diffs[1..] {
                worst = worst.max((d - diffs[0]).abs() / scale);
            }
        }
    }
    worst
}

/// Residual of the bilinear data constraint for raw `mu(delta -> z)`
/// messages: moments of `h x_t` enumerated over the symbol belief versus
/// `mu(f_z -> z) mu(delta -> z)`. Pairs where the precision floor fired are
/// skipped and counted.
pub fn cons2_residual(
    state: &VbepState,
    raw: &[Vec<(gfcf_core::gaussian::BlockDiagGaussianStats, bool)>],
) -> (f64, usize) {
    let m = state.model;
    let msgs = &state.messages;
    let mut worst = 0.0f64;
    let mut skipped = 0;
    for l in 0..m.num_aps() {
        for k in 0..m.num_users() {
            let (msg, floored) = &raw[l][k];
            if *floored {
                skipped += 1;
                continue;
            }
            let bh = &msgs.belief_h[l][k];
            let r_h = &bh.cov + &bh.mean * bh.mean.adjoint();
            for t in 0..m.data_len() {
                let b: &SymbolBelief = &msgs.belief_x[k][t];
                let (ex, ex2) = enumerate_moments(b, &m.symbols);
                let mean = &bh.mean * ex;
                let cov = r_h.scale(ex2) - &mean * mean.adjoint();
                let product = dense_multiply(&msgs.fz_z[l][k].block(t), &msg.block(t));
                worst = worst.max(gaussian_rel_err(&product, &GaussianStats::new(mean, cov)));
            }
        }
    }
    (worst, skipped)
}

/// `(E[x], E[|x|^2])` of a symbol belief, by enumeration when discrete.
pub fn enumerate_moments(b: &SymbolBelief, symbols: &[C64]) -> (C64, f64) {
    if b.probs.is_empty() {
        return (b.mean, b.var + b.mean.norm_sqr());
    }
    let ex = symbols.iter().zip(&b.probs).map(|(s, p)| s * *p).sum();
    let ex2 = symbols.iter().zip(&b.probs).map(|(s, p)| s.norm_sqr() * p).sum();
    (ex, ex2)
}

/// Brute-force symbol posterior: weights `prod_i CN(s | m_i, tau_i)` over the
/// constellation with plain normalization (no log-domain tricks).
pub fn enumerate_symbol_posterior(messages: &[ScalarGaussian], symbols: &[C64]) -> Vec<f64> {
    let w: Vec<f64> = symbols
        .iter()
        .map(|s| {
            messages
                .iter()
                .map(|m| (-(s - m.mean).norm_sqr() / m.var).exp() / (PI * m.var))
                .product()
        })
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

/// All activity hypotheses over `k` users.
pub fn all_hypotheses(k: usize) -> Vec<Vec<bool>> {
    (0..1u32 << k).map(|m| (0..k).map(|i| m >> i & 1 == 1).collect()).collect()
}

/// Exhaustive maximizer of the activity objective.
pub fn exhaustive_ml(problem: &ActivityProblem) -> (Vec<bool>, f64) {
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    for u in all_hypotheses(problem.num_users()) {
        let v = log_likelihood_total(problem, &u).unwrap_or(f64::NEG_INFINITY);
        if v > best.1 {
            best = (u, v);
        }
    }
    best
}

/// Whether any single flip strictly increases the objective.
pub fn improving_flip(problem: &ActivityProblem, u: &[bool]) -> Option<usize> {
    let base = log_likelihood_total(problem, u).unwrap_or(f64::NEG_INFINITY);
    (0..u.len()).find(|&k| {
        let mut v = u.to_vec();
        v[k] = !v[k];
        log_likelihood_total(problem, &v).unwrap_or(f64::NEG_INFINITY) > base
    })
}

/// Worst residuals observed while driving a full VB-EP run line by line.
#[derive(Clone, Debug, Default)]
pub struct ConstraintReport {
    pub cons1: f64,
    pub cons2: f64,
    pub cons3: f64,
    pub cons4: f64,
    pub cons2_skipped: usize,
    pub normalization: f64,
    pub psd_violations: usize,
    pub pairs: usize,
}

impl ConstraintReport {
    pub fn merge(&mut self, o: &ConstraintReport) {
        self.cons1 = self.cons1.max(o.cons1);
        self.cons2 = self.cons2.max(o.cons2);
        self.cons3 = self.cons3.max(o.cons3);
        self.cons4 = self.cons4.max(o.cons4);
        self.cons2_skipped += o.cons2_skipped;
        self.normalization = self.normalization.max(o.normalization);
        self.psd_violations += o.psd_violations;
        self.pairs += o.pairs;
    }
}

fn psd_violations(state: &VbepState) -> usize {
    let msgs = &state.messages;
    let mut bad = 0;
    let mut check = |g: &GaussianStats| {
        if !g.is_vacuous() && g.validate().is_err() {
            bad += 1;
        }
    };
    for l in 0..state.model.num_aps() {
        for k in 0..state.model.num_users() {
            check(&msgs.fh_h[l][k]);
            check(&msgs.delta_h[l][k]);
            check(&msgs.belief_h[l][k]);
            for t in 0..state.model.data_len() {
                check(&msgs.fz_z[l][k].block(t));
                check(&msgs.delta_z[l][k].block(t));
            }
        }
    }
    bad
}

/// Runs exactly `sweeps` VB-EP sweeps on the detected-activity model of one
/// realization, checking every moment constraint right after its message
/// family is updated.
pub fn vbep_constraint_run(
    cfg: &gfcf_core::config::ScenarioConfig,
    params: &gfcf_core::config::AlgoParams,
    seed: u64,
    sweeps: usize,
) -> ConstraintReport {
    use gfcf_core::activity::iterative_ml;
    use gfcf_core::model::prune;
    use gfcf_core::scenario::generate_realization;
    use gfcf_core::vbep::build_enhanced_priors;
    use gfcf_core::vlep::run_vlep;
    use rand::SeedableRng;

    let r = generate_realization(cfg, seed).expect("realization");
    let u_hat = iterative_ml(&ActivityProblem::new(&r), &params.activity).u_hat;
    let model = prune(&u_hat, &r, &cfg.symbols());
    let pseudo = run_vlep(&model, &params.vlep);
    let enhanced = build_enhanced_priors(&pseudo, &model).expect("enhanced prior");
    let mut state = VbepState::new(&model, &enhanced, &pseudo, &params.vbep);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut rep = ConstraintReport { pairs: model.num_aps() * model.num_users(), ..Default::default() };
    for _ in 0..sweeps {
        state.update_fz();
        rep.cons1 = rep.cons1.max(cons1_residual(&state));
        state.update_fh().expect("f_H update");
        rep.cons3 = rep.cons3.max(cons3_residual(&state));
        state.update_belief_h().expect("channel belief");
        state.update_delta_x().expect("delta -> x");
        state.update_belief_x();
        for row in &state.messages.belief_x {
            for b in row {
                rep.normalization = rep.normalization.max((b.probs.iter().sum::<f64>() - 1.0).abs());
            }
        }
        let dh = state.compute_delta_h().expect("delta -> h");
        rep.cons4 = rep.cons4.max(cons4_residual(&state, &dh, &mut rng));
        state.apply_delta_h(dh);
        state.update_belief_h().expect("channel belief");
        let dz = state.compute_delta_z().expect("delta -> z");
        let (c2, skipped) = cons2_residual(&state, &dz);
        rep.cons2 = rep.cons2.max(c2);
        rep.cons2_skipped += skipped;
        state.apply_delta_z(dz);
        rep.psd_violations += psd_violations(&state);
    }
    rep
}

/// Worst relative errors of the Gaussian kernels against the dense oracles
/// over `count` random instances of dimension at most 16.
#[derive(Clone, Debug, Default)]
pub struct KernelReport {
    pub product: f64,
    pub evidence: f64,
    pub log_pdf: f64,
    pub projection: f64,
}

pub fn gaussian_kernel_suite(count: usize, seed: u64) -> KernelReport {
    use gfcf_core::gaussian::{gaussian_product, log_gaussian_pdf, project_blockdiag};
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut rep = KernelReport::default();
    for _ in 0..count {
        let dx = rng.random_range(1..=16);
        let dy = rng.random_range(1..=16);
        let scale = 10f64.powf(rng.random_range(-6.0..3.0));
        let a = random_cmat(&mut rng, dy, dx);
        let c1 = random_hpd(&mut rng, dy, scale);
        let c2 = random_hpd(&mut rng, dx, scale);
        let m1 = random_cvec(&mut rng, dy).scale(scale.sqrt());
        let m2 = random_cvec(&mut rng, dx).scale(scale.sqrt());
        let prior = GaussianStats::new(m2.clone(), c2.clone());
        let (post, ev) = gaussian_product(&m1, &a, &c1, &prior).expect("product");
        let (om, oc, oev) = dense_product(&m1, &a, &c1, &m2, &c2);
        rep.product = rep
            .product
            .max(rel_err_vec(&post.mean, &om, oc.norm().sqrt()))
            .max(rel_err_mat(&post.cov, &oc));
        rep.evidence = rep.evidence.max((ev - oev).abs() / oev.abs().max(1.0));

        let x = random_cvec(&mut rng, dy).scale(scale.sqrt());
        let lp = log_gaussian_pdf(&x, &m1, &c1).expect("log pdf");
        let olp = dense_log_pdf(&x, &m1, &c1);
        rep.log_pdf = rep.log_pdf.max((lp - olp).abs() / olp.abs().max(1.0));

        let block = rng.random_range(1..=4);
        let t = rng.random_range(1..=4);
        let d = block * t;
        let mean = random_cvec(&mut rng, d);
        let cov = random_hpd(&mut rng, d, scale);
        let p = project_blockdiag(&mean, &cov, block);
        let mut err = rel_err_vec(&p.mean, &mean, 1.0);
        for i in 0..t {
            let mut expected = CMat::zeros(block, block);
            for r in 0..block {
                for c in 0..block {
                    expected[(r, c)] = cov[(i * block + r, i * block + c)];
                }
            }
            err = err.max(rel_err_mat(&p.blocks[i], &expected));
        }
        rep.projection = rep.projection.max(err);
    }
    rep
}

/// Activity objective assembled from dense joint Gaussians: each pilot group
/// is one Gaussian over all of its active channels, and the data covariance
/// is built from the jointly computed channel posteriors.
pub fn dense_activity_objective(p: &ActivityProblem, u: &[bool]) -> f64 {
    let n = p.antennas;
    let eye = CMat::identity(n, n);
    let mut total = 0.0;
    for l in 0..p.num_aps() {
        let mut b = eye.scale(p.sigma_v2);
        for (g, members) in p.pilot_groups.iter().enumerate() {
            let active: Vec<usize> = members.iter().copied().filter(|&k| u[k]).collect();
            let yt = &p.despread[l][g];
            let mut c_y = eye.scale(p.despread_noise_var);
            for &k in &active {
                c_y += &p.xi[l][k];
            }
            total += dense_log_pdf(yt, &CVec::zeros(n), &c_y) + n as f64 * PI.ln();
            if active.is_empty() {
                continue;
            }
            let priors: Vec<GaussianStats> =
                active.iter().map(|&k| GaussianStats::zero_mean(p.xi[l][k].clone())).collect();
            let posts = dense_sum_posterior_info(&priors, yt, &eye.scale(p.despread_noise_var));
            for post in posts {
                b += (&post.cov + &post.mean * post.mean.adjoint()).scale(p.sigma_x2);
            }
        }
        let s = &p.data_gram[l];
        total += -(p.data_len as f64) * lu_ln_det(&b) - (lu_inv(&b) * s).trace().re;
    }
    total
}

/// Worst relative error of the single-user known-symbol M-step against the
/// joint Gaussian MMSE estimate from the stacked pilot and data
/// observations, over `count` random instances.
pub fn vlep_known_symbol_error(count: usize, seed: u64) -> f64 {
    use gfcf_core::vlep::m_step;
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let n = rng.random_range(1..=4);
        let t_len = rng.random_range(0..=6);
        let xi = random_hpd(&mut rng, n, 1.0);
        let cp = 10f64.powf(rng.random_range(-3.0..0.5));
        let cd = 10f64.powf(rng.random_range(-3.0..0.5));
        let x: Vec<C64> = (0..t_len).map(|_| cn(&mut rng)).collect();
        let ytilde = random_cvec(&mut rng, n);
        let y = random_cmat(&mut rng, n, t_len);
        let symbols: Vec<ScalarGaussian> = x.iter().map(|&s| ScalarGaussian::new(s, 0.0)).collect();
        let eye = CMat::identity(n, n);
        let got = m_step(
            &y,
            &ytilde,
            &xi,
            &eye.scale(cd),
            &GaussianStats::new(CVec::zeros(n), eye.scale(cp)),
            &symbols,
        )
        .expect("m-step");

        let d = n * (t_len + 1);
        let mut a = CMat::zeros(d, n);
        let mut noise = CMat::zeros(d, d);
        let mut obs = CVec::zeros(d);
        for i in 0..n {
            a[(i, i)] = c64(1.0, 0.0);
            noise[(i, i)] = c64(cp, 0.0);
            obs[i] = ytilde[i];
        }
        for (t, &s) in x.iter().enumerate() {
            for i in 0..n {
                let r = n * (t + 1) + i;
                a[(r, i)] = s;
                noise[(r, r)] = c64(cd, 0.0);
                obs[r] = y[(i, t)];
            }
        }
        let (om, oc, _) = dense_product(&obs, &a, &noise, &CVec::zeros(n), &xi);
        worst = worst
            .max(rel_err_vec(&got.mean, &om, oc.norm().sqrt()))
            .max(rel_err_mat(&got.cov, &oc));
    }
    worst
}

/// Runs VL-EP on the detected-activity model of one realization until the
/// stopping rule fires (at most `cap` iterations), then applies one more
/// iteration. Returns `(iterations to converge, extra movement)`, or `None`
/// when no user was detected.
pub fn vlep_fixed_point(
    cfg: &gfcf_core::config::ScenarioConfig,
    params: &gfcf_core::config::AlgoParams,
    seed: u64,
    cap: usize,
) -> Option<(usize, Option<f64>)> {
    use gfcf_core::activity::iterative_ml;
    use gfcf_core::model::prune;
    use gfcf_core::scenario::generate_realization;
    use gfcf_core::vlep::VlepState;

    let r = generate_realization(cfg, seed).expect("realization");
    let u_hat = iterative_ml(&ActivityProblem::new(&r), &params.activity).u_hat;
    let model = prune(&u_hat, &r, &cfg.symbols());
    if model.num_users() == 0 {
        return None;
    }
    let mut state = VlepState::new(&model, &params.vlep);
    while state.iterations < cap {
        if state.iterate().expect("vlep iteration") < params.vlep.tol {
            let extra = state.iterate().expect("vlep iteration");
            return Some((state.iterations - 1, Some(extra)));
        }
    }
    Some((cap, None))
}
