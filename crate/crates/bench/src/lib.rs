//! Fixtures shared by the benchmarks.

use gfcf_core::activity::{iterative_ml, ActivityProblem};
use gfcf_core::config::{AlgoParams, ScenarioConfig};
use gfcf_core::gaussian::GaussianStats;
use gfcf_core::linalg::{c64, CMat, CVec};
use gfcf_core::model::{prune, PrunedModel};
use gfcf_core::scenario::{generate_realization, rng_from_seed, Realization};
use gfcf_core::vbep::{build_enhanced_priors, EnhancedPriors};
use gfcf_core::vlep::{run_vlep, PseudoPrior};
use rand::Rng;

/// A well-conditioned random Hermitian positive definite matrix.
pub fn random_hpd(d: usize, seed: u64) -> CMat {
    let mut rng = rng_from_seed(seed);
    let a = CMat::from_fn(d, d, |_, _| c64(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    &a * a.adjoint() + CMat::identity(d, d)
}

pub fn random_vec(d: usize, seed: u64) -> CVec {
    let mut rng = rng_from_seed(seed);
    CVec::from_fn(d, |_, _| c64(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
}

/// Observation `(mean, map, cov)` and prior for a `d`-dimensional product.
pub fn product_fixture(d: usize) -> (CVec, CMat, CMat, GaussianStats) {
    let map = random_hpd(d, 3);
    (random_vec(d, 1), map, random_hpd(d, 2), GaussianStats::new(random_vec(d, 4), random_hpd(d, 5)))
}

/// Everything the stage benchmarks need for one realization.
pub struct StageFixture {
    pub realization: Realization,
    pub problem: ActivityProblem,
    pub model: PrunedModel,
    pub pseudo: PseudoPrior,
    pub enhanced: EnhancedPriors,
    pub params: AlgoParams,
}

pub fn stage_fixture(cfg: &ScenarioConfig, seed: u64) -> StageFixture {
    let params = AlgoParams::default();
    let realization = generate_realization(cfg, seed).expect("realization");
    let problem = ActivityProblem::new(&realization);
    let u_hat = iterative_ml(&problem, &params.activity).u_hat;
    let model = prune(&u_hat, &realization, &cfg.symbols());
    let pseudo = run_vlep(&model, &params.vlep);
    let enhanced = build_enhanced_priors(&pseudo, &model).expect("enhanced priors");
    StageFixture { realization, problem, model, pseudo, enhanced, params }
}
