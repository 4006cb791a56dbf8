mod common;

use common::*;
use gfcf_core::activity::{iterative_ml, log_likelihood_total, ActivityProblem, ActivityState};
use gfcf_core::config::{ActivityParams, ScenarioConfig};
use gfcf_core::scenario::generate_realization;
use proptest::prelude::*;

fn problem(cfg: &ScenarioConfig, seed: u64) -> ActivityProblem {
    ActivityProblem::new(&generate_realization(cfg, seed).unwrap())
}

#[test]
fn objective_matches_dense_oracle() {
    let cfg = ScenarioConfig::small();
    for seed in 0..20 {
        let p = problem(&cfg, seed);
        for u in all_hypotheses(p.num_users()) {
            let fast = log_likelihood_total(&p, &u).unwrap();
            let dense = dense_activity_objective(&p, &u);
            assert!((fast - dense).abs() <= 1e-8 * dense.abs().max(1.0), "seed {seed} {u:?}: {fast} vs {dense}");
        }
    }
}

#[test]
fn coordinate_ascent_ends_at_local_maximum() {
    let cfg = ScenarioConfig::small();
    let mut matches = 0;
    for seed in 0..60 {
        let p = problem(&cfg, seed);
        let out = iterative_ml(&p, &ActivityParams::default());
        assert!(out.converged, "seed {seed}");
        assert_eq!(improving_flip(&p, &out.u_hat), None, "seed {seed}");
        let (best, best_val) = exhaustive_ml(&p);
        assert!(out.log_likelihood <= best_val + 1e-9 * best_val.abs());
        let recomputed = log_likelihood_total(&p, &out.u_hat).unwrap();
        assert!((recomputed - out.log_likelihood).abs() <= 1e-9 * recomputed.abs().max(1.0));
        matches += usize::from(best == out.u_hat);
    }
    // Local ascent finds the global maximizer on the large majority.
    assert!(matches >= 45, "{matches}/60");
}

#[test]
fn ascent_never_decreases_the_objective() {
    let cfg = ScenarioConfig::small();
    for seed in 0..20 {
        let p = problem(&cfg, seed);
        let start = log_likelihood_total(&p, &vec![false; p.num_users()]).unwrap();
        let out = iterative_ml(&p, &ActivityParams::default());
        assert!(out.log_likelihood >= start);
    }
}

#[test]
fn objective_is_equivariant_to_user_relabeling() {
    let cfg = ScenarioConfig::small();
    let p = problem(&cfg, 7);
    let k = p.num_users();
    // new label j carries old user perm[j]
    let perm: Vec<usize> = (0..k).rev().collect();
    let mut q = p.clone();
    for l in 0..p.num_aps() {
        q.xi[l] = perm.iter().map(|&o| p.xi[l][o].clone()).collect();
    }
    q.pilot_of = perm.iter().map(|&o| p.pilot_of[o]).collect();
    let inv: Vec<usize> = (0..k).map(|o| perm.iter().position(|&x| x == o).unwrap()).collect();
    q.pilot_groups = p.pilot_groups.iter().map(|m| m.iter().map(|&o| inv[o]).collect()).collect();
    for u in all_hypotheses(k) {
        let v: Vec<bool> = perm.iter().map(|&o| u[o]).collect();
        let a = log_likelihood_total(&p, &u).unwrap();
        let b = log_likelihood_total(&q, &v).unwrap();
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn incremental_updates_match_scratch(seed in 0u64..1000, flips in proptest::collection::vec(0usize..4, 1..12)) {
        let p = problem(&ScenarioConfig::small(), seed);
        let mut state = ActivityState::new(&p, vec![false; p.num_users()]).unwrap();
        for k in flips {
            let value = !state.u()[k];
            let prop = state.propose(k, value).unwrap();
            state.commit(prop);
            let scratch = log_likelihood_total(&p, state.u()).unwrap();
            prop_assert!((state.total() - scratch).abs() <= 1e-9 * scratch.abs().max(1.0));
        }
    }
}
