//! End-to-end receiver: activity detection, pruning, pseudo prior, VB-EP,
//! plus the pilot-only comparison baseline.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::activity::{iterative_ml, pilot_posterior, ActivityProblem};
use crate::config::AlgoParams;
use crate::error::{Error, Result};
use crate::linalg::{c64, CVec, C64};
use crate::metrics::{compute_cnmse, compute_der, compute_ser, ChannelEstimates, SymbolDecisions};
use crate::model::{prune, PrunedModel};
use crate::scenario::{despread_all, Realization};
use crate::vbep::{build_enhanced_priors, run_vbep};
use crate::vlep::{run_vlep, PseudoPrior};

/// Receivers the harness can evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Detected activity, VL-EP pseudo prior, VB-EP.
    PpVbEp,
    /// PP-VB-EP with the true activity.
    PpVbEpGenie,
    /// Detected activity and VL-EP estimates only.
    VlepOnly,
    /// Detected activity, pilot-only MMSE channels and MRC detection.
    PilotMmse,
    /// Pilot-only MMSE with the true activity.
    PilotMmseGenie,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::PpVbEp, Algorithm::PpVbEpGenie, Algorithm::VlepOnly, Algorithm::PilotMmse, Algorithm::PilotMmseGenie];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::PpVbEp => "pp-vb-ep",
            Algorithm::PpVbEpGenie => "pp-vb-ep-genie",
            Algorithm::VlepOnly => "vlep-only",
            Algorithm::PilotMmse => "pilot-mmse",
            Algorithm::PilotMmseGenie => "pilot-mmse-genie",
        }
    }

    fn genie(self) -> bool {
        matches!(self, Algorithm::PpVbEpGenie | Algorithm::PilotMmseGenie)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

/// Outcome flag of one trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialStatus {
    Ok,
    /// No truly active user: CNMSE and SER are reported as 0.
    NoActiveUsers,
    /// VB-EP failed numerically; outputs come from its last complete sweep
    /// or, failing that, from VL-EP.
    DegradedVbep,
    /// The pseudo prior could not be formed; outputs are pilot-only.
    DegradedVlep,
}

impl TrialStatus {
    pub fn name(self) -> &'static str {
        match self {
            TrialStatus::Ok => "ok",
            TrialStatus::NoActiveUsers => "no-active-users",
            TrialStatus::DegradedVbep => "degraded-vbep",
            TrialStatus::DegradedVlep => "degraded-vlep",
        }
    }
}

/// Metrics of one algorithm on one realization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub algo: Algorithm,
    pub cnmse: f64,
    pub der: f64,
    pub ser: f64,
    /// Seconds; excluded from determinism comparisons.
    pub wall_time: f64,
    pub status: TrialStatus,
}

/// Estimates produced by a receiver, indexed by global user.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub u_hat: Vec<bool>,
    pub channels: ChannelEstimates,
    pub decisions: SymbolDecisions,
    pub status: TrialStatus,
    pub metrics: TrialMetrics,
}

fn nearest(symbols: &[C64], x: C64) -> C64 {
    let mut best = symbols[0];
    for &s in symbols {
        if (s - x).norm_sqr() < (best - x).norm_sqr() {
            best = s;
        }
    }
    best
}

/// Pilot-only MMSE channel estimates under activity `u`, followed by
/// maximum-ratio combining across all APs and nearest-point decisions.
pub fn pilot_mmse_baseline(r: &Realization, u: &[bool], symbols: &[C64]) -> Result<(ChannelEstimates, SymbolDecisions)> {
    let despread = despread_all(r);
    let (nl, nk) = (r.num_aps(), r.num_users());
    let mut channels: ChannelEstimates = vec![vec![None; nk]; nl];
    for l in 0..nl {
        for (g, members) in r.pilot_groups.iter().enumerate() {
            let active: Vec<usize> = members.iter().copied().filter(|&k| u[k]).collect();
            let post = pilot_posterior(&despread[l][g], &r.xi[l], &active, r.despread_noise_var())?;
            for (k, p) in post.members {
                channels[l][k] = Some(p.mean);
            }
        }
    }
    let decisions = (0..nk)
        .map(|k| {
            if !u[k] {
                return None;
            }
            let energy: f64 = (0..nl).map(|l| channels[l][k].as_ref().map_or(0.0, |h| h.norm_squared())).sum();
            Some(
                (0..r.data_len())
                    .map(|t| {
                        let mut acc = c64(0.0, 0.0);
                        for l in 0..nl {
                            if let Some(h) = &channels[l][k] {
                                acc += h.dotc(&r.y[l].column(t).into_owned());
                            }
                        }
                        let x = if energy > 0.0 { acc / energy } else { c64(0.0, 0.0) };
                        nearest(symbols, x)
                    })
                    .collect(),
            )
        })
        .collect();
    Ok((channels, decisions))
}

fn scatter_channels(model: &PrunedModel, nk: usize, local: impl Fn(usize, usize) -> CVec) -> ChannelEstimates {
    (0..model.num_aps())
        .map(|l| {
            let mut row = vec![None; nk];
            for (k, &g) in model.active.iter().enumerate() {
                row[g] = Some(local(l, k));
            }
            row
        })
        .collect()
}

fn scatter_decisions(model: &PrunedModel, nk: usize, local: impl Fn(usize) -> Vec<C64>) -> SymbolDecisions {
    let mut out = vec![None; nk];
    for (k, &g) in model.active.iter().enumerate() {
        out[g] = Some(local(k));
    }
    out
}

fn vlep_outputs(model: &PrunedModel, pseudo: &PseudoPrior, nk: usize) -> (ChannelEstimates, SymbolDecisions) {
    (
        scatter_channels(model, nk, |l, k| pseudo.channels[l][k].mean.clone()),
        scatter_decisions(model, nk, |k| pseudo.symbols[k].iter().map(|s| nearest(&model.symbols, s.mean)).collect()),
    )
}

/// Runs one receiver on one realization and scores it against the truth.
pub fn run_pipeline(r: &Realization, symbols: &[C64], params: &AlgoParams, algo: Algorithm) -> PipelineOutput {
    let start = Instant::now();
    let nk = r.num_users();
    let u_hat = if algo.genie() {
        r.u_true.clone()
    } else {
        iterative_ml(&ActivityProblem::new(r), &params.activity).u_hat
    };
    let mut status = TrialStatus::Ok;
    let empty = || (vec![vec![None; nk]; r.num_aps()], vec![None; nk]);
    let (channels, decisions) = match algo {
        Algorithm::PilotMmse | Algorithm::PilotMmseGenie => pilot_mmse_baseline(r, &u_hat, symbols).unwrap_or_else(|e| {
            log::warn!("pilot MMSE failed: {e}");
            status = TrialStatus::DegradedVlep;
            empty()
        }),
        Algorithm::VlepOnly | Algorithm::PpVbEp | Algorithm::PpVbEpGenie => {
            let model = prune(&u_hat, r, symbols);
            let pseudo = run_vlep(&model, &params.vlep);
            if algo == Algorithm::VlepOnly {
                vlep_outputs(&model, &pseudo, nk)
            } else {
                match build_enhanced_priors(&pseudo, &model) {
                    Ok(enhanced) => {
                        let out = run_vbep(&model, &enhanced, &pseudo, &params.vbep);
                        if out.failed {
                            status = TrialStatus::DegradedVbep;
                        }
                        if out.failed && out.sweeps == 0 {
                            vlep_outputs(&model, &pseudo, nk)
                        } else {
                            (
                                scatter_channels(&model, nk, |l, k| out.channels[l][k].mean.clone()),
                                scatter_decisions(&model, nk, |k| out.decisions[k].clone()),
                            )
                        }
                    }
                    Err(e) => {
                        log::warn!("enhanced prior failed: {e}");
                        status = TrialStatus::DegradedVbep;
                        vlep_outputs(&model, &pseudo, nk)
                    }
                }
            }
        }
    };
    let cnmse = compute_cnmse(&channels, r);
    let ser = compute_ser(&decisions, r);
    if status == TrialStatus::Ok && (cnmse.is_none() || ser.is_none()) {
        status = TrialStatus::NoActiveUsers;
    }
    let metrics = TrialMetrics {
        algo,
        cnmse: cnmse.unwrap_or(0.0),
        der: compute_der(&u_hat, &r.u_true),
        ser: ser.unwrap_or(0.0),
        wall_time: start.elapsed().as_secs_f64(),
        status,
    };
    PipelineOutput { u_hat, channels, decisions, status, metrics }
}
