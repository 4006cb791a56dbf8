//! Monte-Carlo campaigns over position setups and trials, with per-setup
//! aggregation, empirical CDFs and result files.
//!
//! Every setup draws its deployment from `derive_seed(seed, [setup])`, and
//! every trial its frame from `derive_seed(seed, [setup, trial + 1])`, so a
//! trial's metrics do not depend on how many setups or trials are run, on
//! the thread count, or on which other algorithms are evaluated.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AlgoParams, ScenarioConfig};
use crate::error::{Error, Result};
use crate::metrics::Ecdf;
use crate::pipeline::{run_pipeline, Algorithm, TrialMetrics, TrialStatus};
use crate::scenario::{derive_seed, draw_realization, rng_from_seed, Deployment, Realization};

/// Quantile levels reported in the summary.
pub const SUMMARY_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    /// Master seed.
    pub seed: u64,
    /// Number of user-position setups.
    pub setups: usize,
    /// Realizations per setup.
    pub trials: usize,
    /// Worker threads (0 = all available cores).
    pub threads: usize,
    pub algorithms: Vec<Algorithm>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            setups: 50,
            trials: 50,
            threads: 0,
            algorithms: vec![Algorithm::PpVbEp, Algorithm::PilotMmse, Algorithm::PilotMmseGenie],
        }
    }
}

/// Complete run description, as read from a config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub algorithms: AlgoParams,
    pub campaign: CampaignConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        let c = &self.campaign;
        if c.setups == 0 || c.trials == 0 {
            return Err(Error::Config("setups and trials must be positive".into()));
        }
        if c.algorithms.is_empty() {
            return Err(Error::Config("no algorithm selected".into()));
        }
        Ok(())
    }
}

pub fn deployment_seed(seed: u64, setup: usize) -> u64 {
    derive_seed(seed, &[setup as u64])
}

pub fn trial_seed(seed: u64, setup: usize, trial: usize) -> u64 {
    derive_seed(seed, &[setup as u64, trial as u64 + 1])
}

pub fn draw_deployment(cfg: &ScenarioConfig, seed: u64, setup: usize) -> Result<Deployment> {
    Deployment::draw(cfg, &mut rng_from_seed(deployment_seed(seed, setup)))
}

/// The realization a campaign evaluates at `(setup, trial)`.
pub fn campaign_realization(cfg: &RunConfig, setup: usize, trial: usize) -> Result<Realization> {
    let seed = cfg.campaign.seed;
    let deployment = draw_deployment(&cfg.scenario, seed, setup)?;
    draw_realization(&cfg.scenario, &deployment, trial_seed(seed, setup, trial))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub setup: usize,
    pub trial: usize,
    pub metrics: TrialMetrics,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cnmse,
    Der,
    Ser,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Cnmse, Metric::Der, Metric::Ser];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Cnmse => "cnmse",
            Metric::Der => "der",
            Metric::Ser => "ser",
        }
    }

    /// The metric's value, or `None` where it is undefined (CNMSE and SER
    /// without truly active users).
    pub fn of(self, m: &TrialMetrics) -> Option<f64> {
        let defined = m.status != TrialStatus::NoActiveUsers;
        match self {
            Metric::Cnmse => defined.then_some(m.cnmse),
            Metric::Der => Some(m.der),
            Metric::Ser => defined.then_some(m.ser),
        }
    }
}

/// ECDFs of one metric for one algorithm.
#[derive(Clone, Debug)]
pub struct MetricCurves {
    /// Over per-setup means (one point per setup with a defined mean).
    pub per_setup: Option<Ecdf>,
    /// Over all trials.
    pub pooled: Option<Ecdf>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub config: RunConfig,
    /// Ordered by `(setup, trial, algorithm)`.
    pub records: Vec<TrialRecord>,
    pub curves: BTreeMap<(Algorithm, Metric), MetricCurves>,
}

impl RunResult {
    pub fn records_for(&self, algo: Algorithm) -> impl Iterator<Item = &TrialRecord> + '_ {
        self.records.iter().filter(move |r| r.metrics.algo == algo)
    }

    /// Per-setup mean of `metric`, `None` for setups without any defined
    /// value.
    pub fn setup_means(&self, algo: Algorithm, metric: Metric) -> Vec<Option<f64>> {
        setup_means(&self.records, self.config.campaign.setups, algo, metric)
    }

    pub fn curve(&self, algo: Algorithm, metric: Metric) -> Option<&MetricCurves> {
        self.curves.get(&(algo, metric))
    }
}

fn setup_means(records: &[TrialRecord], setups: usize, algo: Algorithm, metric: Metric) -> Vec<Option<f64>> {
    let mut acc = vec![(0.0, 0usize); setups];
    for r in records.iter().filter(|r| r.metrics.algo == algo) {
        if let Some(v) = metric.of(&r.metrics) {
            acc[r.setup].0 += v;
            acc[r.setup].1 += 1;
        }
    }
    acc.into_iter().map(|(s, n)| (n > 0).then(|| s / n as f64)).collect()
}

fn aggregate(records: &[TrialRecord], setups: usize, algos: &[Algorithm]) -> BTreeMap<(Algorithm, Metric), MetricCurves> {
    let mut curves = BTreeMap::new();
    for &algo in algos {
        for metric in Metric::ALL {
            let means: Vec<f64> = setup_means(records, setups, algo, metric).into_iter().flatten().collect();
            let pooled: Vec<f64> = records
                .iter()
                .filter(|r| r.metrics.algo == algo)
                .filter_map(|r| metric.of(&r.metrics))
                .collect();
            curves.insert(
                (algo, metric),
                MetricCurves { per_setup: Ecdf::new(&means).ok(), pooled: Ecdf::new(&pooled).ok() },
            );
        }
    }
    curves
}

/// Canonical algorithm order with duplicates removed.
pub fn canonical_algorithms(algos: &[Algorithm]) -> Vec<Algorithm> {
    let mut v = algos.to_vec();
    v.sort();
    v.dedup();
    v
}

/// Runs every selected algorithm on every `(setup, trial)` realization on a
/// pool of `threads` workers. A realization that cannot be drawn aborts the
/// campaign; algorithm failures are recorded in the trial status.
pub fn run_campaign(cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    let c = &cfg.campaign;
    let algos = canonical_algorithms(&c.algorithms);
    let symbols = cfg.scenario.symbols();
    let deployments = (0..c.setups)
        .map(|s| draw_deployment(&cfg.scenario, c.seed, s))
        .collect::<Result<Vec<_>>>()?;
    let items: Vec<(usize, usize)> = (0..c.setups).flat_map(|s| (0..c.trials).map(move |t| (s, t))).collect();

    let work = || {
        items
            .par_iter()
            .map(|&(setup, trial)| {
                let r = draw_realization(&cfg.scenario, &deployments[setup], trial_seed(c.seed, setup, trial))?;
                let out: Vec<TrialRecord> = algos
                    .iter()
                    .map(|&algo| TrialRecord {
                        setup,
                        trial,
                        metrics: run_pipeline(&r, &symbols, &cfg.algorithms, algo).metrics,
                    })
                    .collect();
                log::debug!("setup {setup} trial {trial} done");
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(c.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let records: Vec<TrialRecord> = pool.install(work)?.into_iter().flatten().collect();
    let curves = aggregate(&records, c.setups, &algos);
    Ok(RunResult { config: cfg.clone(), records, curves })
}

/// Nine significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.8e}")
}

/// Writes `metrics.csv`, `ecdf_<metric>.csv`, `ecdf_<metric>_pooled.csv`
/// and `summary.toml` into `dir`.
pub fn write_outputs(result: &RunResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("metrics.csv")).map_err(csv_err)?;
    w.write_record(["setup", "trial", "algo", "cnmse", "der", "ser", "wall_time", "status"]).map_err(csv_err)?;
    for r in &result.records {
        let m = &r.metrics;
        w.write_record([
            r.setup.to_string(),
            r.trial.to_string(),
            m.algo.name().to_string(),
            fmt_num(m.cnmse),
            fmt_num(m.der),
            fmt_num(m.ser),
            fmt_num(m.wall_time),
            m.status.name().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;

    for metric in Metric::ALL {
        for (suffix, pooled) in [("", false), ("_pooled", true)] {
            let path = dir.join(format!("ecdf_{}{suffix}.csv", metric.name()));
            let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
            w.write_record(["algo", "value", "F"]).map_err(csv_err)?;
            for ((algo, m), curves) in &result.curves {
                if *m != metric {
                    continue;
                }
                let curve = if pooled { &curves.pooled } else { &curves.per_setup };
                for (v, f) in curve.iter().flat_map(Ecdf::points) {
                    w.write_record([algo.name().to_string(), fmt_num(v), fmt_num(f)]).map_err(csv_err)?;
                }
            }
            w.flush()?;
        }
    }
    fs::write(dir.join("summary.toml"), summary_toml(result)?)?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Serialize)]
struct CurveSummary {
    points: usize,
    mean: String,
    quantiles: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a RunConfig,
    /// `results.<algo>.<metric>.<aggregation>`.
    results: BTreeMap<String, BTreeMap<String, BTreeMap<String, CurveSummary>>>,
}

fn curve_summary(e: &Ecdf) -> CurveSummary {
    let mean = e.values().iter().sum::<f64>() / e.len() as f64;
    let quantiles = SUMMARY_QUANTILES
        .iter()
        .map(|&p| (format!("p{:02}", (p * 100.0).round() as u32), fmt_num(e.quantile(p))))
        .collect();
    CurveSummary { points: e.len(), mean: fmt_num(mean), quantiles }
}

/// Configuration echo plus mean and quantiles of every emitted curve.
pub fn summary_toml(result: &RunResult) -> Result<String> {
    let mut results: BTreeMap<String, BTreeMap<String, BTreeMap<String, CurveSummary>>> = BTreeMap::new();
    for ((algo, metric), curves) in &result.curves {
        let entry = results.entry(algo.name().to_string()).or_default().entry(metric.name().to_string()).or_default();
        if let Some(e) = &curves.per_setup {
            entry.insert("per_setup".into(), curve_summary(e));
        }
        if let Some(e) = &curves.pooled {
            entry.insert("pooled".into(), curve_summary(e));
        }
    }
    toml::to_string(&Summary { config: &result.config, results }).map_err(|e| Error::Config(e.to_string()))
}
