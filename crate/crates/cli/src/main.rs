use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use gfcf_core::campaign::{campaign_realization, run_campaign, write_outputs, Metric, RunConfig};
use gfcf_core::pipeline::Algorithm;

/// Monte-Carlo campaigns for grant-free cell-free massive MIMO receivers.
///
/// Command-line values override the corresponding config-file keys.
#[derive(Debug, Parser)]
#[command(name = "gfcf", version)]
struct Cli {
    /// TOML run configuration (see configs/default.toml).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of user-position setups.
    #[arg(long)]
    setups: Option<usize>,
    /// Realizations per setup.
    #[arg(long)]
    trials: Option<usize>,
    /// Algorithm to evaluate; repeat for several.
    #[arg(long = "algo", value_name = "NAME")]
    algos: Vec<Algorithm>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Debug logging, including per-sweep VB-EP traces.
    #[arg(long, short)]
    verbose: bool,
    /// Write the realization of setup 0, trial 0 as JSON to this file and
    /// exit.
    #[arg(long, value_name = "FILE")]
    dump_realization: Option<PathBuf>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    let c = &mut cfg.campaign;
    if let Some(v) = cli.seed {
        c.seed = v;
    }
    if let Some(v) = cli.setups {
        c.setups = v;
    }
    if let Some(v) = cli.trials {
        c.trials = v;
    }
    if let Some(v) = cli.threads {
        c.threads = v;
    }
    if !cli.algos.is_empty() {
        c.algorithms = cli.algos.clone();
    }
    if cli.verbose {
        cfg.algorithms.vbep.trace = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.verbose { "debug" } else { "warn" }))
        .init();
    let cfg = load_config(&cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    if let Some(path) = &cli.dump_realization {
        campaign_realization(&cfg, 0, 0)?.dump(path)?;
        return Ok(());
    }

    let c = &cfg.campaign;
    log::info!("{} setups x {} trials, seed {}", c.setups, c.trials, c.seed);
    let result = run_campaign(&cfg)?;
    write_outputs(&result, &cli.out).with_context(|| format!("writing {}", cli.out.display()))?;

    println!("{:<18} {:>14} {:>14} {:>14}", "median/setup", "cnmse", "der", "ser");
    for algo in gfcf_core::campaign::canonical_algorithms(&c.algorithms) {
        let cell = |m: Metric| {
            result
                .curve(algo, m)
                .and_then(|cv| cv.per_setup.as_ref())
                .map_or_else(|| "-".to_string(), |e| format!("{:.4e}", e.quantile(0.5)))
        };
        println!("{:<18} {:>14} {:>14} {:>14}", algo.name(), cell(Metric::Cnmse), cell(Metric::Der), cell(Metric::Ser));
    }
    println!("results written to {}", cli.out.display());
    Ok(())
}
