//! `uavfedsim` command line: single runs, Monte-Carlo sweeps, PER-fit
//! diagnostics and plan dumps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::channel::{distance_grid, elevation_from_distance, per_at_distance};
use crate::mission::{monte_carlo, per_fit_for, run_scenario, Scenario, Strategy};
use crate::world::{load_config, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "uavfedsim", version, about = "UAV-orchestrated multi-community federated learning simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one mission and write its metrics and summary.
    Run(RunArgs),
    /// Run several strategies over a range of seeds.
    Mc(McArgs),
    /// Fit the logistic PER approximation and write the samples.
    FitPer(CommonArgs),
    /// Run one mission and write the per-round plans only.
    DumpPlan(RunArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON config; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "UAVFEDSIM_OUT", default_value = ".")]
    pub out: PathBuf,
    /// Suppress progress messages.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value_t = Strategy::Optimized)]
    pub strategy: Strategy,
    /// Defaults to the config's `rng_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write `plans_<strategy>_<seed>.json`.
    #[arg(long)]
    pub dump_plans: bool,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Repeatable or comma-separated; all strategies when omitted.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub strategy: Vec<Strategy>,
    /// Inclusive range `A..B` or a comma-separated list.
    #[arg(long)]
    pub seeds: String,
}

/// Parses `A..B` (inclusive), `a,b,c` or a single seed.
pub fn parse_seeds(s: &str) -> anyhow::Result<Vec<u64>> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().with_context(|| format!("bad seed range start in `{s}`"))?;
        let b: u64 = b.trim().parse().with_context(|| format!("bad seed range end in `{s}`"))?;
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().with_context(|| format!("bad seed `{t}`")))
        .collect()
}

fn load(common: &CommonArgs) -> anyhow::Result<ServiceConfig> {
    match &common.config {
        Some(p) => load_config(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ServiceConfig::default()),
    }
}

fn prepare_out(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn note(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        eprintln!("{}", msg.as_ref());
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_run(args: &RunArgs, metrics: bool) -> anyhow::Result<()> {
    let cfg = load(&args.common)?;
    let seed = args.seed.unwrap_or(cfg.rng_seed);
    let out = &args.common.out;
    prepare_out(out)?;
    let scenario = Scenario::build(&cfg, seed)?;
    let plans = args.dump_plans || !metrics;
    let (log, dump) = run_scenario(&cfg, &scenario, args.strategy, plans)?;
    let tag = format!("{}_{seed}", args.strategy);
    if metrics {
        log.write_csv(&out.join(format!("metrics_{tag}.csv")))?;
        log.write_summary(&out.join(format!("summary_{tag}.json")))?;
    }
    if let Some(dump) = dump {
        write_json(&out.join(format!("plans_{tag}.json")), &dump)?;
    }
    let finals: Vec<String> = log.final_accuracy().iter().map(|a| format!("{a:.4}")).collect();
    note(
        args.common.quiet,
        format!(
            "{tag}: {} rounds, {:.1} m flown, final accuracy [{}]",
            log.rounds(),
            log.total_distance(),
            finals.join(", ")
        ),
    );
    Ok(())
}

fn cmd_mc(args: &McArgs) -> anyhow::Result<()> {
    let cfg = load(&args.common)?;
    let seeds = parse_seeds(&args.seeds)?;
    if seeds.is_empty() {
        bail!("no seeds in `{}`", args.seeds);
    }
    let strategies = if args.strategy.is_empty() {
        Strategy::ALL.to_vec()
    } else {
        args.strategy.clone()
    };
    let out = &args.common.out;
    prepare_out(out)?;
    let mc = monte_carlo(&cfg, &strategies, &seeds)?;
    for log in &mc.runs {
        log.write_csv(&out.join(format!("metrics_{}_{}.csv", log.strategy, log.seed)))?;
    }
    write_json(&out.join("mc_summary.json"), &mc.summary)?;
    for s in &mc.summary.strategies {
        let per: Vec<String> = s
            .communities
            .iter()
            .map(|c| format!("{:.4}±{:.4}", c.final_mean, c.final_std))
            .collect();
        note(args.common.quiet, format!("{}: {}", s.strategy, per.join("  ")));
    }
    Ok(())
}

fn cmd_fit_per(args: &CommonArgs) -> anyhow::Result<()> {
    let cfg = load(args)?;
    prepare_out(&args.out)?;
    let fit = per_fit_for(&cfg)?;
    let max = cfg.per_fit.max_distance.unwrap_or_else(|| cfg.area_diagonal());
    let mut csv = String::from("distance,theta_deg,q_bar,q_tilde\n");
    for d in distance_grid(max, cfg.per_fit.grid_points) {
        let theta = elevation_from_distance(cfg.uav_altitude, d);
        let q = per_at_distance(d, cfg.uav_altitude, &cfg.propagation);
        let _ = writeln!(csv, "{d},{theta},{q},{}", fit.approx_per(theta));
    }
    let path = args.out.join("per_fit.csv");
    std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    println!("b1 = {}", fit.b1);
    println!("b2 = {}", fit.b2);
    println!("max_abs_error = {}", fit.max_abs_error);
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Run(a) => cmd_run(a, true),
        Command::DumpPlan(a) => cmd_run(a, false),
        Command::Mc(a) => cmd_mc(a),
        Command::FitPer(a) => cmd_fit_per(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("3..6").unwrap(), vec![3, 4, 5, 6]);
        assert_eq!(parse_seeds("1, 9,2").unwrap(), vec![1, 9, 2]);
        assert_eq!(parse_seeds("7").unwrap(), vec![7]);
        assert!(parse_seeds("5..4").unwrap().is_empty());
        assert!(parse_seeds("").unwrap().is_empty());
        assert!(parse_seeds("x..2").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
