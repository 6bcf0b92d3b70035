use rayon::prelude::*;
use serde::Serialize;

use super::{run_scenario, MetricsLog, Scenario, Strategy};
use crate::error::{Error, Result};
use crate::world::ServiceConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunityStats {
    pub community: usize,
    pub final_mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub final_std: f64,
    /// Across the runs that reached each round.
    pub per_round_mean: Vec<f64>,
    pub per_round_std: Vec<f64>,
    pub per_round_count: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub runs: usize,
    /// Mean of `final_mean` over communities.
    pub final_mean_all: f64,
    pub communities: Vec<CommunityStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub strategies: Vec<StrategySummary>,
}

#[derive(Debug, Clone)]
pub struct McResult {
    /// Seed-major, strategies in the requested order.
    pub runs: Vec<MetricsLog>,
    pub summary: McSummary,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(cfg: &ServiceConfig, strategies: &[Strategy], seeds: &[u64], runs: &[MetricsLog]) -> McSummary {
    let communities = cfg.num_communities();
    let strategies = strategies
        .iter()
        .map(|&s| {
            let logs: Vec<&MetricsLog> = runs.iter().filter(|l| l.strategy == s).collect();
            let finals: Vec<Vec<f64>> = logs.iter().map(|l| l.final_accuracy()).collect();
            let curves: Vec<Vec<Vec<f64>>> = logs.iter().map(|l| l.accuracy_by_round()).collect();
            let longest = curves.iter().map(Vec::len).max().unwrap_or(0);
            let stats: Vec<CommunityStats> = (0..communities)
                .map(|c| {
                    let fs: Vec<f64> = finals.iter().filter_map(|f| f.get(c).copied()).collect();
                    let (final_mean, final_std) = if fs.is_empty() { (f64::NAN, 0.0) } else { mean_std(&fs) };
                    let mut per_round_mean = Vec::with_capacity(longest);
                    let mut per_round_std = Vec::with_capacity(longest);
                    let mut per_round_count = Vec::with_capacity(longest);
                    for r in 0..longest {
                        let xs: Vec<f64> = curves.iter().filter_map(|cv| cv.get(r).map(|row| row[c])).collect();
                        let (m, sd) = mean_std(&xs);
                        per_round_mean.push(m);
                        per_round_std.push(sd);
                        per_round_count.push(xs.len());
                    }
                    CommunityStats {
                        community: c,
                        final_mean,
                        final_std,
                        per_round_mean,
                        per_round_std,
                        per_round_count,
                    }
                })
                .collect();
            StrategySummary {
                strategy: s,
                runs: logs.len(),
                final_mean_all: stats.iter().map(|c| c.final_mean).sum::<f64>() / communities.max(1) as f64,
                communities: stats,
            }
        })
        .collect();
    McSummary {
        config_hash: cfg.hash(),
        seeds: seeds.to_vec(),
        strategies,
    }
}

/// Runs every strategy on every seed. Seeds run in parallel; within a seed
/// all strategies share one scenario, so comparisons are paired.
pub fn monte_carlo(cfg: &ServiceConfig, strategies: &[Strategy], seeds: &[u64]) -> Result<McResult> {
    if seeds.is_empty() {
        return Err(Error::invalid("seeds", "at least one seed is required"));
    }
    if strategies.is_empty() {
        return Err(Error::invalid("strategies", "at least one strategy is required"));
    }
    let per_seed: Vec<Vec<MetricsLog>> = seeds
        .par_iter()
        .map(|&seed| {
            let scenario = Scenario::build(cfg, seed)?;
            strategies
                .iter()
                .map(|&s| run_scenario(cfg, &scenario, s, false).map(|(log, _)| log))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let runs: Vec<MetricsLog> = per_seed.into_iter().flatten().collect();
    let summary = summarize(cfg, strategies, seeds, &runs);
    Ok(McResult { runs, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mission::run_mission;
    use crate::world::TaskSpec;

    fn cfg() -> ServiceConfig {
        let mut cfg = ServiceConfig::default();
        cfg.devices_per_community = vec![3, 3];
        cfg.steps_per_round = 5;
        cfg.max_rounds = Some(2);
        cfg.tasks = vec![
            TaskSpec { train_per_class: 12, val_per_label: 4, ..TaskSpec::hard() },
            TaskSpec { train_per_class: 12, val_per_label: 4, ..TaskSpec::easy() },
        ];
        cfg
    }

    #[test]
    fn single_seed_summary_is_the_run() {
        let cfg = cfg();
        let mc = monte_carlo(&cfg, &[Strategy::Barycenter], &[4]).unwrap();
        let solo = run_mission(&cfg, Strategy::Barycenter, 4).unwrap();
        assert_eq!(mc.runs[0].to_csv(), solo.to_csv());
        let s = &mc.summary.strategies[0];
        for (c, stats) in s.communities.iter().enumerate() {
            assert_eq!(stats.final_mean, solo.final_accuracy()[c]);
            assert_eq!(stats.final_std, 0.0);
        }
    }

    #[test]
    fn summary_matches_recomputation() {
        let cfg = cfg();
        let seeds = [1, 2, 3];
        let mc = monte_carlo(&cfg, &[Strategy::Ideal, Strategy::Rectangular], &seeds).unwrap();
        assert_eq!(mc.runs.len(), 6);
        for s in &mc.summary.strategies {
            for c in 0..2 {
                let xs: Vec<f64> = mc
                    .runs
                    .iter()
                    .filter(|l| l.strategy == s.strategy)
                    .map(|l| l.final_accuracy()[c])
                    .collect();
                let m = xs.iter().sum::<f64>() / 3.0;
                let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 2.0;
                assert!((s.communities[c].final_mean - m).abs() < 1e-12);
                assert!((s.communities[c].final_std - v.sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        assert!(monte_carlo(&cfg(), &[Strategy::Ideal], &[]).is_err());
    }
}
