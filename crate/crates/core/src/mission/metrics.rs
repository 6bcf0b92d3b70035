use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Strategy;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "round,community,mean_val_acc,cov,scheduled,succeeded,cum_distance";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: usize,
    pub community: usize,
    /// p_k-weighted validation accuracy of the community model after the
    /// round, over all member devices.
    pub mean_val_acc: f64,
    pub cov: f64,
    pub scheduled: usize,
    pub succeeded: usize,
    pub cum_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub seed: u64,
    pub strategy: Strategy,
    pub config_hash: String,
    pub num_communities: usize,
    pub rows: Vec<MetricsRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub seed: u64,
    pub strategy: Strategy,
    pub rounds: usize,
    /// Indexed by community.
    pub final_accuracy: Vec<f64>,
    pub total_distance: f64,
}

impl MetricsLog {
    pub fn rounds(&self) -> usize {
        self.rows.last().map_or(0, |r| r.round)
    }

    /// Accuracy after the last round per community; empty before any round.
    pub fn final_accuracy(&self) -> Vec<f64> {
        let last = self.rounds();
        let mut out = vec![f64::NAN; self.num_communities];
        for r in self.rows.iter().filter(|r| r.round == last && last > 0) {
            out[r.community] = r.mean_val_acc;
        }
        if last == 0 {
            out.clear();
        }
        out
    }

    /// Accuracy per round (outer) and community (inner).
    pub fn accuracy_by_round(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![f64::NAN; self.num_communities]; self.rounds()];
        for r in &self.rows {
            out[r.round - 1][r.community] = r.mean_val_acc;
        }
        out
    }

    pub fn total_distance(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cum_distance)
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            strategy: self.strategy,
            rounds: self.rounds(),
            final_accuracy: self.final_accuracy(),
            total_distance: self.total_distance(),
        }
    }

    /// Fixed header, '\n' line endings, shortest round-trip float format.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.round, r.community, r.mean_val_acc, r.cov, r.scheduled, r.succeeded, r.cum_distance
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_csv().as_bytes())
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.summary())?;
        write_file(path, json.as_bytes())
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a CSV produced by [`MetricsLog::to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Shape("metrics CSV header mismatch".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::Shape(format!("malformed metrics row `{l}`"));
            if f.len() != 7 {
                return Err(bad());
            }
            Ok(MetricsRow {
                round: f[0].parse().map_err(|_| bad())?,
                community: f[1].parse().map_err(|_| bad())?,
                mean_val_acc: f[2].parse().map_err(|_| bad())?,
                cov: f[3].parse().map_err(|_| bad())?,
                scheduled: f[4].parse().map_err(|_| bad())?,
                succeeded: f[5].parse().map_err(|_| bad())?,
                cum_distance: f[6].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log() -> MetricsLog {
        let rows = (1..=2)
            .flat_map(|r| {
                (0..2).map(move |c| MetricsRow {
                    round: r,
                    community: c,
                    mean_val_acc: 0.1 * (r + c) as f64,
                    cov: 0.5,
                    scheduled: 3,
                    succeeded: 2,
                    cum_distance: 800.0 * r as f64,
                })
            })
            .collect();
        MetricsLog {
            seed: 3,
            strategy: Strategy::Optimized,
            config_hash: "abc".into(),
            num_communities: 2,
            rows,
        }
    }

    #[test]
    fn csv_layout() {
        let csv = log().to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next(), Some("1,0,0.1,0.5,3,2,800"));
        assert!(csv.ends_with('\n') && !csv.contains('\r'));
        assert_eq!(parse_csv(&csv).unwrap(), log().rows);
    }

    #[test]
    fn summary_fields() {
        let s = log().summary();
        assert_eq!(s.rounds, 2);
        assert_eq!(s.final_accuracy, vec![0.2, 0.30000000000000004]);
        assert_eq!(s.total_distance, 1600.0);
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        assert_eq!(v["strategy"], "optimized");
    }
}
