use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::repeat::{HaltEvent, RepeatOutcome};
use super::HarnessError;
use crate::metrics::{error_distribution, PathTrackingReport, Quartiles, TrackingSample};

/// Per-repeat summary written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub mode: String,
    pub seed: u64,
    pub repeat: usize,
    pub completed: bool,
    pub halt: Option<HaltEvent>,
    pub samples: usize,
    pub measured_rmse: f64,
    pub estimated_rmse: f64,
    pub measured_max_abs: f64,
    pub estimated_max_abs: f64,
    pub autonomy_rate: f64,
    pub localization_failures: usize,
    pub odometry_dropouts: usize,
}

impl RunSummary {
    pub fn from_outcome(scenario: &str, mode: &str, seed: u64, out: &RepeatOutcome) -> Self {
        let r = &out.report;
        Self {
            scenario: scenario.to_string(),
            mode: mode.to_string(),
            seed,
            repeat: out.repeat,
            completed: out.completed(),
            halt: out.halt.clone(),
            samples: r.samples.len(),
            measured_rmse: r.measured_rmse,
            estimated_rmse: r.estimated_rmse,
            measured_max_abs: r.measured_max_abs,
            estimated_max_abs: r.estimated_max_abs,
            autonomy_rate: r.autonomy_rate,
            localization_failures: out.localization_failures,
            odometry_dropouts: out.odometry_dropouts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub mode: String,
    pub runs: usize,
    pub halts: usize,
    /// RMSE over the pooled samples of all runs.
    pub measured_rmse: f64,
    pub estimated_rmse: f64,
    pub measured_max_abs: f64,
    pub estimated_max_abs: f64,
    pub measured_quartiles: Quartiles,
    pub estimated_quartiles: Quartiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    /// Builds one row per `(scenario, mode)`, sorted by scenario then mode.
    pub fn from_runs(runs: &[(RunSummary, PathTrackingReport)]) -> Self {
        let mut groups: BTreeMap<(String, String), Vec<&(RunSummary, PathTrackingReport)>> = BTreeMap::new();
        for run in runs {
            groups.entry((run.0.scenario.clone(), run.0.mode.clone())).or_default().push(run);
        }
        let rows = groups
            .into_iter()
            .filter_map(|((scenario, mode), members)| {
                let reports: Vec<PathTrackingReport> = members.iter().map(|m| m.1.clone()).collect();
                let pooled: Vec<TrackingSample> = reports.iter().flat_map(|r| r.samples.iter().copied()).collect();
                let rms = |f: fn(&TrackingSample) -> f64| {
                    (pooled.iter().map(|s| f(s).powi(2)).sum::<f64>() / pooled.len() as f64).sqrt()
                };
                let (mq, eq) = error_distribution(&reports)?;
                Some(ReportRow {
                    scenario,
                    mode,
                    runs: members.len(),
                    halts: members.iter().filter(|m| !m.0.completed).count(),
                    measured_rmse: rms(|s| s.measured),
                    estimated_rmse: rms(|s| s.estimated),
                    measured_max_abs: reports.iter().map(|r| r.measured_max_abs).fold(0.0, f64::max),
                    estimated_max_abs: reports.iter().map(|r| r.estimated_max_abs).fold(0.0, f64::max),
                    measured_quartiles: mq,
                    estimated_quartiles: eq,
                })
            })
            .collect();
        Self { rows }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:<22} {:>4} {:>5} {:>10} {:>10} {:>9} {:>9}",
            "scenario", "mode", "runs", "halts", "meas_rmse", "est_rmse", "meas_max", "est_max"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<10} {:<22} {:>4} {:>5} {:>10.4} {:>10.4} {:>9.4} {:>9.4}",
                r.scenario, r.mode, r.runs, r.halts, r.measured_rmse, r.estimated_rmse, r.measured_max_abs, r.estimated_max_abs
            );
        }
        s
    }
}

fn find_summaries(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_summaries(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "summary.json") {
            out.push(p);
        }
    }
    Ok(())
}

fn read_tracking(path: &Path) -> Result<Vec<TrackingSample>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    let bad = || HarnessError::Config(format!("{}: malformed tracking row", path.display()));
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<f64> = line.split(',').map(|v| v.parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
            match f[..] {
                [timestamp, measured, estimated] => Ok(TrackingSample {
                    timestamp,
                    measured,
                    estimated,
                }),
                _ => Err(bad()),
            }
        })
        .collect()
}

/// Loads every `summary.json` under `dirs` with its sibling `tracking.csv`.
pub fn load_run_summaries(dirs: &[PathBuf]) -> Result<Vec<(RunSummary, PathTrackingReport)>, HarnessError> {
    let mut files = Vec::new();
    for d in dirs {
        find_summaries(d, &mut files)?;
    }
    if files.is_empty() {
        return Err(HarnessError::Config("no run summaries found".into()));
    }
    files
        .iter()
        .map(|f| {
            let text = std::fs::read_to_string(f).map_err(|e| HarnessError::Config(format!("{}: {e}", f.display())))?;
            let summary: RunSummary =
                serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", f.display())))?;
            let samples = read_tracking(&f.with_file_name("tracking.csv"))?;
            let report = PathTrackingReport {
                samples,
                measured_rmse: summary.measured_rmse,
                estimated_rmse: summary.estimated_rmse,
                measured_max_abs: summary.measured_max_abs,
                estimated_max_abs: summary.estimated_max_abs,
                autonomy_rate: summary.autonomy_rate,
                halt_events: usize::from(!summary.completed),
            };
            Ok((summary, report))
        })
        .collect()
}

/// Aggregates run directories into a table with one row per scenario and
/// sensor mode.
pub fn cmd_report(dirs: &[PathBuf]) -> Result<ReportTable, HarnessError> {
    Ok(ReportTable::from_runs(&load_run_summaries(dirs)?))
}
