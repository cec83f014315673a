//! CSV and JSON persistence.
//!
//! Series CSV columns: `step,reward,estimate,var_estimate,state,action`
//! (`var_estimate` empty for presets without a VaR estimate; `step` is the
//! 1-based step count). Floats are written in shortest round-trip form, so
//! re-reading reproduces the recorded values bit for bit.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::run::{summarize, RunFailure, RunResult, RunSummary};
use crate::harness::sweep::SweepTable;
use crate::mdp::Trajectory;

#[derive(Debug, Serialize, Deserialize)]
struct SeriesRow {
    step: usize,
    reward: f64,
    estimate: f64,
    var_estimate: Option<f64>,
    state: f64,
    action: usize,
}

/// Write every `stride`-th step (always including the last).
pub fn write_series_csv(path: &Path, series: &Trajectory, stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(invalid("stride must be at least 1"));
    }
    let mut w = csv::Writer::from_path(path)?;
    let n = series.len();
    for t in (0..n).filter(|t| (t + 1) % stride == 0 || t + 1 == n) {
        w.serialize(SeriesRow {
            step: t + 1,
            reward: series.reward[t],
            estimate: series.estimate[t],
            var_estimate: series.subtasks.first().map(|z| z[t]),
            state: series.state[t],
            action: series.action[t],
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series_csv(path: &Path) -> Result<Trajectory> {
    let mut r = csv::Reader::from_path(path)?;
    let mut t = Trajectory::default();
    let mut has_var = None;
    for row in r.deserialize() {
        let row: SeriesRow = row?;
        let this = row.var_estimate.is_some();
        if *has_var.get_or_insert(this) != this {
            return Err(invalid("var_estimate column is only partly filled"));
        }
        if this && t.subtasks.is_empty() {
            t.subtasks.push(Vec::new());
        }
        t.push(row.state, row.action, row.reward, row.estimate, &row.var_estimate.into_iter().collect::<Vec<_>>());
    }
    Ok(t)
}

/// Everything about a run except its series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub summary: RunSummary,
    pub final_table: Option<Vec<Vec<f64>>>,
    pub failure: Option<RunFailure>,
}

impl From<&RunResult> for RunRecord {
    fn from(r: &RunResult) -> Self {
        Self {
            config: r.config.clone(),
            seed: r.seed,
            summary: r.summary.clone(),
            final_table: r.final_table.clone(),
            failure: r.failure.clone(),
        }
    }
}

/// Write `<stem>.csv` (every `stride`-th step) and `<stem>.json` (record)
/// into `dir`.
pub fn save_run(dir: &Path, stem: &str, result: &RunResult, stride: usize) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_series_csv(&dir.join(format!("{stem}.csv")), &result.series, stride)?;
    write_json(&dir.join(format!("{stem}.json")), &RunRecord::from(result))
}

/// Re-read a saved run.
///
/// When the CSV holds the full series the summary is recomputed from it;
/// for thinned series the stored summary is kept.
pub fn load_run(dir: &Path, stem: &str) -> Result<RunResult> {
    let record: RunRecord = serde_json::from_reader(File::open(dir.join(format!("{stem}.json")))?)?;
    let series = read_series_csv(&dir.join(format!("{stem}.csv")))?;
    let summary = if series.len() == record.summary.steps_completed {
        summarize(&record.config, &series, record.final_table.as_deref())
    } else {
        record.summary
    };
    Ok(RunResult {
        config: record.config,
        seed: record.seed,
        series,
        final_table: record.final_table,
        summary,
        failure: record.failure,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path)?;
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepCsvRow {
    alpha: String,
    eta_r_bar: f64,
    eta_var: f64,
    eta_pi: f64,
    tau: f64,
    runs: usize,
    failures: usize,
    mean_final_rolling_mean: f64,
    mean_final_rolling_cvar: f64,
    objective: f64,
    best: bool,
}

/// Columns: `alpha,eta_r_bar,eta_var,eta_pi,tau,runs,failures,
/// mean_final_rolling_mean,mean_final_rolling_cvar,objective,best`.
pub fn write_sweep_csv(path: &Path, table: &SweepTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (i, row) in table.rows.iter().enumerate() {
        w.serialize(SweepCsvRow {
            alpha: row.cell.alpha.to_string(),
            eta_r_bar: row.cell.eta_r_bar,
            eta_var: row.cell.eta_var,
            eta_pi: row.cell.eta_pi,
            tau: row.cell.tau,
            runs: row.runs,
            failures: row.failures,
            mean_final_rolling_mean: row.mean_final_rolling_mean,
            mean_final_rolling_cvar: row.mean_final_rolling_cvar,
            objective: row.objective,
            best: table.best == Some(i),
        })?;
    }
    w.flush()?;
    Ok(())
}
