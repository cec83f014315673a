//! Canned experiment configurations and figure-data generation.
//!
//! Output schemas (`step` is the 1-based step count):
//!
//! - `fig2a_<preset>.csv`: `step,run,reward,rolling_mean,rolling_cvar`
//! - `fig3a.csv`: `step,run,var_estimate,cvar_estimate`, plus
//!   `fig3a_oracle.json` with the oracle VaR/CVaR of the epsilon-greedy red policy
//! - `figD4.csv`: `step,run,tau,time_in_blue` (trailing-window fraction)
//! - `summary.json`: file list and every run's summary

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::cvar::Preset;
use crate::env::{rpbp_model, PendulumConfig, RpbpConfig, BLUEWORLD, RED_PILL};
use crate::error::{invalid, Error, Result};
use crate::harness::config::{EnvironmentConfig, ExperimentConfig, StepSizeConfig};
use crate::harness::csvio::write_json;
use crate::harness::metrics::{rolling_fraction, rolling_metrics};
use crate::harness::run::RunSummary;
use crate::harness::sweep::run_seeds;
use crate::mdp::DiscretePolicy;
use crate::oracle::limiting_reward_distribution;
use crate::tabular::StepSize;

/// The tau values of the tau-sweep figure.
pub const TAU_SWEEP: [f64; 6] = [0.1, 0.25, 0.5, 0.75, 0.85, 0.9];

/// Red-pill blue-pill config with the tuned step sizes of each preset.
pub fn tuned_rpbp_config(preset: Preset, tau: f64, steps: usize, runs: usize) -> ExperimentConfig {
    let step_sizes = match preset {
        Preset::DiffQ => StepSizeConfig {
            alpha: StepSize::Constant(2e-4),
            eta_r_bar: 1.0,
            eta_var: 1.0,
            eta_pi: 1.0,
        },
        _ => StepSizeConfig {
            alpha: StepSize::Constant(2e-2),
            eta_r_bar: 0.1,
            eta_var: 0.1,
            eta_pi: 1.0,
        },
    };
    ExperimentConfig {
        preset,
        steps,
        seeds: (0..runs as u64).collect(),
        epsilon: 0.1,
        tau,
        initial_var: 0.0,
        initial_cvar: 0.0,
        window: 1000.min(steps),
        record_every: 1,
        step_sizes,
        environment: EnvironmentConfig::Rpbp(RpbpConfig::default()),
        tile_coding: None,
        sweep: None,
    }
}

/// Pendulum config with the tuned actor-critic step sizes (tau = 0.1).
pub fn tuned_pendulum_config(preset: Preset, steps: usize, runs: usize) -> ExperimentConfig {
    let step_sizes = match preset {
        Preset::RedCvarAc => StepSizeConfig {
            alpha: StepSize::Constant(2e-3),
            eta_r_bar: 1e-2,
            eta_var: 1e-3,
            eta_pi: 1.0,
        },
        _ => StepSizeConfig {
            alpha: StepSize::Constant(2e-3),
            eta_r_bar: 1e-2,
            eta_var: 1.0,
            eta_pi: 2.0,
        },
    };
    ExperimentConfig {
        preset,
        steps,
        seeds: (0..runs as u64).collect(),
        epsilon: 0.1,
        tau: 0.1,
        initial_var: 0.0,
        initial_cvar: 0.0,
        window: 1000.min(steps),
        record_every: 1,
        step_sizes,
        environment: EnvironmentConfig::Pendulum(PendulumConfig::default()),
        tile_coding: None,
        sweep: None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    Fig2a,
    Fig3a,
    FigD4,
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fig2a" => Ok(Figure::Fig2a),
            "fig3a" => Ok(Figure::Fig3a),
            "figd4" => Ok(Figure::FigD4),
            _ => Err(invalid(format!("unknown figure {s:?} (expected fig2a, fig3a or figD4)"))),
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Figure::Fig2a => "fig2a",
            Figure::Fig3a => "fig3a",
            Figure::FigD4 => "figD4",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateOptions {
    pub runs: usize,
    pub steps: usize,
    /// Keep every n-th step in the CSVs.
    pub stride: usize,
    /// 0 = one worker per core.
    pub workers: usize,
}

impl Default for ReplicateOptions {
    fn default() -> Self {
        Self {
            runs: 50,
            steps: 100_000,
            stride: 100,
            workers: 0,
        }
    }
}

#[derive(Debug, Serialize)]
struct RunEntry {
    group: String,
    seed: u64,
    failed: bool,
    summary: RunSummary,
}

#[derive(Debug, Serialize)]
pub struct ReplicateSummary {
    pub figure: String,
    pub runs: usize,
    pub steps: usize,
    pub stride: usize,
    pub files: Vec<PathBuf>,
    #[serde(skip)]
    entries_len: usize,
    runs_detail: Vec<RunEntry>,
}

impl ReplicateSummary {
    pub fn num_runs(&self) -> usize {
        self.entries_len
    }
}

fn kept(t: usize, n: usize, stride: usize) -> bool {
    (t + 1) % stride == 0 || t + 1 == n
}

#[derive(Serialize)]
struct Fig2aRow {
    step: usize,
    run: u64,
    reward: f64,
    rolling_mean: f64,
    rolling_cvar: f64,
}

#[derive(Serialize)]
struct Fig3aRow {
    step: usize,
    run: u64,
    var_estimate: f64,
    cvar_estimate: f64,
}

#[derive(Serialize)]
struct FigD4Row {
    step: usize,
    run: u64,
    tau: f64,
    time_in_blue: f64,
}

#[derive(Serialize)]
struct OracleSidecar {
    tau: f64,
    epsilon: f64,
    policy: Vec<usize>,
    var: f64,
    cvar: f64,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Generate the CSVs for one figure into `out`.
pub fn replicate(figure: Figure, out: &Path, opts: &ReplicateOptions) -> Result<ReplicateSummary> {
    if opts.runs == 0 || opts.steps == 0 || opts.stride == 0 {
        return Err(invalid("runs, steps and stride must all be at least 1"));
    }
    std::fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let mut entries = Vec::new();
    let stride = opts.stride;
    match figure {
        Figure::Fig2a => {
            for preset in [Preset::DiffQ, Preset::RedCvarQ] {
                let cfg = tuned_rpbp_config(preset, 0.25, opts.steps, opts.runs);
                let per_run = run_seeds(&cfg, opts.workers, |r| {
                    let m = rolling_metrics(&r.series.reward, cfg.window, cfg.tau)?;
                    let n = r.series.len();
                    let rows: Vec<Fig2aRow> = (0..n)
                        .filter(|t| kept(*t, n, stride))
                        .map(|t| Fig2aRow {
                            step: t + 1,
                            run: r.seed,
                            reward: r.series.reward[t],
                            rolling_mean: m.mean[t],
                            rolling_cvar: m.cvar[t],
                        })
                        .collect();
                    Ok((rows, r.seed, r.failure.is_some(), r.summary))
                })?;
                let path = out.join(format!("fig2a_{preset}.csv"));
                let mut rows = Vec::new();
                for (r, seed, failed, summary) in per_run {
                    rows.extend(r);
                    entries.push(RunEntry {
                        group: preset.to_string(),
                        seed,
                        failed,
                        summary,
                    });
                }
                write_rows(&path, rows)?;
                files.push(path);
            }
        }
        Figure::Fig3a => {
            let cfg = tuned_rpbp_config(Preset::RedCvarQ, 0.25, opts.steps, opts.runs);
            let per_run = run_seeds(&cfg, opts.workers, |r| {
                let n = r.series.len();
                let rows: Vec<Fig3aRow> = (0..n)
                    .filter(|t| kept(*t, n, stride))
                    .map(|t| Fig3aRow {
                        step: t + 1,
                        run: r.seed,
                        var_estimate: r.series.subtasks[0][t],
                        cvar_estimate: r.series.estimate[t],
                    })
                    .collect();
                Ok((rows, r.seed, r.failure.is_some(), r.summary))
            })?;
            let path = out.join("fig3a.csv");
            let mut rows = Vec::new();
            for (r, seed, failed, summary) in per_run {
                rows.extend(r);
                entries.push(RunEntry {
                    group: Preset::RedCvarQ.to_string(),
                    seed,
                    failed,
                    summary,
                });
            }
            write_rows(&path, rows)?;
            files.push(path);

            let policy = vec![RED_PILL, RED_PILL];
            let behavior = DiscretePolicy::epsilon_greedy(&policy, 2, cfg.epsilon)?;
            let dist = limiting_reward_distribution(&rpbp_model(), &behavior)?;
            let sidecar = out.join("fig3a_oracle.json");
            write_json(
                &sidecar,
                &OracleSidecar {
                    tau: cfg.tau,
                    epsilon: cfg.epsilon,
                    policy,
                    var: dist.value_at_risk(cfg.tau)?,
                    cvar: dist.cvar(cfg.tau)?,
                },
            )?;
            files.push(sidecar);
        }
        Figure::FigD4 => {
            let mut rows = Vec::new();
            for tau in TAU_SWEEP {
                let cfg = tuned_rpbp_config(Preset::RedCvarQ, tau, opts.steps, opts.runs);
                let per_run = run_seeds(&cfg, opts.workers, |r| {
                    let blue = rolling_fraction(&r.series.state, &(BLUEWORLD as f64), cfg.window);
                    let n = r.series.len();
                    let rows: Vec<FigD4Row> = (0..n)
                        .filter(|t| kept(*t, n, stride))
                        .map(|t| FigD4Row {
                            step: t + 1,
                            run: r.seed,
                            tau,
                            time_in_blue: blue[t],
                        })
                        .collect();
                    Ok((rows, r.seed, r.failure.is_some(), r.summary))
                })?;
                for (r, seed, failed, summary) in per_run {
                    rows.extend(r);
                    entries.push(RunEntry {
                        group: format!("tau={tau}"),
                        seed,
                        failed,
                        summary,
                    });
                }
            }
            let path = out.join("figD4.csv");
            write_rows(&path, rows)?;
            files.push(path);
        }
    }
    let summary = ReplicateSummary {
        figure: figure.to_string(),
        runs: opts.runs,
        steps: opts.steps,
        stride,
        files,
        entries_len: entries.len(),
        runs_detail: entries,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}
