use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::run::{run, RunResult, RunSummary};
use crate::tabular::StepSize;

/// One point of a sweep grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub alpha: StepSize,
    pub eta_r_bar: f64,
    pub eta_var: f64,
    pub eta_pi: f64,
    pub tau: f64,
}

impl SweepCell {
    pub fn apply(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut c = base.clone();
        c.sweep = None;
        c.step_sizes.alpha = self.alpha;
        c.step_sizes.eta_r_bar = self.eta_r_bar;
        c.step_sizes.eta_var = self.eta_var;
        c.step_sizes.eta_pi = self.eta_pi;
        c.tau = self.tau;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub runs: usize,
    pub failures: usize,
    /// Means over the runs that did not fail; NaN when every run failed.
    pub mean_final_rolling_mean: f64,
    pub mean_final_rolling_cvar: f64,
    /// Rolling CVaR for the CVaR presets, rolling mean otherwise.
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Row with the highest objective among rows with at least one success.
    pub best: Option<usize>,
}

/// Cross product of the grid lists, in row-major order (alpha slowest).
pub fn grid_cells(config: &ExperimentConfig) -> Vec<SweepCell> {
    let grid = config.sweep.clone().unwrap_or_default();
    let s = &config.step_sizes;
    let or = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
    let alphas = if grid.alpha.is_empty() { vec![s.alpha] } else { grid.alpha.clone() };
    let mut cells = Vec::new();
    for alpha in &alphas {
        for eta_r_bar in or(&grid.eta_r_bar, s.eta_r_bar) {
            for eta_var in or(&grid.eta_var, s.eta_var) {
                for eta_pi in or(&grid.eta_pi, s.eta_pi) {
                    for tau in or(&grid.tau, config.tau) {
                        cells.push(SweepCell {
                            alpha: *alpha,
                            eta_r_bar,
                            eta_var,
                            eta_pi,
                            tau,
                        });
                    }
                }
            }
        }
    }
    cells
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        b = b.num_threads(workers);
    }
    b.build().map_err(|e| invalid(format!("cannot start worker pool: {e}")))
}

/// Run `f` on every job with at most `workers` threads (0 = one per core),
/// returning outputs in job order.
pub fn parallel_map<T, U, F>(jobs: &[T], workers: usize, f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    pool(workers)?.install(|| jobs.par_iter().map(&f).collect())
}

/// Run every seed of `config`, keeping only what `keep` extracts from each
/// result so long series need not stay in memory.
pub fn run_seeds<U, F>(config: &ExperimentConfig, workers: usize, keep: F) -> Result<Vec<U>>
where
    U: Send,
    F: Fn(RunResult) -> Result<U> + Sync + Send,
{
    config.validate()?;
    parallel_map(&config.seeds, workers, |seed| keep(run(config, *seed)?))
}

fn aggregate(cell: SweepCell, cvar_objective: bool, results: &[(RunSummary, bool)]) -> SweepRow {
    let ok: Vec<&RunSummary> = results.iter().filter(|(_, failed)| !failed).map(|(s, _)| s).collect();
    let avg = |f: fn(&RunSummary) -> f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|s| f(s)).sum::<f64>() / ok.len() as f64
        }
    };
    let mean = avg(|s| s.final_rolling_mean);
    let cvar = avg(|s| s.final_rolling_cvar);
    SweepRow {
        cell,
        runs: results.len(),
        failures: results.len() - ok.len(),
        mean_final_rolling_mean: mean,
        mean_final_rolling_cvar: cvar,
        objective: if cvar_objective { cvar } else { mean },
    }
}

/// Run every grid cell for every seed and aggregate per cell.
///
/// Results do not depend on `workers`: each run is seeded independently and
/// aggregation happens in grid order after all runs finish.
pub fn sweep(config: &ExperimentConfig, workers: usize) -> Result<SweepTable> {
    config.validate()?;
    let cells = grid_cells(config);
    if cells.is_empty() {
        return Err(invalid("sweep grid is empty"));
    }
    let configs: Vec<ExperimentConfig> = cells.iter().map(|c| c.apply(config)).collect();
    for c in &configs {
        c.validate()?;
    }
    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|i| config.seeds.iter().map(move |s| (i, *s)))
        .collect();
    let results = parallel_map(&jobs, workers, |(i, seed)| {
        let r = run(&configs[*i], *seed)?;
        if let Some(f) = &r.failure {
            log::warn!("cell {i} seed {seed}: {} at step {}", f.message, f.step);
        }
        Ok((r.summary, r.failure.is_some()))
    })?;
    let per_cell = config.seeds.len();
    let cvar_objective = config.preset.is_cvar();
    let rows: Vec<SweepRow> = cells
        .into_iter()
        .zip(results.chunks(per_cell))
        .map(|(cell, chunk)| aggregate(cell, cvar_objective, chunk))
        .collect();
    let best = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.objective.is_finite())
        .fold(None, |best: Option<(usize, f64)>, (i, r)| match best {
            Some((_, v)) if r.objective <= v => best,
            _ => Some((i, r.objective)),
        })
        .map(|(i, _)| i);
    Ok(SweepTable { rows, best })
}
