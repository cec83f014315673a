use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use red_rl::harness::{self, ExperimentConfig, Figure, ReplicateOptions, RunRecord};
use red_rl::mdp::DiscretePolicy;
use red_rl::oracle::{self, MdpModel, Objective};

#[derive(Parser)]
#[command(name = "red-rl", version, about = "Reward-extended differential RL experiments")]
struct Cli {
    /// Maximum number of parallel runs (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config for one seed or all configured seeds.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Run every cell of the config's [sweep] grid.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Best deterministic policy of an explicit model (TOML or JSON).
    Oracle {
        model: PathBuf,
        #[arg(long, value_enum)]
        objective: ObjectiveArg,
        #[arg(long, default_value_t = 0.25)]
        tau: f64,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
    },
    /// Regenerate the data behind a figure (fig2a, fig3a, figD4).
    Replicate {
        #[arg(value_parser = parse_figure)]
        figure: Figure,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        runs: usize,
        #[arg(long, default_value_t = 100_000)]
        steps: usize,
        #[arg(long, default_value_t = 100)]
        stride: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Avg,
    Cvar,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            let stride = cfg.record_every;
            let dir = out.clone();
            let records = harness::run_seeds(&cfg, cli.workers, move |r| {
                harness::save_run(&dir, &format!("run_seed{}", r.seed), &r, stride)?;
                Ok(RunRecord::from(&r))
            })?;
            let summaries: Vec<_> = records
                .iter()
                .map(|r| json!({ "seed": r.seed, "failure": r.failure, "summary": r.summary }))
                .collect();
            let report = json!({ "preset": cfg.preset, "out": out, "runs": summaries });
            harness::write_json(&out.join("summary.json"), &report)?;
            emit(&report)?;
        }
        Command::Sweep { config, out } => {
            let cfg = load_config(&config)?;
            if cfg.sweep.is_none() {
                log::warn!("config has no [sweep] table; running the base cell only");
            }
            let table = harness::sweep(&cfg, cli.workers)?;
            std::fs::create_dir_all(&out)?;
            harness::write_sweep_csv(&out.join("sweep.csv"), &table)?;
            harness::write_json(&out.join("sweep.json"), &table)?;
            let best = table.best.map(|i| &table.rows[i]);
            let failures: usize = table.rows.iter().map(|r| r.failures).sum();
            let report = json!({
                "preset": cfg.preset,
                "cells": table.rows.len(),
                "failures": failures,
                "best": best,
            });
            emit(&report)?;
        }
        Command::Oracle {
            model,
            objective,
            tau,
            epsilon,
        } => {
            let m = MdpModel::load(&model).with_context(|| format!("reading model {}", model.display()))?;
            let objective = match objective {
                ObjectiveArg::Avg => Objective::AverageReward,
                ObjectiveArg::Cvar => Objective::Cvar { tau },
            };
            let best = oracle::enumerate_optimal_policy(&m, objective, epsilon)?;
            let policy = DiscretePolicy::epsilon_greedy(&best.actions, m.num_actions(), epsilon)?;
            let dist = oracle::limiting_reward_distribution(&m, &policy)?;
            let names: Vec<&str> = best.actions.iter().map(|a| m.actions[*a].as_str()).collect();
            let report = json!({
                "objective": objective,
                "epsilon": epsilon,
                "policy": best.actions,
                "policy_names": names,
                "value": best.value,
                "average_reward": oracle::exact_average_reward(&m, &policy)?,
                "stationary": oracle::stationary_distribution(&m.policy_transition_matrix(&policy)?)?,
                "var": match objective {
                    Objective::Cvar { tau } => Some(dist.value_at_risk(tau)?),
                    Objective::AverageReward => None,
                },
                "all": best.all,
            });
            emit(&report)?;
        }
        Command::Replicate {
            figure,
            out,
            runs,
            steps,
            stride,
        } => {
            let opts = ReplicateOptions {
                runs,
                steps,
                stride,
                workers: cli.workers,
            };
            let summary = harness::replicate(figure, &out, &opts)?;
            let report = json!({
                "figure": summary.figure,
                "runs": summary.runs,
                "steps": summary.steps,
                "files": summary.files,
            });
            emit(&report)?;
        }
    }
    Ok(())
}

/// Print pretty JSON; a closed pipe (`| head`) is not an error.
fn emit(report: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(report)?) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("reading config {}", path.display()))
}

fn parse_figure(s: &str) -> std::result::Result<Figure, String> {
    s.parse().map_err(|e: red_rl::Error| e.to_string())
}
