use serde::{Deserialize, Serialize};

use crate::cvar::{red_cvar_ac_preset, red_cvar_q_preset, Preset};
use crate::env::{Pendulum, PendulumConfig, Rpbp};
use crate::error::{Error, Result};
use crate::harness::config::{EnvironmentConfig, ExperimentConfig};
use crate::harness::metrics::{empirical_cvar, final_window, mean};
use crate::linear::{run_actor_critic, AcStepSizes, ActorCritic};
use crate::mdp::{Environment, RngStream, Trajectory};
use crate::tabular::{
    run_loop, Behavior, StepSizeSchedule, TabularAgent, TabularLearnerState, TabularMethod,
};

/// Why a run stopped early.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub step: usize,
    pub message: String,
}

/// End-of-run statistics, all over the final `window` steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps_completed: usize,
    pub final_rolling_mean: f64,
    pub final_rolling_cvar: f64,
    /// Average-reward estimate, or CVaR estimate for the CVaR presets.
    pub final_estimate: f64,
    pub final_var_estimate: Option<f64>,
    /// Greedy action per state (tabular presets).
    pub greedy_policy: Option<Vec<usize>>,
    /// Fraction of the final window spent in each state (tabular presets).
    pub time_in_state: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub series: Trajectory,
    /// Final action-value table for tabular presets, row per state.
    pub final_table: Option<Vec<Vec<f64>>>,
    pub summary: RunSummary,
    pub failure: Option<RunFailure>,
}

/// Recompute a summary from a recorded series and final value table.
pub fn summarize(config: &ExperimentConfig, series: &Trajectory, final_table: Option<&[Vec<f64>]>) -> RunSummary {
    let rewards = final_window(&series.reward, config.window);
    let (final_rolling_mean, final_rolling_cvar) = if rewards.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (mean(rewards), empirical_cvar(rewards, config.tau))
    };
    let time_in_state = match &config.environment {
        EnvironmentConfig::Rpbp(_) => {
            let states = final_window(&series.state, config.window);
            (0..2)
                .map(|s| states.iter().filter(|x| **x == s as f64).count() as f64 / states.len().max(1) as f64)
                .collect()
        }
        EnvironmentConfig::Pendulum(_) => Vec::new(),
    };
    let greedy_policy = final_table.map(|t| {
        t.iter()
            .map(|row| crate::mdp::argmax(row).expect("non-empty row"))
            .collect()
    });
    RunSummary {
        steps_completed: series.len(),
        final_rolling_mean,
        final_rolling_cvar,
        final_estimate: series.estimate.last().copied().unwrap_or(f64::NAN),
        final_var_estimate: series.subtasks.first().and_then(|z| z.last().copied()),
        greedy_policy,
        time_in_state,
    }
}

fn tabular_agent(config: &ExperimentConfig, num_states: usize, num_actions: usize) -> Result<TabularAgent> {
    let s = &config.step_sizes;
    match config.preset {
        Preset::RedCvarQ => red_cvar_q_preset(
            &config.cvar_params(),
            StepSizeSchedule::new(s.alpha, s.eta_r_bar, vec![s.eta_var])?,
            config.epsilon,
            num_states,
            num_actions,
        ),
        Preset::DiffQ => TabularAgent::new(
            TabularMethod::DifferentialQ,
            Behavior::EpsilonGreedy {
                epsilon: config.epsilon,
            },
            TabularLearnerState::new_q(num_states, num_actions, StepSizeSchedule::new(s.alpha, s.eta_r_bar, vec![])?),
        ),
        p => unreachable!("{p} is not tabular"),
    }
}

fn actor_critic(config: &ExperimentConfig, num_actions: usize) -> Result<ActorCritic> {
    let s = &config.step_sizes;
    let coder = config.tile_coder()?;
    match config.preset {
        Preset::RedCvarAc => red_cvar_ac_preset(
            &config.cvar_params(),
            AcStepSizes::new(s.alpha, s.eta_pi, s.eta_r_bar, vec![s.eta_var])?,
            coder,
            num_actions,
        ),
        Preset::DiffAc => ActorCritic::new(coder, num_actions, AcStepSizes::new(s.alpha, s.eta_pi, s.eta_r_bar, vec![])?, None),
        p => unreachable!("{p} is not an actor-critic"),
    }
}

fn split_failure(outcome: Result<()>) -> Result<Option<RunFailure>> {
    match outcome {
        Ok(()) => Ok(None),
        Err(Error::Diverged { step, what }) => Ok(Some(RunFailure {
            step,
            message: format!("diverged: {what}"),
        })),
        Err(e) => Err(e),
    }
}

/// Execute one seed of an experiment.
///
/// Divergence does not raise: the result carries a [`RunFailure`] and the
/// series recorded up to the failing step.
pub fn run(config: &ExperimentConfig, seed: u64) -> Result<RunResult> {
    config.validate()?;
    let n_sub = usize::from(config.preset.is_cvar());
    let mut series = Trajectory::with_capacity(config.steps, n_sub);
    let (outcome, final_table) = match &config.environment {
        EnvironmentConfig::Rpbp(c) => {
            let mut env = Rpbp::new(c.clone())?;
            let mut agent = tabular_agent(config, 2, 2)?;
            let outcome = run_loop(&mut env, &mut agent, config.steps, seed, &mut series);
            let l = &agent.learner;
            let table = (0..l.num_states()).map(|s| l.q_row(s).to_vec()).collect();
            (outcome, Some(table))
        }
        EnvironmentConfig::Pendulum(c) => {
            let mut env = Pendulum::new(c.clone())?;
            let mut agent = actor_critic(config, env.num_actions())?;
            (run_actor_critic(&mut env, &mut agent, config.steps, seed, &mut series), None)
        }
    };
    let failure = split_failure(outcome)?;
    let summary = summarize(config, &series, final_table.as_deref());
    Ok(RunResult {
        config: config.clone(),
        seed,
        series,
        final_table,
        summary,
        failure,
    })
}

/// Rewards of a uniformly random policy on the pendulum, using the same
/// `"env"` / `"policy"` streams a learner would.
pub fn uniform_random_rewards(config: &PendulumConfig, steps: usize, seed: u64) -> Result<Vec<f64>> {
    let mut env = Pendulum::new(config.clone())?;
    let mut env_rng = RngStream::new(seed, "env");
    let mut policy_rng = RngStream::new(seed, "policy");
    let mut s = env.initial_state(&mut env_rng);
    let n = env.num_actions();
    Ok((0..steps)
        .map(|_| {
            use rand::Rng;
            let a = policy_rng.random_range(0..n);
            let out = env.step(&s, a, &mut env_rng);
            s = out.next_state;
            out.reward
        })
        .collect())
}
