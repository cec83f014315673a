//! Tabular Differential and RED learners.
//!
//! Each learner exposes a single-transition update that touches only the
//! visited table entry plus the scalar estimates, and [`run_loop`] drives a
//! learner against a [`TabularEnvironment`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mdp::{
    argmax, epsilon_greedy_select, importance_ratio, DiscretePolicy, RngStream,
    TabularEnvironment, Trajectory,
};
use crate::subtask::SubtaskFunction;

/// Absolute value beyond which a run is declared diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// A step-size sequence: a positive constant or `1/n` in the update count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepSizeRepr", into = "StepSizeRepr")]
pub enum StepSize {
    Constant(f64),
    InverseTime,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum StepSizeRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<StepSizeRepr> for StepSize {
    type Error = Error;

    fn try_from(r: StepSizeRepr) -> Result<Self> {
        match r {
            StepSizeRepr::Number(v) => StepSize::constant(v),
            StepSizeRepr::Text(s) => s.parse(),
        }
    }
}

impl From<StepSize> for StepSizeRepr {
    fn from(s: StepSize) -> Self {
        match s {
            StepSize::Constant(v) => StepSizeRepr::Number(v),
            StepSize::InverseTime => StepSizeRepr::Text("1/n".into()),
        }
    }
}

impl FromStr for StepSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t == "1/n" {
            return Ok(StepSize::InverseTime);
        }
        let v: f64 = t
            .parse()
            .map_err(|_| invalid(format!("step size {s:?} is neither a number nor \"1/n\"")))?;
        StepSize::constant(v)
    }
}

impl fmt::Display for StepSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSize::Constant(v) => write!(f, "{v}"),
            StepSize::InverseTime => write!(f, "1/n"),
        }
    }
}

impl StepSize {
    pub fn constant(v: f64) -> Result<Self> {
        if v.is_finite() && v > 0.0 {
            Ok(StepSize::Constant(v))
        } else {
            Err(invalid(format!("step size must be positive, got {v}")))
        }
    }

    /// Step size for update number `n` (1-based).
    pub fn at(&self, n: u64) -> f64 {
        match self {
            StepSize::Constant(v) => *v,
            StepSize::InverseTime => 1.0 / n.max(1) as f64,
        }
    }
}

/// Value step size plus multipliers for the average-reward and subtask
/// estimates: `alpha_r_bar = eta_r_bar * alpha`, `alpha_z_i = eta_z[i] * alpha`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSizeSchedule {
    pub alpha: StepSize,
    pub eta_r_bar: f64,
    #[serde(default)]
    pub eta_z: Vec<f64>,
}

impl StepSizeSchedule {
    pub fn new(alpha: StepSize, eta_r_bar: f64, eta_z: Vec<f64>) -> Result<Self> {
        if !(eta_r_bar.is_finite() && eta_r_bar > 0.0) || eta_z.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(invalid("eta multipliers must be positive"));
        }
        Ok(Self {
            alpha,
            eta_r_bar,
            eta_z,
        })
    }

    pub fn constant(alpha: f64, eta_r_bar: f64) -> Result<Self> {
        Self::new(StepSize::constant(alpha)?, eta_r_bar, Vec::new())
    }
}

/// One observed transition `(S, A, R, S')`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

impl Transition {
    pub fn new(state: usize, action: usize, reward: f64, next_state: usize) -> Self {
        Self {
            state,
            action,
            reward,
            next_state,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub delta: f64,
    pub extended_reward: f64,
    pub betas: Vec<f64>,
}

/// Value table (`V` with one column, or `Q`), average-reward estimate,
/// subtask estimates, step sizes and update counter.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularLearnerState {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
    pub r_bar: f64,
    pub z: Vec<f64>,
    pub schedule: StepSizeSchedule,
    t: u64,
}

impl TabularLearnerState {
    /// State-value table, zero initialised.
    pub fn new_v(num_states: usize, schedule: StepSizeSchedule) -> Self {
        Self::new(num_states, 1, schedule)
    }

    /// Action-value table, zero initialised.
    pub fn new_q(num_states: usize, num_actions: usize, schedule: StepSizeSchedule) -> Self {
        Self::new(num_states, num_actions, schedule)
    }

    fn new(num_states: usize, num_actions: usize, schedule: StepSizeSchedule) -> Self {
        let z = vec![0.0; schedule.eta_z.len()];
        Self {
            num_states,
            num_actions,
            values: vec![0.0; num_states * num_actions],
            r_bar: 0.0,
            z,
            schedule,
            t: 0,
        }
    }

    pub fn with_estimates(mut self, r_bar: f64, z: Vec<f64>) -> Self {
        assert_eq!(z.len(), self.z.len(), "one initial value per subtask step size");
        self.r_bar = r_bar;
        self.z = z;
        self
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn v(&self, s: usize) -> f64 {
        self.values[s * self.num_actions]
    }

    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn q_row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn set_value(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.num_actions + a] = v;
    }

    pub fn greedy_action(&self, s: usize) -> usize {
        argmax(self.q_row(s)).expect("at least one action")
    }

    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.num_states).map(|s| self.greedy_action(s)).collect()
    }

    fn max_q(&self, s: usize) -> f64 {
        self.q_row(s).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    fn tick(&mut self) -> f64 {
        self.t += 1;
        self.schedule.alpha.at(self.t)
    }

    fn check_indices(&self, tr: &Transition) {
        assert!(tr.state < self.num_states && tr.next_state < self.num_states, "state out of range");
        assert!(tr.action < self.num_actions, "action out of range");
    }

    /// Differential TD-learning (prediction).
    pub fn differential_td_step(&mut self, s: usize, r: f64, s_next: usize, rho: f64) -> f64 {
        let alpha = self.tick();
        let alpha_r_bar = self.schedule.eta_r_bar * alpha;
        let delta = r - self.r_bar + self.v(s_next) - self.v(s);
        self.values[s * self.num_actions] += alpha * rho * delta;
        self.r_bar += alpha_r_bar * rho * delta;
        delta
    }

    /// Differential Q-learning (control).
    pub fn differential_q_step(&mut self, tr: &Transition) -> f64 {
        self.check_indices(tr);
        let alpha = self.tick();
        let eta = self.schedule.eta_r_bar;
        let delta = tr.reward - self.r_bar + self.max_q(tr.next_state) - self.q(tr.state, tr.action);
        self.values[tr.state * self.num_actions + tr.action] += alpha * delta;
        self.r_bar += eta * alpha * delta;
        delta
    }

    /// RED TD-learning: the TD error is built from the extended reward and
    /// each subtask estimate moves along its reward-extended TD error.
    pub fn red_td_step(
        &mut self,
        f: &SubtaskFunction,
        s: usize,
        r: f64,
        s_next: usize,
        rho: f64,
    ) -> StepOutcome {
        assert_eq!(f.num_subtasks(), self.z.len(), "subtask count mismatch");
        let alpha = self.tick();
        let alpha_r_bar = self.schedule.eta_r_bar * alpha;
        let r_ext = f.extended_reward(r, &self.z);
        let delta = r_ext - self.r_bar + self.v(s_next) - self.v(s);
        let betas = f.reward_extended_td_errors(r, &self.z, self.r_bar, delta);
        self.values[s * self.num_actions] += alpha * rho * delta;
        self.r_bar += alpha_r_bar * rho * delta;
        for (i, beta) in betas.iter().enumerate() {
            let alpha_z = self.schedule.eta_z[i] * alpha;
            self.z[i] += alpha_z * rho * beta;
        }
        StepOutcome {
            delta,
            extended_reward: r_ext,
            betas,
        }
    }

    /// RED Q-learning.
    pub fn red_q_step(&mut self, f: &SubtaskFunction, tr: &Transition) -> StepOutcome {
        self.check_indices(tr);
        assert_eq!(f.num_subtasks(), self.z.len(), "subtask count mismatch");
        let alpha = self.tick();
        let alpha_r_bar = self.schedule.eta_r_bar * alpha;
        let r_ext = f.extended_reward(tr.reward, &self.z);
        let delta = r_ext - self.r_bar + self.max_q(tr.next_state) - self.q(tr.state, tr.action);
        // Subtask errors use the pre-update estimates of this step.
        let betas = f.reward_extended_td_errors(tr.reward, &self.z, self.r_bar, delta);
        self.values[tr.state * self.num_actions + tr.action] += alpha * delta;
        self.r_bar += alpha_r_bar * delta;
        for (i, beta) in betas.iter().enumerate() {
            let alpha_z = self.schedule.eta_z[i] * alpha;
            self.z[i] += alpha_z * beta;
        }
        StepOutcome {
            delta,
            extended_reward: r_ext,
            betas,
        }
    }

    fn check_finite(&self, entry: usize, step: usize) -> Result<()> {
        let bad = |x: f64| !x.is_finite() || x.abs() > DIVERGENCE_LIMIT;
        if bad(self.values[entry]) {
            return Err(Error::Diverged {
                step,
                what: format!("table entry {entry} = {}", self.values[entry]),
            });
        }
        if bad(self.r_bar) {
            return Err(Error::Diverged {
                step,
                what: format!("average estimate = {}", self.r_bar),
            });
        }
        if let Some(z) = self.z.iter().find(|z| bad(**z)) {
            return Err(Error::Diverged {
                step,
                what: format!("subtask estimate = {z}"),
            });
        }
        Ok(())
    }
}

/// Which update rule a [`TabularAgent`] applies.
#[derive(Clone, Debug, PartialEq)]
pub enum TabularMethod {
    DifferentialQ,
    RedQ(SubtaskFunction),
    /// Off-policy prediction of `target` under the agent's behavior policy.
    DifferentialTd { target: DiscretePolicy },
    RedTd { f: SubtaskFunction, target: DiscretePolicy },
}

impl TabularMethod {
    fn is_control(&self) -> bool {
        matches!(self, TabularMethod::DifferentialQ | TabularMethod::RedQ(_))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Behavior {
    /// Epsilon-greedy over the agent's current action values.
    EpsilonGreedy { epsilon: f64 },
    Fixed(DiscretePolicy),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabularAgent {
    pub method: TabularMethod,
    pub behavior: Behavior,
    pub learner: TabularLearnerState,
}

impl TabularAgent {
    pub fn new(method: TabularMethod, behavior: Behavior, learner: TabularLearnerState) -> Result<Self> {
        let n_sub = match &method {
            TabularMethod::RedQ(f) | TabularMethod::RedTd { f, .. } => f.num_subtasks(),
            _ => 0,
        };
        if n_sub != learner.z.len() {
            return Err(invalid(format!(
                "subtask function has {n_sub} subtasks but the learner tracks {}",
                learner.z.len()
            )));
        }
        if !method.is_control() && learner.num_actions != 1 {
            return Err(invalid("prediction methods use a state-value table"));
        }
        if let Behavior::EpsilonGreedy { epsilon } = behavior {
            if !method.is_control() {
                return Err(invalid("epsilon-greedy behavior needs action values"));
            }
            if !(0.0..=1.0).contains(&epsilon) {
                return Err(invalid(format!("epsilon {epsilon} outside [0, 1]")));
            }
        }
        Ok(Self {
            method,
            behavior,
            learner,
        })
    }

    fn select(&self, s: usize, rng: &mut RngStream) -> Result<usize> {
        match &self.behavior {
            Behavior::EpsilonGreedy { epsilon } => {
                epsilon_greedy_select(self.learner.q_row(s), *epsilon, rng)
            }
            Behavior::Fixed(p) => Ok(p.sample(s, rng)),
        }
    }

    /// Apply one update for an observed transition. Returns the TD error.
    pub fn update(&mut self, tr: &Transition) -> Result<f64> {
        let rho = || -> Result<f64> {
            match (&self.method, &self.behavior) {
                (TabularMethod::DifferentialTd { target } | TabularMethod::RedTd { target, .. }, Behavior::Fixed(b)) => {
                    importance_ratio(target, b, tr.state, tr.action)
                }
                _ => Ok(1.0),
            }
        };
        let rho = rho()?;
        let l = &mut self.learner;
        Ok(match &self.method {
            TabularMethod::DifferentialQ => l.differential_q_step(tr),
            TabularMethod::RedQ(f) => l.red_q_step(f, tr).delta,
            TabularMethod::DifferentialTd { .. } => {
                l.differential_td_step(tr.state, tr.reward, tr.next_state, rho)
            }
            TabularMethod::RedTd { f, .. } => l.red_td_step(f, tr.state, tr.reward, tr.next_state, rho).delta,
        })
    }

    fn updated_entry(&self, tr: &Transition) -> usize {
        if self.method.is_control() {
            tr.state * self.learner.num_actions + tr.action
        } else {
            tr.state
        }
    }
}

/// Run `steps` interactions, appending each step to `out`.
///
/// Environment noise is drawn from the `"env"` stream and action selection
/// from the `"policy"` stream of `seed`. On divergence the steps recorded so
/// far stay in `out` and a [`Error::Diverged`] carrying the step index is
/// returned.
pub fn run_loop<E: TabularEnvironment>(
    env: &mut E,
    agent: &mut TabularAgent,
    steps: usize,
    seed: u64,
    out: &mut Trajectory,
) -> Result<()> {
    if steps == 0 {
        return Err(invalid("steps must be at least 1"));
    }
    if env.num_states() != agent.learner.num_states {
        return Err(invalid("environment and learner disagree on the state count"));
    }
    if agent.method.is_control() && env.num_actions() != agent.learner.num_actions {
        return Err(invalid("environment and learner disagree on the action count"));
    }
    let mut env_rng = RngStream::new(seed, "env");
    let mut policy_rng = RngStream::new(seed, "policy");
    let mut s = env.initial_state(&mut env_rng);
    for step in 0..steps {
        let a = agent.select(s, &mut policy_rng)?;
        let outcome = env.step(&s, a, &mut env_rng);
        let tr = Transition::new(s, a, outcome.reward, outcome.next_state);
        agent.update(&tr)?;
        out.push(s as f64, a, tr.reward, agent.learner.r_bar, &agent.learner.z);
        agent.learner.check_finite(agent.updated_entry(&tr), step)?;
        s = outcome.next_state;
    }
    Ok(())
}
