//! Tile coding and linear actor-critic learners.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mdp::{sample_index, softmax_unchecked, Environment, RngStream, Trajectory};
use crate::subtask::SubtaskFunction;
use crate::tabular::{StepOutcome, StepSize, DIVERGENCE_LIMIT};

/// Grid tile coder over a box of the state space.
///
/// Tiling `k` is shifted by `k / num_tilings` of a tile width in every
/// dimension. Out-of-bounds components are clamped to the box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TileCoderSpec", into = "TileCoderSpec")]
pub struct TileCoder {
    num_tilings: usize,
    tiles: Vec<usize>,
    bounds: Vec<(f64, f64)>,
    tiles_per_tiling: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileCoderSpec {
    pub num_tilings: usize,
    pub tiles: Vec<usize>,
    pub bounds: Vec<(f64, f64)>,
}

impl TryFrom<TileCoderSpec> for TileCoder {
    type Error = Error;

    fn try_from(s: TileCoderSpec) -> Result<Self> {
        TileCoder::new(s.num_tilings, s.tiles, s.bounds)
    }
}

impl From<TileCoder> for TileCoderSpec {
    fn from(c: TileCoder) -> Self {
        Self {
            num_tilings: c.num_tilings,
            tiles: c.tiles,
            bounds: c.bounds,
        }
    }
}

impl TileCoder {
    pub fn new(num_tilings: usize, tiles: Vec<usize>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if num_tilings == 0 || tiles.is_empty() || tiles.contains(&0) {
            return Err(invalid("tile coder needs at least one tiling and one tile per dimension"));
        }
        if tiles.len() != bounds.len() {
            return Err(invalid("one bound pair per tiled dimension"));
        }
        if bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
            return Err(invalid("tile coder bounds must be finite with lo < hi"));
        }
        let tiles_per_tiling = tiles.iter().product();
        Ok(Self {
            num_tilings,
            tiles,
            bounds,
            tiles_per_tiling,
        })
    }

    /// 32 tilings of 8x8 over angle [-pi, pi] and velocity [-8, 8].
    pub fn pendulum() -> Self {
        Self::new(32, vec![8, 8], vec![(-PI, PI), (-8.0, 8.0)]).expect("valid layout")
    }

    pub fn num_tilings(&self) -> usize {
        self.num_tilings
    }

    pub fn num_features(&self) -> usize {
        self.num_tilings * self.tiles_per_tiling
    }

    pub fn features(&self, state: &[f64]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(self.num_tilings);
        self.features_into(state, &mut out)?;
        Ok(out)
    }

    /// Active feature indices, one per tiling, written into `out`.
    pub fn features_into(&self, state: &[f64], out: &mut Vec<usize>) -> Result<()> {
        if state.len() != self.tiles.len() {
            return Err(invalid(format!(
                "state has {} components, coder expects {}",
                state.len(),
                self.tiles.len()
            )));
        }
        if state.iter().any(|x| !x.is_finite()) {
            return Err(invalid("non-finite state component"));
        }
        out.clear();
        for k in 0..self.num_tilings {
            let shift = k as f64 / self.num_tilings as f64;
            let mut index = 0;
            for ((x, (lo, hi)), n) in state.iter().zip(&self.bounds).zip(&self.tiles) {
                let scaled = (x.clamp(*lo, *hi) - lo) / (hi - lo) * *n as f64 + shift;
                let cell = (scaled.floor() as usize).min(n - 1);
                index = index * n + cell;
            }
            out.push(k * self.tiles_per_tiling + index);
        }
        Ok(())
    }
}

/// Sum of `w` over the active binary features.
pub fn linear_value(w: &[f64], features: &[usize]) -> Result<f64> {
    features.iter().try_fold(0.0, |acc, &j| {
        w.get(j)
            .map(|v| acc + v)
            .ok_or_else(|| invalid(format!("feature {j} out of range ({} weights)", w.len())))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcStepSizes {
    pub alpha: StepSize,
    pub eta_pi: f64,
    pub eta_r_bar: f64,
    #[serde(default)]
    pub eta_z: Vec<f64>,
}

impl AcStepSizes {
    pub fn new(alpha: StepSize, eta_pi: f64, eta_r_bar: f64, eta_z: Vec<f64>) -> Result<Self> {
        let etas = [eta_pi, eta_r_bar].into_iter().chain(eta_z.iter().copied());
        if etas.into_iter().any(|e| !(e.is_finite() && e > 0.0)) {
            return Err(invalid("eta multipliers must be positive"));
        }
        Ok(Self {
            alpha,
            eta_pi,
            eta_r_bar,
            eta_z,
        })
    }
}

/// Critic weights `w`, per-action policy weight blocks `theta`, and the scalar
/// estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearLearnerState {
    num_features: usize,
    num_actions: usize,
    pub w: Vec<f64>,
    pub theta: Vec<f64>,
    pub r_bar: f64,
    pub z: Vec<f64>,
    pub steps: AcStepSizes,
    t: u64,
}

impl LinearLearnerState {
    pub fn new(num_features: usize, num_actions: usize, steps: AcStepSizes) -> Self {
        Self {
            num_features,
            num_actions,
            w: vec![0.0; num_features],
            theta: vec![0.0; num_features * num_actions],
            r_bar: 0.0,
            z: vec![0.0; steps.eta_z.len()],
            steps,
            t: 0,
        }
    }

    pub fn with_estimates(mut self, r_bar: f64, z: Vec<f64>) -> Self {
        assert_eq!(z.len(), self.z.len(), "one initial value per subtask step size");
        self.r_bar = r_bar;
        self.z = z;
        self
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn value(&self, features: &[usize]) -> f64 {
        features.iter().map(|&j| self.w[j]).sum()
    }

    pub fn preferences(&self, features: &[usize]) -> Vec<f64> {
        (0..self.num_actions)
            .map(|b| {
                let block = &self.theta[b * self.num_features..(b + 1) * self.num_features];
                features.iter().map(|&j| block[j]).sum()
            })
            .collect()
    }

    pub fn policy(&self, features: &[usize]) -> Vec<f64> {
        softmax_unchecked(&self.preferences(features))
    }

    /// Dense `grad ln pi(a | s)` with respect to `theta`.
    pub fn grad_log_pi(&self, features: &[usize], action: usize) -> Vec<f64> {
        let probs = self.policy(features);
        let mut g = vec![0.0; self.theta.len()];
        for (b, p) in probs.iter().enumerate() {
            let coef = if b == action { 1.0 } else { 0.0 } - p;
            for &j in features {
                g[b * self.num_features + j] += coef;
            }
        }
        g
    }

    /// One actor-critic update.
    ///
    /// `f = None` is the Differential actor-critic; `Some(f)` critiques the
    /// extended reward and moves each subtask estimate along its
    /// reward-extended TD error (computed from the pre-update estimates).
    pub fn actor_critic_step(
        &mut self,
        f: Option<&SubtaskFunction>,
        features: &[usize],
        action: usize,
        reward: f64,
        next_features: &[usize],
    ) -> Result<StepOutcome> {
        if features.iter().chain(next_features).any(|&j| j >= self.num_features) {
            return Err(invalid("feature index out of range"));
        }
        if action >= self.num_actions {
            return Err(invalid(format!("action {action} out of range")));
        }
        if let Some(f) = f {
            if f.num_subtasks() != self.z.len() {
                return Err(invalid("subtask count mismatch"));
            }
        }
        self.t += 1;
        let alpha = self.steps.alpha.at(self.t);
        let probs = self.policy(features);
        let r_ext = match f {
            Some(f) => f.extended_reward(reward, &self.z),
            None => reward,
        };
        let delta = r_ext - self.r_bar + self.value(next_features) - self.value(features);
        for &j in features {
            self.w[j] += alpha * delta;
        }
        let step_pi = self.steps.eta_pi * alpha * delta;
        for (b, p) in probs.iter().enumerate() {
            let coef = step_pi * (if b == action { 1.0 } else { 0.0 } - p);
            let block = &mut self.theta[b * self.num_features..(b + 1) * self.num_features];
            for &j in features {
                block[j] += coef;
            }
        }
        let betas = match f {
            Some(f) => f.reward_extended_td_errors(reward, &self.z, self.r_bar, delta),
            None => Vec::new(),
        };
        self.r_bar += self.steps.eta_r_bar * alpha * delta;
        for (i, beta) in betas.iter().enumerate() {
            self.z[i] += self.steps.eta_z[i] * alpha * beta;
        }
        Ok(StepOutcome {
            delta,
            extended_reward: r_ext,
            betas,
        })
    }

    fn check_finite(&self, features: &[usize], step: usize) -> Result<()> {
        let bad = |x: f64| !x.is_finite() || x.abs() > DIVERGENCE_LIMIT;
        let diverged = |what: String| Err(Error::Diverged { step, what });
        for &j in features {
            if bad(self.w[j]) {
                return diverged(format!("critic weight {j} = {}", self.w[j]));
            }
            for b in 0..self.num_actions {
                let v = self.theta[b * self.num_features + j];
                if bad(v) {
                    return diverged(format!("policy weight ({b}, {j}) = {v}"));
                }
            }
        }
        if bad(self.r_bar) {
            return diverged(format!("average estimate = {}", self.r_bar));
        }
        if let Some(z) = self.z.iter().find(|z| bad(**z)) {
            return diverged(format!("subtask estimate = {z}"));
        }
        Ok(())
    }
}

/// A tile-coded softmax actor-critic, Differential when `f` is `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorCritic {
    pub coder: TileCoder,
    pub learner: LinearLearnerState,
    pub f: Option<SubtaskFunction>,
}

impl ActorCritic {
    pub fn new(
        coder: TileCoder,
        num_actions: usize,
        steps: AcStepSizes,
        f: Option<SubtaskFunction>,
    ) -> Result<Self> {
        let n_sub = f.as_ref().map_or(0, SubtaskFunction::num_subtasks);
        if n_sub != steps.eta_z.len() {
            return Err(invalid(format!(
                "subtask function has {n_sub} subtasks but {} subtask step sizes were given",
                steps.eta_z.len()
            )));
        }
        if num_actions == 0 {
            return Err(invalid("need at least one action"));
        }
        let learner = LinearLearnerState::new(coder.num_features(), num_actions, steps);
        Ok(Self { coder, learner, f })
    }
}

/// Run an actor-critic for `steps` interactions, recording into `out`.
///
/// `out.state` records the first state component (the pendulum angle).
pub fn run_actor_critic<E>(
    env: &mut E,
    agent: &mut ActorCritic,
    steps: usize,
    seed: u64,
    out: &mut Trajectory,
) -> Result<()>
where
    E: Environment,
    E::State: AsRef<[f64]>,
{
    if steps == 0 {
        return Err(invalid("steps must be at least 1"));
    }
    if env.num_actions() != agent.learner.num_actions {
        return Err(invalid("environment and learner disagree on the action count"));
    }
    let mut env_rng = RngStream::new(seed, "env");
    let mut policy_rng = RngStream::new(seed, "policy");
    let mut s = env.initial_state(&mut env_rng);
    let mut x = agent.coder.features(s.as_ref())?;
    let mut x_next = Vec::with_capacity(x.len());
    for step in 0..steps {
        let probs = agent.learner.policy(&x);
        let a = sample_index(&probs, &mut policy_rng);
        let outcome = env.step(&s, a, &mut env_rng);
        agent.coder.features_into(outcome.next_state.as_ref(), &mut x_next)?;
        agent
            .learner
            .actor_critic_step(agent.f.as_ref(), &x, a, outcome.reward, &x_next)?;
        out.push(s.as_ref()[0], a, outcome.reward, agent.learner.r_bar, &agent.learner.z);
        agent.learner.check_finite(&x, step)?;
        s = outcome.next_state;
        std::mem::swap(&mut x, &mut x_next);
    }
    Ok(())
}
