//! Red-pill blue-pill and a continuing inverted pendulum.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mdp::{EnvStep, Environment, RngStream, TabularEnvironment};
use crate::oracle::{MdpModel, RewardDist};

pub const REDWORLD: usize = 0;
pub const BLUEWORLD: usize = 1;
pub const RED_PILL: usize = 0;
pub const BLUE_PILL: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RpbpConfig {
    pub red_mean: f64,
    pub red_std: f64,
    pub blue_means: [f64; 2],
    pub blue_stds: [f64; 2],
    /// Probability of the first blue component.
    pub blue_mix: f64,
    pub reward_cap: f64,
}

impl Default for RpbpConfig {
    fn default() -> Self {
        Self {
            red_mean: -0.7,
            red_std: 0.05,
            blue_means: [-1.0, -0.2],
            blue_stds: [0.05, 0.05],
            blue_mix: 0.5,
            reward_cap: 0.0,
        }
    }
}

impl RpbpConfig {
    pub fn validate(&self) -> Result<()> {
        let stds = [self.red_std, self.blue_stds[0], self.blue_stds[1]];
        if stds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid("red-pill blue-pill stdevs must be positive"));
        }
        if !(0.0..=1.0).contains(&self.blue_mix) {
            return Err(invalid(format!("blue mix {} outside [0, 1]", self.blue_mix)));
        }
        Ok(())
    }

    pub fn red_dist(&self) -> RewardDist {
        RewardDist::gaussian(self.red_mean, self.red_std)
    }

    pub fn blue_dist(&self) -> RewardDist {
        RewardDist::mixture(vec![
            (self.blue_mix, RewardDist::gaussian(self.blue_means[0], self.blue_stds[0])),
            (1.0 - self.blue_mix, RewardDist::gaussian(self.blue_means[1], self.blue_stds[1])),
        ])
    }
}

/// Two-state task: the pill taken picks the next world, and the reward comes
/// from the world the agent is currently in.
#[derive(Clone, Debug)]
pub struct Rpbp {
    config: RpbpConfig,
    red: Normal<f64>,
    blue: [Normal<f64>; 2],
}

impl Rpbp {
    pub fn new(config: RpbpConfig) -> Result<Self> {
        config.validate()?;
        let normal = |m: f64, s: f64| Normal::new(m, s).map_err(|e| invalid(e.to_string()));
        Ok(Self {
            red: normal(config.red_mean, config.red_std)?,
            blue: [
                normal(config.blue_means[0], config.blue_stds[0])?,
                normal(config.blue_means[1], config.blue_stds[1])?,
            ],
            config,
        })
    }

    pub fn config(&self) -> &RpbpConfig {
        &self.config
    }

    /// Uncapped-then-capped reward draw for a world.
    pub fn sample_reward(&self, state: usize, rng: &mut RngStream) -> f64 {
        let draw = if state == REDWORLD {
            self.red.sample(rng)
        } else {
            let u: f64 = rng.random();
            let k = if u < self.config.blue_mix { 0 } else { 1 };
            self.blue[k].sample(rng)
        };
        draw.min(self.config.reward_cap)
    }

    pub fn model(&self) -> MdpModel {
        let red = self.config.red_dist();
        let blue = self.config.blue_dist();
        MdpModel {
            states: vec!["redworld".into(), "blueworld".into()],
            actions: vec!["red_pill".into(), "blue_pill".into()],
            transitions: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]; 2],
            rewards: vec![vec![red.clone(), red], vec![blue.clone(), blue]],
            reward_cap: Some(self.config.reward_cap),
        }
    }
}

impl Default for Rpbp {
    fn default() -> Self {
        Self::new(RpbpConfig::default()).expect("default config is valid")
    }
}

/// Explicit model of the default red-pill blue-pill task.
pub fn rpbp_model() -> MdpModel {
    Rpbp::default().model()
}

impl Environment for Rpbp {
    type State = usize;

    fn num_actions(&self) -> usize {
        2
    }

    fn initial_state(&mut self, rng: &mut RngStream) -> usize {
        rng.random_range(0..2)
    }

    fn step(&mut self, state: &usize, action: usize, rng: &mut RngStream) -> EnvStep<usize> {
        assert!(*state < 2 && action < 2, "invalid state/action ({state}, {action})");
        let reward = self.sample_reward(*state, rng);
        EnvStep {
            reward,
            next_state: if action == RED_PILL { REDWORLD } else { BLUEWORLD },
            terminal: false,
        }
    }
}

impl TabularEnvironment for Rpbp {
    fn num_states(&self) -> usize {
        2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PendulumConfig {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub dt: f64,
    pub torques: Vec<f64>,
    pub max_speed: f64,
    pub angle_cost: f64,
    pub speed_cost: f64,
    pub torque_cost: f64,
    /// Steps between uniform state resets; 0 disables resets.
    pub reset_interval: usize,
    pub init_angle: (f64, f64),
    pub init_speed: (f64, f64),
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            dt: 0.05,
            torques: vec![-2.0, 0.0, 2.0],
            max_speed: 8.0,
            angle_cost: 1.0,
            speed_cost: 0.1,
            torque_cost: 0.001,
            reset_interval: 1000,
            init_angle: (-PI, PI),
            init_speed: (-1.0, 1.0),
        }
    }
}

impl PendulumConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("pendulum timestep must be positive"));
        }
        if self.torques.is_empty() {
            return Err(invalid("pendulum needs at least one torque"));
        }
        let positive = [self.gravity, self.mass, self.length, self.max_speed];
        if positive.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(invalid("pendulum gravity, mass, length and max speed must be positive"));
        }
        if [self.angle_cost, self.speed_cost, self.torque_cost].iter().any(|c| *c < 0.0) {
            return Err(invalid("pendulum cost weights must be non-negative"));
        }
        for (lo, hi) in [self.init_angle, self.init_speed] {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(invalid("pendulum init ranges must be ordered"));
            }
        }
        Ok(())
    }
}

/// `[angle, angular velocity]`, angle 0 upright.
pub type PendulumState = [f64; 2];

/// Wrap an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

#[derive(Clone, Debug)]
pub struct Pendulum {
    config: PendulumConfig,
    since_reset: usize,
}

impl Pendulum {
    pub fn new(config: PendulumConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            since_reset: 0,
        })
    }

    pub fn config(&self) -> &PendulumConfig {
        &self.config
    }

    pub fn reward(&self, state: &PendulumState, torque: f64) -> f64 {
        let c = &self.config;
        let [th, thdot] = *state;
        -(c.angle_cost * th * th + c.speed_cost * thdot * thdot + c.torque_cost * torque * torque)
    }

    /// Deterministic dynamics: velocity first, then angle from the new velocity.
    pub fn integrate(&self, state: &PendulumState, torque: f64) -> PendulumState {
        let c = &self.config;
        let [th, thdot] = *state;
        let accel = 3.0 * c.gravity / (2.0 * c.length) * th.sin()
            + 3.0 * torque / (c.mass * c.length * c.length);
        let v = (thdot + accel * c.dt).clamp(-c.max_speed, c.max_speed);
        [wrap_angle(th + v * c.dt), v]
    }

    /// Kinetic plus potential energy (uniform rod about its end).
    pub fn energy(&self, state: &PendulumState) -> f64 {
        let c = &self.config;
        let inertia = c.mass * c.length * c.length / 3.0;
        0.5 * inertia * state[1] * state[1] + c.mass * c.gravity * c.length / 2.0 * state[0].cos()
    }

    fn draw_state(&self, rng: &mut RngStream) -> PendulumState {
        let c = &self.config;
        let uniform = |rng: &mut RngStream, (lo, hi): (f64, f64)| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..hi)
            }
        };
        let th = uniform(rng, c.init_angle);
        let v = uniform(rng, c.init_speed);
        [wrap_angle(th), v.clamp(-c.max_speed, c.max_speed)]
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new(PendulumConfig::default()).expect("default config is valid")
    }
}

impl Environment for Pendulum {
    type State = PendulumState;

    fn num_actions(&self) -> usize {
        self.config.torques.len()
    }

    fn initial_state(&mut self, rng: &mut RngStream) -> PendulumState {
        self.since_reset = 0;
        self.draw_state(rng)
    }

    fn step(&mut self, state: &PendulumState, action: usize, rng: &mut RngStream) -> EnvStep<PendulumState> {
        let u = self.config.torques[action];
        let reward = self.reward(state, u);
        self.since_reset += 1;
        let next_state = if self.config.reset_interval > 0 && self.since_reset >= self.config.reset_interval {
            self.since_reset = 0;
            self.draw_state(rng)
        } else {
            self.integrate(state, u)
        };
        EnvStep {
            reward,
            next_state,
            terminal: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rpbp_transitions_follow_action() {
        let mut env = Rpbp::default();
        let mut rng = RngStream::new(0, "env");
        for s in 0..2 {
            assert_eq!(env.step(&s, BLUE_PILL, &mut rng).next_state, BLUEWORLD);
            assert_eq!(env.step(&s, RED_PILL, &mut rng).next_state, REDWORLD);
        }
    }

    #[test]
    fn rpbp_reward_moments() {
        let env = Rpbp::default();
        let mut rng = RngStream::new(7, "env");
        let n = 1_000_000;
        let red: Vec<f64> = (0..n).map(|_| env.sample_reward(REDWORLD, &mut rng)).collect();
        let mean = red.iter().sum::<f64>() / n as f64;
        let sd = (red.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert_abs_diff_eq!(mean, -0.7, epsilon = 1e-3);
        assert_abs_diff_eq!(sd, 0.05, epsilon = 1e-3);
        let blue = (0..n).map(|_| env.sample_reward(BLUEWORLD, &mut rng)).sum::<f64>() / n as f64;
        assert_abs_diff_eq!(blue, -0.6, epsilon = 1e-3);
    }

    #[test]
    fn rpbp_model_shape() {
        let m = rpbp_model();
        assert_eq!(m.transitions[REDWORLD][RED_PILL], vec![1.0, 0.0]);
        assert_abs_diff_eq!(m.rewards[REDWORLD][0].mean(), -0.7);
        assert_abs_diff_eq!(m.rewards[BLUEWORLD][1].mean(), -0.6, epsilon = 1e-15);
        m.validate().unwrap();
    }

    #[test]
    fn pendulum_fixed_points() {
        let mut env = Pendulum::default();
        let mut rng = RngStream::new(0, "env");
        let out = env.step(&[0.0, 0.0], 1, &mut rng);
        assert_eq!(out.reward, 0.0);
        assert_eq!(out.next_state, [0.0, 0.0]);
        let out = env.step(&[PI, 0.0], 1, &mut rng);
        assert_abs_diff_eq!(out.reward, -PI * PI, epsilon = 1e-12);
    }

    fn energy_trace(start: PendulumState) -> (f64, Vec<f64>) {
        let env = Pendulum::new(PendulumConfig {
            reset_interval: 0,
            ..PendulumConfig::default()
        })
        .unwrap();
        let mut s = start;
        let trace = (0..1000)
            .map(|_| {
                s = env.integrate(&s, 0.0);
                env.energy(&s)
            })
            .collect();
        (env.energy(&start), trace)
    }

    #[test]
    fn pendulum_energy_drift() {
        // swing of about 37 degrees around the bottom
        let (e0, trace) = energy_trace([2.5, 0.0]);
        let worst = trace.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs();
        assert!(worst < 0.05, "relative energy error {worst}");

        // large swings oscillate around the true energy without drifting away
        let (e0, trace) = energy_trace([1.0, 0.0]);
        let late = trace[900..].iter().sum::<f64>() / 100.0;
        assert!((late - e0).abs() / e0.abs() < 0.05);
    }

    #[test]
    fn pendulum_state_bounds() {
        let mut env = Pendulum::default();
        let mut rng = RngStream::new(4, "env");
        let mut s = env.initial_state(&mut rng);
        for t in 0..5000 {
            let out = env.step(&s, t % 3, &mut rng);
            assert!(out.reward <= 0.0);
            s = out.next_state;
            assert!((-PI..=PI).contains(&s[0]));
            assert!(s[1].abs() <= 8.0);
        }
    }
}
