//! Environment/agent contract, action selection and seeded random streams.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Outcome of one environment transition.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep<S> {
    pub reward: f64,
    pub next_state: S,
    /// Always false for the continuing tasks in this crate.
    pub terminal: bool,
}

pub trait Environment {
    type State: Clone;

    fn num_actions(&self) -> usize;

    fn initial_state(&mut self, rng: &mut RngStream) -> Self::State;

    fn step(&mut self, state: &Self::State, action: usize, rng: &mut RngStream)
        -> EnvStep<Self::State>;
}

/// An environment with a finite, indexable state set.
pub trait TabularEnvironment: Environment<State = usize> {
    fn num_states(&self) -> usize;
}

/// A labelled, seeded random stream.
///
/// Backed by ChaCha8 whose output is specified independently of platform and
/// word size. The label selects the ChaCha stream id (FNV-1a of the label), so
/// `("env", seed)` and `("policy", seed)` never share draws.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    label: String,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, label: &str) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(fnv1a(label.as_bytes()));
        Self {
            seed,
            label: label.to_owned(),
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Derive a child stream, e.g. one per bootstrap replicate.
    pub fn substream(&self, suffix: &str) -> Self {
        Self::new(self.seed, &format!("{}/{}", self.label, suffix))
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Per-step record of one run: the observed reward, the primary estimate
/// (average reward, or CVaR for the CVaR learners) and each subtask estimate
/// after the update, and the state/action the step started from.
///
/// `state` holds the state index for tabular environments and the pole angle
/// for the pendulum.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub reward: Vec<f64>,
    pub estimate: Vec<f64>,
    pub subtasks: Vec<Vec<f64>>,
    pub state: Vec<f64>,
    pub action: Vec<usize>,
}

impl Trajectory {
    pub fn with_capacity(steps: usize, num_subtasks: usize) -> Self {
        Self {
            reward: Vec::with_capacity(steps),
            estimate: Vec::with_capacity(steps),
            subtasks: vec![Vec::with_capacity(steps); num_subtasks],
            state: Vec::with_capacity(steps),
            action: Vec::with_capacity(steps),
        }
    }

    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    pub(crate) fn push(&mut self, state: f64, action: usize, reward: f64, estimate: f64, z: &[f64]) {
        self.state.push(state);
        self.action.push(action);
        self.reward.push(reward);
        self.estimate.push(estimate);
        for (series, zi) in self.subtasks.iter_mut().zip(z) {
            series.push(*zi);
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some(b) if *v <= values[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Epsilon-greedy action selection over one row of action values.
///
/// One uniform draw decides exploration; exploring picks uniformly over all
/// actions (including the greedy one), so the greedy action has probability
/// `1 - epsilon + epsilon / |A|`.
pub fn epsilon_greedy_select(q_row: &[f64], epsilon: f64, rng: &mut RngStream) -> Result<usize> {
    if q_row.is_empty() {
        return Err(invalid("empty action-value row"));
    }
    if q_row.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite action value"));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(invalid(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let u: f64 = rng.random();
    if u < epsilon {
        Ok(rng.random_range(0..q_row.len()))
    } else {
        Ok(argmax(q_row).expect("non-empty"))
    }
}

/// Softmax probabilities with max-subtraction.
pub fn softmax_probabilities(preferences: &[f64]) -> Result<Vec<f64>> {
    if preferences.is_empty() {
        return Err(invalid("empty preference vector"));
    }
    if preferences.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite preference"));
    }
    Ok(softmax_unchecked(preferences))
}

pub(crate) fn softmax_unchecked(preferences: &[f64]) -> Vec<f64> {
    let max = preferences.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = preferences.iter().map(|h| (h - max).exp()).collect();
    let total: f64 = p.iter().sum();
    for x in &mut p {
        *x /= total;
    }
    p
}

/// Draw an index from a probability vector using one uniform draw.
pub(crate) fn sample_index(probs: &[f64], rng: &mut RngStream) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left u above the final partial sum; take the last action with mass.
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

pub fn softmax_select(preferences: &[f64], rng: &mut RngStream) -> Result<(usize, Vec<f64>)> {
    let probs = softmax_probabilities(preferences)?;
    let a = sample_index(&probs, rng);
    Ok((a, probs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicyKind {
    EpsilonGreedy { epsilon: f64 },
    Softmax,
    Fixed,
    Explicit,
}

/// A stationary policy over a finite state set, stored as per-state
/// action probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretePolicy {
    kind: PolicyKind,
    probs: Vec<Vec<f64>>,
}

const PROB_TOL: f64 = 1e-12;

impl DiscretePolicy {
    pub fn from_probabilities(probs: Vec<Vec<f64>>) -> Result<Self> {
        Self::check(&probs)?;
        Ok(Self {
            kind: PolicyKind::Explicit,
            probs,
        })
    }

    /// Deterministic policy taking `actions[s]` in state `s`.
    pub fn fixed(actions: &[usize], num_actions: usize) -> Result<Self> {
        let mut p = Self::epsilon_greedy(actions, num_actions, 0.0)?;
        p.kind = PolicyKind::Fixed;
        Ok(p)
    }

    /// Epsilon-greedy around the given greedy actions.
    pub fn epsilon_greedy(greedy: &[usize], num_actions: usize, epsilon: f64) -> Result<Self> {
        if num_actions == 0 {
            return Err(invalid("policy needs at least one action"));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(invalid(format!("epsilon {epsilon} outside [0, 1]")));
        }
        let explore = epsilon / num_actions as f64;
        let mut probs = Vec::with_capacity(greedy.len());
        for &g in greedy {
            if g >= num_actions {
                return Err(invalid(format!("action {g} out of range")));
            }
            let mut row = vec![explore; num_actions];
            row[g] += 1.0 - epsilon;
            probs.push(row);
        }
        Ok(Self {
            kind: PolicyKind::EpsilonGreedy { epsilon },
            probs,
        })
    }

    /// Epsilon-greedy with respect to a table of action values.
    pub fn from_q(q: &[Vec<f64>], epsilon: f64) -> Result<Self> {
        let greedy: Vec<usize> = q
            .iter()
            .map(|row| argmax(row).ok_or_else(|| invalid("empty action-value row")))
            .collect::<Result<_>>()?;
        let n = q.first().map_or(0, Vec::len);
        Self::epsilon_greedy(&greedy, n, epsilon)
    }

    pub fn softmax(preferences: &[Vec<f64>]) -> Result<Self> {
        let probs = preferences
            .iter()
            .map(|h| softmax_probabilities(h))
            .collect::<Result<Vec<_>>>()?;
        Self::check(&probs)?;
        Ok(Self {
            kind: PolicyKind::Softmax,
            probs,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Result<Self> {
        if num_actions == 0 {
            return Err(invalid("policy needs at least one action"));
        }
        let row = vec![1.0 / num_actions as f64; num_actions];
        Self::from_probabilities(vec![row; num_states])
    }

    fn check(probs: &[Vec<f64>]) -> Result<()> {
        let n = probs.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(invalid("policy needs at least one state and action"));
        }
        for (s, row) in probs.iter().enumerate() {
            if row.len() != n {
                return Err(invalid(format!("state {s} has {} actions, expected {n}", row.len())));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(invalid(format!("state {s} has a negative or non-finite probability")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > PROB_TOL {
                return Err(invalid(format!("state {s} probabilities sum to {total}")));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    pub fn num_states(&self) -> usize {
        self.probs.len()
    }

    pub fn num_actions(&self) -> usize {
        self.probs.first().map_or(0, Vec::len)
    }

    pub fn probabilities(&self, state: usize) -> &[f64] {
        &self.probs[state]
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state][action]
    }

    pub fn sample(&self, state: usize, rng: &mut RngStream) -> usize {
        sample_index(&self.probs[state], rng)
    }
}

/// Importance-sampling ratio `target(a|s) / behavior(a|s)`.
pub fn importance_ratio(
    target: &DiscretePolicy,
    behavior: &DiscretePolicy,
    state: usize,
    action: usize,
) -> Result<f64> {
    if state >= target.num_states() || state >= behavior.num_states() {
        return Err(invalid(format!("state {state} out of range")));
    }
    if action >= target.num_actions() || action >= behavior.num_actions() {
        return Err(invalid(format!("action {action} out of range")));
    }
    let b = behavior.prob(state, action);
    if b <= 0.0 {
        return Err(Error::CoverageViolation { state, action });
    }
    Ok(target.prob(state, action) / b)
}
