//! Ground truth for finite MDPs: stationary distributions, average rewards,
//! Poisson-equation evaluation, analytic and Monte-Carlo CVaR, and brute-force
//! policy enumeration.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal as NormalSampler};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::mdp::{DiscretePolicy, RngStream};

const ROW_TOL: f64 = 1e-12;
const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 1_000_000;
const BOOTSTRAP_RESAMPLES: usize = 200;

/// Largest number of deterministic policies `enumerate_optimal_policy` visits.
pub const ENUMERATION_LIMIT: u128 = 1 << 16;

fn std_normal() -> Normal {
    Normal::standard()
}

/// Analytic per-step reward distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RewardDist {
    PointMass { value: f64 },
    Gaussian { mean: f64, std: f64 },
    Mixture { components: Vec<MixtureComponent> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub dist: RewardDist,
}

impl RewardDist {
    pub fn gaussian(mean: f64, std: f64) -> Self {
        RewardDist::Gaussian { mean, std }
    }

    pub fn mixture(parts: Vec<(f64, RewardDist)>) -> Self {
        RewardDist::Mixture {
            components: parts
                .into_iter()
                .map(|(weight, dist)| MixtureComponent { weight, dist })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RewardDist::PointMass { value } if value.is_finite() => Ok(()),
            RewardDist::PointMass { .. } => Err(invalid("point mass must be finite")),
            RewardDist::Gaussian { mean, std } => {
                if mean.is_finite() && std.is_finite() && *std > 0.0 {
                    Ok(())
                } else {
                    Err(invalid(format!("gaussian needs finite mean and std > 0, got ({mean}, {std})")))
                }
            }
            RewardDist::Mixture { components } => {
                if components.is_empty() {
                    return Err(invalid("mixture has no components"));
                }
                if components.iter().any(|c| !(c.weight >= 0.0 && c.weight.is_finite())) {
                    return Err(invalid("mixture weights must be non-negative"));
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(invalid(format!("mixture weights sum to {total}")));
                }
                components.iter().try_for_each(|c| c.dist.validate())
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            RewardDist::PointMass { value } => *value,
            RewardDist::Gaussian { mean, .. } => *mean,
            RewardDist::Mixture { components } => {
                components.iter().map(|c| c.weight * c.dist.mean()).sum()
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            RewardDist::PointMass { value } => {
                if x >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            RewardDist::Gaussian { mean, std } => std_normal().cdf((x - mean) / std),
            RewardDist::Mixture { components } => {
                components.iter().map(|c| c.weight * c.dist.cdf(x)).sum()
            }
        }
    }

    /// `E[X; X <= q]`.
    pub fn partial_expectation(&self, q: f64) -> f64 {
        match self {
            RewardDist::PointMass { value } => {
                if q >= *value {
                    *value
                } else {
                    0.0
                }
            }
            RewardDist::Gaussian { mean, std } => {
                let z = (q - mean) / std;
                let n = std_normal();
                mean * n.cdf(z) - std * n.pdf(z)
            }
            RewardDist::Mixture { components } => components
                .iter()
                .map(|c| c.weight * c.dist.partial_expectation(q))
                .sum(),
        }
    }

    fn support_hint(&self) -> (f64, f64) {
        match self {
            RewardDist::PointMass { value } => (*value, *value),
            RewardDist::Gaussian { mean, std } => (mean - 40.0 * std, mean + 40.0 * std),
            RewardDist::Mixture { components } => components
                .iter()
                .filter(|c| c.weight > 0.0)
                .map(|c| c.dist.support_hint())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| (lo.min(a), hi.max(b))),
        }
    }

    /// Lower `tau`-quantile `inf { q : F(q) >= tau }`.
    pub fn value_at_risk(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        if let RewardDist::PointMass { value } = self {
            return Ok(*value);
        }
        if let RewardDist::Gaussian { mean, std } = self {
            return Ok(mean + std * std_normal().inverse_cdf(tau));
        }
        let (mut lo, mut hi) = self.support_hint();
        lo -= 1.0;
        hi += 1.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) >= tau {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// Left-tail CVaR: the mean of the worst `tau` probability mass.
    pub fn cvar(&self, tau: f64) -> Result<f64> {
        if let RewardDist::PointMass { value } = self {
            check_tau(tau)?;
            return Ok(*value);
        }
        if let RewardDist::Gaussian { mean, std } = self {
            return normal_cvar(*mean, *std, tau);
        }
        let q = self.value_at_risk(tau)?;
        Ok(q - (q * self.cdf(q) - self.partial_expectation(q)) / tau)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            RewardDist::PointMass { value } => *value,
            RewardDist::Gaussian { mean, std } => NormalSampler::new(*mean, *std)
                .expect("validated gaussian")
                .sample(rng),
            RewardDist::Mixture { components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for c in components {
                    acc += c.weight;
                    if u < acc {
                        return c.dist.sample(rng);
                    }
                }
                components.last().expect("non-empty mixture").dist.sample(rng)
            }
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("tau must lie in (0, 1), got {tau}")))
    }
}

/// Finite MDP with analytic reward descriptors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpModel {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    /// `transitions[s][a][s']`
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `rewards[s][a]`
    pub rewards: Vec<Vec<RewardDist>>,
    /// Sampled rewards are clipped to at most this value. Analytic quantities
    /// ignore the cap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_cap: Option<f64>,
}

impl MdpModel {
    pub fn new(
        states: Vec<String>,
        actions: Vec<String>,
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<RewardDist>>,
    ) -> Result<Self> {
        let m = Self {
            states,
            actions,
            transitions,
            rewards,
            reward_cap: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_reward_cap(mut self, cap: f64) -> Self {
        self.reward_cap = Some(cap);
        self
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (ns, na) = (self.num_states(), self.num_actions());
        if ns == 0 || na == 0 {
            return Err(invalid("model needs at least one state and one action"));
        }
        if self.transitions.len() != ns || self.rewards.len() != ns {
            return Err(invalid("transition and reward tables need one entry per state"));
        }
        for s in 0..ns {
            if self.transitions[s].len() != na || self.rewards[s].len() != na {
                return Err(invalid(format!("state {s}: expected {na} actions")));
            }
            for a in 0..na {
                let row = &self.transitions[s][a];
                if row.len() != ns {
                    return Err(invalid(format!("P({s},{a}) has {} entries, expected {ns}", row.len())));
                }
                check_row(row, &format!("P({s},{a})"))?;
                self.rewards[s][a].validate()?;
            }
        }
        Ok(())
    }

    /// Parse from TOML (`.toml`) or JSON (anything else).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let model: MdpModel = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text)?
        } else {
            serde_json::from_str(&text)?
        };
        model.validate()?;
        Ok(model)
    }

    pub fn sample_reward<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> f64 {
        let r = self.rewards[s][a].sample(rng);
        match self.reward_cap {
            Some(cap) => r.min(cap),
            None => r,
        }
    }

    fn check_policy(&self, policy: &DiscretePolicy) -> Result<()> {
        if policy.num_states() != self.num_states() || policy.num_actions() != self.num_actions() {
            return Err(invalid(format!(
                "policy is {}x{}, model is {}x{}",
                policy.num_states(),
                policy.num_actions(),
                self.num_states(),
                self.num_actions()
            )));
        }
        Ok(())
    }

    /// State-to-state kernel under `policy`.
    pub fn policy_transition_matrix(&self, policy: &DiscretePolicy) -> Result<DMatrix<f64>> {
        self.check_policy(policy)?;
        let n = self.num_states();
        Ok(DMatrix::from_fn(n, n, |s, s2| {
            (0..self.num_actions())
                .map(|a| policy.prob(s, a) * self.transitions[s][a][s2])
                .sum()
        }))
    }

    /// Expected one-step reward in each state under `policy`.
    pub fn policy_reward_vector(&self, policy: &DiscretePolicy) -> Result<DVector<f64>> {
        self.check_policy(policy)?;
        Ok(DVector::from_fn(self.num_states(), |s, _| {
            (0..self.num_actions())
                .map(|a| policy.prob(s, a) * self.rewards[s][a].mean())
                .sum()
        }))
    }
}

fn check_row(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(invalid(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_TOL {
        return Err(invalid(format!("{what} sums to {total}")));
    }
    Ok(())
}

/// Stationary distribution of a unichain transition matrix.
///
/// Solves `mu^T (P - I) = 0, sum(mu) = 1` directly and falls back to lazy
/// power iteration when the solve fails or leaves a residual above 1e-8.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p.nrows();
    if n == 0 || p.ncols() != n {
        return Err(invalid("transition matrix must be square and non-empty"));
    }
    for s in 0..n {
        let row: Vec<f64> = p.row(s).iter().copied().collect();
        check_row(&row, &format!("row {s}"))?;
    }
    if let Some(mu) = direct_stationary(p) {
        return Ok(mu);
    }
    power_stationary(p)
}

fn stationary_residual(p: &DMatrix<f64>, mu: &DVector<f64>) -> f64 {
    (p.transpose() * mu - mu).amax()
}

fn direct_stationary(p: &DMatrix<f64>) -> Option<Vec<f64>> {
    let n = p.nrows();
    let mut a = p.transpose() - DMatrix::identity(n, n);
    a.row_mut(n - 1).fill(1.0);
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let mu = a.lu().solve(&b)?;
    if mu.iter().any(|x| !x.is_finite() || *x < -1e-10) || stationary_residual(p, &mu) > 1e-8 {
        return None;
    }
    let mu = mu.map(|x| x.max(0.0));
    let total = mu.sum();
    Some(mu.iter().map(|x| x / total).collect())
}

fn power_stationary(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p.nrows();
    let pt = p.transpose();
    let mut mu = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..POWER_MAX_ITERS {
        // Averaging with the identity keeps periodic chains from oscillating.
        let next = 0.5 * (&pt * &mu + &mu);
        let change = (&next - &mu).amax();
        mu = next;
        if change < POWER_TOL {
            let total = mu.sum();
            return Ok(mu.iter().map(|x| x / total).collect());
        }
    }
    Err(Error::Numeric("power iteration did not converge".into()))
}

/// Long-run reward per step of `policy`.
pub fn exact_average_reward(model: &MdpModel, policy: &DiscretePolicy) -> Result<f64> {
    let mu = stationary_distribution(&model.policy_transition_matrix(policy)?)?;
    let r = model.policy_reward_vector(policy)?;
    Ok(mu.iter().zip(r.iter()).map(|(m, r)| m * r).sum())
}

/// Average reward and differential values (with `v[0] = 0`) of a policy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyEvaluation {
    pub average_reward: f64,
    pub values: Vec<f64>,
    /// Largest absolute residual of `v(s) = r(s) - r_bar + sum P(s,s') v(s')`.
    pub residual: f64,
}

/// Solve the average-reward Bellman equations with `v(s0) = 0`.
pub fn exact_policy_evaluation(model: &MdpModel, policy: &DiscretePolicy) -> Result<PolicyEvaluation> {
    let p = model.policy_transition_matrix(policy)?;
    let r = model.policy_reward_vector(policy)?;
    let n = model.num_states();
    // Unknowns: x[0] = r_bar, x[k] = v(k) for k >= 1.
    let mut a = DMatrix::zeros(n, n);
    for s in 0..n {
        a[(s, 0)] = 1.0;
        for k in 1..n {
            let own = if s == k { 1.0 } else { 0.0 };
            a[(s, k)] = own - p[(s, k)];
        }
    }
    let x = a
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::Numeric("Poisson system is singular (policy not unichain?)".into()))?;
    let r_bar = x[0];
    let mut v = DVector::zeros(n);
    for k in 1..n {
        v[k] = x[k];
    }
    let residual = (&r - DVector::from_element(n, r_bar) + &p * &v - &v).amax();
    if !residual.is_finite() || residual > 1e-8 {
        return Err(Error::Numeric(format!("Poisson residual {residual} exceeds 1e-8")));
    }
    Ok(PolicyEvaluation {
        average_reward: r_bar,
        values: v.iter().copied().collect(),
        residual,
    })
}

/// Left-tail CVaR of a Gaussian: `mu - sigma * phi(Phi^-1(tau)) / tau`.
pub fn normal_cvar(mu: f64, sigma: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
        return Err(invalid(format!("need finite mean and sigma > 0, got ({mu}, {sigma})")));
    }
    let n = std_normal();
    Ok(mu - sigma * n.pdf(n.inverse_cdf(tau)) / tau)
}

/// Monte-Carlo CVaR estimate with a bootstrap standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McCvar {
    pub cvar: f64,
    pub var: f64,
    pub std_error: f64,
}

fn tail_stats(samples: &mut [f64], tau: f64) -> (f64, f64) {
    let k = ((tau * samples.len() as f64).ceil() as usize).clamp(1, samples.len());
    let (low, kth, _) = samples.select_nth_unstable_by(k - 1, f64::total_cmp);
    let kth = *kth;
    let sum: f64 = low.iter().sum::<f64>() + kth;
    (sum / k as f64, kth)
}

/// Mean of the lowest `ceil(tau * n)` of `n` draws from `sampler`.
///
/// The standard error comes from 200 bootstrap resamples; each resample uses
/// its own sub-stream of `rng`, so the result does not depend on thread count.
pub fn mc_cvar<F>(mut sampler: F, tau: f64, n: usize, rng: &mut RngStream) -> Result<McCvar>
where
    F: FnMut(&mut RngStream) -> f64,
{
    check_tau(tau)?;
    if n < 1000 {
        return Err(invalid(format!("mc_cvar needs at least 1000 samples, got {n}")));
    }
    let samples: Vec<f64> = (0..n).map(|_| sampler(rng)).collect();
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("sampler produced a non-finite value".into()));
    }
    let mut scratch = samples.clone();
    let (cvar, var) = tail_stats(&mut scratch, tau);
    let base: u64 = rng.random();
    let boots: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|b| {
            let mut r = RngStream::new(base, &format!("bootstrap/{b}"));
            let mut resample: Vec<f64> = (0..n).map(|_| samples[r.random_range(0..n)]).collect();
            tail_stats(&mut resample, tau).0
        })
        .collect();
    let m = boots.iter().sum::<f64>() / boots.len() as f64;
    let var_b = boots.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (boots.len() - 1) as f64;
    Ok(McCvar {
        cvar,
        var,
        std_error: var_b.sqrt(),
    })
}

/// Stationary mixture of per-(s, a) reward distributions under `policy`.
pub fn limiting_reward_distribution(model: &MdpModel, policy: &DiscretePolicy) -> Result<RewardDist> {
    let mu = stationary_distribution(&model.policy_transition_matrix(policy)?)?;
    let mut parts = Vec::new();
    for (s, m) in mu.iter().enumerate() {
        for a in 0..model.num_actions() {
            let w = m * policy.prob(s, a);
            if w > 0.0 {
                parts.push((w, model.rewards[s][a].clone()));
            }
        }
    }
    let total: f64 = parts.iter().map(|(w, _)| w).sum();
    for (w, _) in &mut parts {
        *w /= total;
    }
    Ok(RewardDist::mixture(parts))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Objective {
    AverageReward,
    Cvar { tau: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyScore {
    pub actions: Vec<usize>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimalPolicy {
    pub actions: Vec<usize>,
    pub value: f64,
    /// Every deterministic policy in enumeration order.
    pub all: Vec<PolicyScore>,
}

/// Score of a deterministic policy executed epsilon-greedily.
pub fn evaluate_deterministic(
    model: &MdpModel,
    actions: &[usize],
    objective: Objective,
    epsilon: f64,
) -> Result<f64> {
    let policy = DiscretePolicy::epsilon_greedy(actions, model.num_actions(), epsilon)?;
    match objective {
        Objective::AverageReward => exact_average_reward(model, &policy),
        Objective::Cvar { tau } => limiting_reward_distribution(model, &policy)?.cvar(tau),
    }
}

/// Best deterministic policy (executed epsilon-greedily) by exhaustive search.
///
/// Policy `k` assigns state `s` the `s`-th base-`|A|` digit of `k`, least
/// significant first; ties keep the lowest `k`.
pub fn enumerate_optimal_policy(model: &MdpModel, objective: Objective, epsilon: f64) -> Result<OptimalPolicy> {
    model.validate()?;
    if let Objective::Cvar { tau } = objective {
        check_tau(tau)?;
    }
    let (ns, na) = (model.num_states() as u32, model.num_actions() as u128);
    let count = na.checked_pow(ns).unwrap_or(u128::MAX);
    if count > ENUMERATION_LIMIT {
        return Err(Error::Capacity {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut all = Vec::with_capacity(count as usize);
    let mut best: Option<(usize, f64)> = None;
    for k in 0..count {
        let mut rest = k;
        let actions: Vec<usize> = (0..ns)
            .map(|_| {
                let a = (rest % na) as usize;
                rest /= na;
                a
            })
            .collect();
        let value = evaluate_deterministic(model, &actions, objective, epsilon)?;
        if best.is_none_or(|(_, v)| value > v) {
            best = Some((all.len(), value));
        }
        all.push(PolicyScore { actions, value });
    }
    let (i, value) = best.expect("at least one policy");
    Ok(OptimalPolicy {
        actions: all[i].actions.clone(),
        value,
        all,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_state(rows: [[f64; 2]; 2]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[rows[0][0], rows[0][1], rows[1][0], rows[1][1]])
    }

    #[test]
    fn stationary_examples() {
        let mu = stationary_distribution(&two_state([[0.95, 0.05], [0.95, 0.05]])).unwrap();
        assert_abs_diff_eq!(mu[0], 0.95, epsilon = 1e-12);
        let mu = stationary_distribution(&two_state([[0.0, 1.0], [1.0, 0.0]])).unwrap();
        assert_abs_diff_eq!(mu[0], 0.5, epsilon = 1e-12);
        assert!(stationary_distribution(&two_state([[0.5, 0.6], [1.0, 0.0]])).is_err());
    }

    #[test]
    fn power_iteration_agrees_with_direct_solve() {
        let p = DMatrix::from_row_slice(3, 3, &[0.1, 0.6, 0.3, 0.5, 0.0, 0.5, 0.2, 0.2, 0.6]);
        let direct = direct_stationary(&p).unwrap();
        let power = power_stationary(&p).unwrap();
        for (a, b) in direct.iter().zip(&power) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn single_state_evaluation() {
        let m = MdpModel::new(
            vec!["s".into()],
            vec!["a".into()],
            vec![vec![vec![1.0]]],
            vec![vec![RewardDist::gaussian(0.3, 1.0)]],
        )
        .unwrap();
        let pol = DiscretePolicy::uniform(1, 1).unwrap();
        let ev = exact_policy_evaluation(&m, &pol).unwrap();
        assert_abs_diff_eq!(ev.average_reward, 0.3, epsilon = 1e-15);
        assert_eq!(ev.values, vec![0.0]);
    }

    #[test]
    fn normal_cvar_examples() {
        assert_abs_diff_eq!(normal_cvar(0.0, 1.0, 0.5).unwrap(), -0.7978845608, epsilon = 1e-9);
        assert_abs_diff_eq!(normal_cvar(-0.7, 0.05, 0.25).unwrap(), -0.7636, epsilon = 1e-4);
        assert_abs_diff_eq!(normal_cvar(-0.7, 0.05, 0.999).unwrap(), -0.7, epsilon = 1e-3);
        assert!(normal_cvar(0.0, 0.0, 0.5).is_err());
        assert!(normal_cvar(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn mixture_cvar_matches_component_tail() {
        let blue = RewardDist::mixture(vec![
            (0.5, RewardDist::gaussian(-1.0, 0.05)),
            (0.5, RewardDist::gaussian(-0.2, 0.05)),
        ]);
        let expected = -1.0 - 0.05 * (1.0 / (2.0 * std::f64::consts::PI).sqrt()) / 0.5;
        assert_abs_diff_eq!(blue.cvar(0.25).unwrap(), expected, epsilon = 1e-9);
        assert_abs_diff_eq!(blue.mean(), -0.6, epsilon = 1e-15);
    }

    #[test]
    fn point_mass_cvar_and_atoms() {
        assert_eq!(RewardDist::PointMass { value: 2.0 }.cvar(0.3).unwrap(), 2.0);
        // Atoms at 0 and 1 with mass 1/2 each: worst 25% is all zeros,
        // worst 75% averages (0.5 * 0 + 0.25 * 1) / 0.75.
        let d = RewardDist::mixture(vec![
            (0.5, RewardDist::PointMass { value: 0.0 }),
            (0.5, RewardDist::PointMass { value: 1.0 }),
        ]);
        assert_abs_diff_eq!(d.cvar(0.25).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.cvar(0.75).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn mc_cvar_point_mass_is_exact() {
        let mut rng = RngStream::new(1, "oracle");
        let est = mc_cvar(|_| -0.25, 0.3, 1000, &mut rng).unwrap();
        assert_eq!(est.cvar, -0.25);
        assert_eq!(est.std_error, 0.0);
        assert!(mc_cvar(|_| 0.0, 0.3, 999, &mut rng).is_err());
    }

    #[test]
    fn mc_cvar_is_reproducible() {
        let d = RewardDist::gaussian(0.0, 1.0);
        let a = mc_cvar(|r| d.sample(r), 0.1, 5000, &mut RngStream::new(3, "mc")).unwrap();
        let b = mc_cvar(|r| d.sample(r), 0.1, 5000, &mut RngStream::new(3, "mc")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn model_serialization_roundtrip() {
        let m = MdpModel::new(
            vec!["a".into(), "b".into()],
            vec!["x".into()],
            vec![vec![vec![0.5, 0.5]], vec![vec![1.0, 0.0]]],
            vec![
                vec![RewardDist::PointMass { value: 1.0 }],
                vec![RewardDist::mixture(vec![(1.0, RewardDist::gaussian(0.0, 2.0))])],
            ],
        )
        .unwrap()
        .with_reward_cap(0.0);
        let text = toml::to_string(&m).unwrap();
        let back: MdpModel = toml::from_str(&text).unwrap();
        assert_eq!(back, m);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<MdpModel>(&json).unwrap(), m);
    }

    #[test]
    fn enumeration_capacity() {
        let n = 17;
        let m = MdpModel::new(
            (0..n).map(|i| i.to_string()).collect(),
            vec!["l".into(), "r".into()],
            vec![vec![vec![1.0 / n as f64; n]; 2]; n],
            vec![vec![RewardDist::PointMass { value: 0.0 }; 2]; n],
        )
        .unwrap();
        assert!(matches!(
            enumerate_optimal_policy(&m, Objective::AverageReward, 0.1),
            Err(Error::Capacity { .. })
        ));
    }
}
