//! CVaR instantiation: subtask function, VaR update and learner presets.
//!
//! The CVaR estimate sits in the learner's average-reward slot and the VaR
//! estimate is the single subtask. The extended reward is
//! `VaR - max(VaR - r, 0) / tau`, whose long-run mean at the optimal VaR is the
//! left-tail CVaR of the limiting reward distribution. The VaR update assumes a
//! continuous reward CDF.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linear::{AcStepSizes, ActorCritic, TileCoder};
use crate::subtask::{Segment, SegmentRule, SubtaskFunction, TargetReward};
use crate::tabular::{Behavior, StepSizeSchedule, TabularAgent, TabularLearnerState, TabularMethod};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvarParams {
    pub tau: f64,
    #[serde(default)]
    pub initial_var: f64,
    #[serde(default)]
    pub initial_cvar: f64,
}

impl CvarParams {
    pub fn new(tau: f64) -> Result<Self> {
        let p = Self {
            tau,
            initial_var: 0.0,
            initial_cvar: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(invalid(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.initial_var.is_finite() && self.initial_cvar.is_finite()) {
            return Err(invalid("initial VaR and CVaR must be finite"));
        }
        Ok(())
    }
}

/// Two estimate-relative segments: `r < VaR` gives `r / tau + (1 - 1/tau) VaR`,
/// `r >= VaR` gives `VaR`.
pub fn cvar_subtask_function(tau: f64) -> Result<SubtaskFunction> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(invalid(format!("tau must lie in (0, 1), got {tau}")));
    }
    SubtaskFunction::new(
        SegmentRule::EstimateRelative { subtask: 0 },
        vec![
            Segment::new(1.0 / tau, 0.0, vec![1.0 - 1.0 / tau]).with_target(TargetReward::PrimaryEstimate),
            Segment::new(0.0, 0.0, vec![1.0]),
        ],
    )
}

/// One VaR step given the TD error of the same transition and the
/// pre-update CVaR estimate.
pub fn var_update(var: f64, cvar: f64, delta: f64, r: f64, tau: f64, alpha_var: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(invalid(format!("tau must lie in (0, 1), got {tau}")));
    }
    if !(alpha_var >= 0.0) {
        return Err(invalid("VaR step size must be non-negative"));
    }
    Ok(if r >= var {
        var + alpha_var * (delta + cvar - var)
    } else {
        var + alpha_var * ((tau / (tau - 1.0)) * delta + cvar - var)
    })
}

/// Named learner configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    RedCvarQ,
    RedCvarAc,
    DiffQ,
    DiffAc,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::RedCvarQ, Preset::RedCvarAc, Preset::DiffQ, Preset::DiffAc];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::RedCvarQ => "red-cvar-q",
            Preset::RedCvarAc => "red-cvar-ac",
            Preset::DiffQ => "diff-q",
            Preset::DiffAc => "diff-ac",
        }
    }

    pub fn is_cvar(&self) -> bool {
        matches!(self, Preset::RedCvarQ | Preset::RedCvarAc)
    }

    pub fn is_tabular(&self) -> bool {
        matches!(self, Preset::RedCvarQ | Preset::DiffQ)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| invalid(format!("unknown preset {s:?}")))
    }
}

/// RED CVaR Q-learning with an epsilon-greedy behavior policy.
///
/// `schedule.eta_r_bar` scales the CVaR step and `schedule.eta_z[0]` the VaR step.
pub fn red_cvar_q_preset(
    params: &CvarParams,
    schedule: StepSizeSchedule,
    epsilon: f64,
    num_states: usize,
    num_actions: usize,
) -> Result<TabularAgent> {
    params.validate()?;
    if schedule.eta_z.len() != 1 {
        return Err(invalid("the CVaR learner takes exactly one VaR step size"));
    }
    let learner = TabularLearnerState::new_q(num_states, num_actions, schedule)
        .with_estimates(params.initial_cvar, vec![params.initial_var]);
    TabularAgent::new(
        TabularMethod::RedQ(cvar_subtask_function(params.tau)?),
        Behavior::EpsilonGreedy { epsilon },
        learner,
    )
}

/// RED CVaR actor-critic over tile-coded features.
pub fn red_cvar_ac_preset(
    params: &CvarParams,
    steps: AcStepSizes,
    coder: TileCoder,
    num_actions: usize,
) -> Result<ActorCritic> {
    params.validate()?;
    if steps.eta_z.len() != 1 {
        return Err(invalid("the CVaR learner takes exactly one VaR step size"));
    }
    let mut ac = ActorCritic::new(coder, num_actions, steps, Some(cvar_subtask_function(params.tau)?))?;
    ac.learner = ac.learner.with_estimates(params.initial_cvar, vec![params.initial_var]);
    Ok(ac)
}
