//! Piecewise-linear subtask functions and reward-extended TD errors.
//!
//! A subtask function maps an observed reward `r` and subtask estimates
//! `z_1..z_n` to an extended reward
//!
//! ```text
//! r~ = b_r^j * r + b_0^j + sum_i b_i^j * z_i
//! ```
//!
//! where `j` is the segment selected for `r`. Every `b_i^j` must be non-zero so
//! the function is invertible in each subtask. Segments are chosen either by
//! fixed reward breakpoints or by comparing `r` against one of the subtask
//! estimates (the CVaR function splits at the current VaR estimate).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which reward enters the subtask target of a segment.
///
/// `Observed` plugs the sampled reward into the segment formula.
/// `PrimaryEstimate` replaces it with the primary (average) estimate, i.e.
/// the conditional mean of the reward inside that segment at the fixed point.
/// The CVaR lower segment uses this form, which is what yields the familiar
/// `(tau / (tau - 1)) * delta + CVaR - VaR` update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetReward {
    #[default]
    Observed,
    PrimaryEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub reward_coef: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub subtask_coefs: Vec<f64>,
    #[serde(default)]
    pub target_reward: TargetReward,
}

impl Segment {
    pub fn new(reward_coef: f64, offset: f64, subtask_coefs: Vec<f64>) -> Self {
        Self {
            reward_coef,
            offset,
            subtask_coefs,
            target_reward: TargetReward::Observed,
        }
    }

    pub fn with_target(mut self, target: TargetReward) -> Self {
        self.target_reward = target;
        self
    }

    fn eval(&self, r: f64, z: &[f64]) -> f64 {
        let mut out = self.reward_coef * r + self.offset;
        for (b, zi) in self.subtask_coefs.iter().zip(z) {
            out += b * zi;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SegmentRule {
    /// Single segment over the whole reward line.
    Unbounded,
    /// `m + 1` weakly increasing breakpoints `r_0 <= .. <= r_m`. Segment `j`
    /// covers `[r_j, r_{j+1})`, the last one is closed.
    FixedBreakpoints { breakpoints: Vec<f64> },
    /// Two segments split at subtask estimate `subtask` (0-based):
    /// segment 0 is `r < z`, segment 1 is `r >= z`.
    EstimateRelative { subtask: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    EmptySegments,
    /// Both indices are 1-based for reporting.
    NonInvertible { subtask: usize, segment: usize },
    UnorderedBreakpoints,
    BreakpointCount { expected: usize, found: usize },
    SubtaskCount { segment: usize, expected: usize, found: usize },
    UnknownSplitSubtask { subtask: usize, available: usize },
    SegmentCount { rule: &'static str, expected: usize, found: usize },
    NonFinite,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySegments => write!(f, "no segments"),
            Violation::NonInvertible { subtask, segment } => {
                write!(f, "non-invertible in subtask {subtask} (segment {segment})")
            }
            Violation::UnorderedBreakpoints => write!(f, "breakpoints not ordered"),
            Violation::BreakpointCount { expected, found } => {
                write!(f, "expected {expected} breakpoints, found {found}")
            }
            Violation::SubtaskCount {
                segment,
                expected,
                found,
            } => write!(
                f,
                "segment {segment} has {found} subtask coefficients, expected {expected}"
            ),
            Violation::UnknownSplitSubtask { subtask, available } => write!(
                f,
                "split subtask {} does not exist ({available} subtasks)",
                subtask + 1
            ),
            Violation::SegmentCount {
                rule,
                expected,
                found,
            } => write!(f, "{rule} rule needs {expected} segments, found {found}"),
            Violation::NonFinite => write!(f, "non-finite coefficient or breakpoint"),
        }
    }
}

/// Raw, unvalidated form used for (de)serialisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubtaskFunctionSpec {
    pub rule: SegmentRule,
    pub segments: Vec<Segment>,
}

impl SubtaskFunctionSpec {
    /// Every violation of the subtask-function contract, empty when valid.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let m = self.segments.len();
        if m == 0 {
            out.push(Violation::EmptySegments);
            return out;
        }
        let n = self.segments[0].subtask_coefs.len();
        for (j, seg) in self.segments.iter().enumerate() {
            if seg.subtask_coefs.len() != n {
                out.push(Violation::SubtaskCount {
                    segment: j + 1,
                    expected: n,
                    found: seg.subtask_coefs.len(),
                });
            }
            if !seg.reward_coef.is_finite()
                || !seg.offset.is_finite()
                || seg.subtask_coefs.iter().any(|b| !b.is_finite())
            {
                out.push(Violation::NonFinite);
            }
            for (i, b) in seg.subtask_coefs.iter().enumerate() {
                if *b == 0.0 {
                    out.push(Violation::NonInvertible {
                        subtask: i + 1,
                        segment: j + 1,
                    });
                }
            }
        }
        match &self.rule {
            SegmentRule::Unbounded => {
                if m != 1 {
                    out.push(Violation::SegmentCount {
                        rule: "unbounded",
                        expected: 1,
                        found: m,
                    });
                }
            }
            SegmentRule::FixedBreakpoints { breakpoints } => {
                if breakpoints.len() != m + 1 {
                    out.push(Violation::BreakpointCount {
                        expected: m + 1,
                        found: breakpoints.len(),
                    });
                }
                if breakpoints.iter().any(|r| !r.is_finite()) {
                    out.push(Violation::NonFinite);
                }
                if breakpoints.windows(2).any(|w| w[0] > w[1]) {
                    out.push(Violation::UnorderedBreakpoints);
                }
            }
            SegmentRule::EstimateRelative { subtask } => {
                if m != 2 {
                    out.push(Violation::SegmentCount {
                        rule: "estimate-relative",
                        expected: 2,
                        found: m,
                    });
                }
                if *subtask >= n {
                    out.push(Violation::UnknownSplitSubtask {
                        subtask: *subtask,
                        available: n,
                    });
                }
            }
        }
        out
    }
}

/// A validated subtask function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SubtaskFunctionSpec", into = "SubtaskFunctionSpec")]
pub struct SubtaskFunction {
    rule: SegmentRule,
    segments: Vec<Segment>,
}

impl TryFrom<SubtaskFunctionSpec> for SubtaskFunction {
    type Error = Error;

    fn try_from(spec: SubtaskFunctionSpec) -> Result<Self> {
        let v = spec.violations();
        if !v.is_empty() {
            return Err(Error::InvalidSubtaskFunction(v));
        }
        Ok(Self {
            rule: spec.rule,
            segments: spec.segments,
        })
    }
}

impl From<SubtaskFunction> for SubtaskFunctionSpec {
    fn from(f: SubtaskFunction) -> Self {
        Self {
            rule: f.rule,
            segments: f.segments,
        }
    }
}

/// Validate a raw subtask function description; `Ok(())` or the full list of violations.
pub fn validate(spec: &SubtaskFunctionSpec) -> std::result::Result<(), Vec<Violation>> {
    let v = spec.violations();
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

impl SubtaskFunction {
    pub fn new(rule: SegmentRule, segments: Vec<Segment>) -> Result<Self> {
        SubtaskFunctionSpec { rule, segments }.try_into()
    }

    /// `r~ = r`, no subtasks.
    pub fn identity() -> Self {
        Self {
            rule: SegmentRule::Unbounded,
            segments: vec![Segment::new(1.0, 0.0, Vec::new())],
        }
    }

    /// A strictly linear function `b_r r + b_0 + sum_i b_i z_i`.
    pub fn linear(reward_coef: f64, offset: f64, subtask_coefs: Vec<f64>) -> Result<Self> {
        Self::new(
            SegmentRule::Unbounded,
            vec![Segment::new(reward_coef, offset, subtask_coefs)],
        )
    }

    pub fn num_subtasks(&self) -> usize {
        self.segments[0].subtask_coefs.len()
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn rule(&self) -> &SegmentRule {
        &self.rule
    }

    pub fn is_linear(&self) -> bool {
        self.segments.len() == 1
    }

    /// Index (0-based) of the segment that `r` falls in.
    ///
    /// A reward equal to an interior breakpoint belongs to the upper segment.
    /// Rewards outside `[r_0, r_m]` are clamped to the nearest segment.
    pub fn segment_index(&self, r: f64, z: &[f64]) -> usize {
        match &self.rule {
            SegmentRule::Unbounded => 0,
            SegmentRule::EstimateRelative { subtask } => {
                if r >= z[*subtask] {
                    1
                } else {
                    0
                }
            }
            SegmentRule::FixedBreakpoints { breakpoints } => {
                let m = self.segments.len();
                let (lo, hi) = (breakpoints[0], breakpoints[m]);
                if r < lo || r > hi {
                    log::warn!("reward {r} outside [{lo}, {hi}], clamping to nearest segment");
                }
                let above = breakpoints[1..m].iter().filter(|b| r >= **b).count();
                above.min(m - 1)
            }
        }
    }

    /// Value of segment `j`'s formula (regardless of where `r` falls).
    pub fn segment_reward(&self, j: usize, r: f64, z: &[f64]) -> f64 {
        self.segments[j].eval(r, z)
    }

    pub fn extended_reward(&self, r: f64, z: &[f64]) -> f64 {
        let j = self.segment_index(r, z);
        self.segments[j].eval(r, z)
    }

    /// Reward-extended TD error for subtask `i` (0-based).
    ///
    /// For a piecewise function with the transition's segment `j`:
    /// `beta_i = (-1 / b_i^j) * (r~_j - r_bar - delta)`.
    /// A single-segment function reduces to `beta_i = (-1 / b_i) * delta`.
    pub fn reward_extended_td_error(
        &self,
        i: usize,
        r: f64,
        z: &[f64],
        r_bar: f64,
        delta: f64,
    ) -> f64 {
        if self.is_linear() {
            return (-1.0 / self.segments[0].subtask_coefs[i]) * delta;
        }
        let j = self.segment_index(r, z);
        let seg = &self.segments[j];
        let r_target = match seg.target_reward {
            TargetReward::Observed => r,
            TargetReward::PrimaryEstimate => r_bar,
        };
        let target = seg.eval(r_target, z);
        (-1.0 / seg.subtask_coefs[i]) * (target - r_bar - delta)
    }

    pub fn reward_extended_td_errors(&self, r: f64, z: &[f64], r_bar: f64, delta: f64) -> Vec<f64> {
        (0..self.num_subtasks())
            .map(|i| self.reward_extended_td_error(i, r, z, r_bar, delta))
            .collect()
    }
}
