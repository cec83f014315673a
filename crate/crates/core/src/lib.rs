//! Reward-extended differential (RED) learning for average-reward MDPs.
//!
//! The crate is organised bottom-up:
//!
//! - [`mdp`]: agent/environment contract, action selection, seeded RNG streams.
//! - [`subtask`]: piecewise-linear subtask functions, extended rewards and
//!   reward-extended TD errors.
//! - [`tabular`]: Differential TD/Q and RED TD/Q learners plus a driver loop.
//! - [`linear`]: tile coding and the Differential / RED actor-critic learners.
//! - [`cvar`]: the CVaR subtask function, the VaR update and named presets.
//! - [`env`]: the red-pill blue-pill task and a continuing inverted pendulum.
//! - [`oracle`]: stationary distributions, Poisson-equation evaluation,
//!   analytic and Monte-Carlo CVaR, brute-force policy enumeration.
//! - [`harness`]: experiment configs, runs, sweeps, rolling metrics and CSV output.

pub mod cvar;
pub mod env;
pub mod error;
pub mod harness;
pub mod linear;
pub mod mdp;
pub mod oracle;
pub mod subtask;
pub mod tabular;

pub use error::{Error, Result};
