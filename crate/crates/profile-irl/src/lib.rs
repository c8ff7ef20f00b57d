//! Reward learning from demonstrations of heterogeneous quality.
//!
//! The central object is an *optimality profile*: a distribution over
//! (discounted) returns that summarizes how good a set of demonstrations is.
//! A parametric reward function is fitted so that the return distribution it
//! induces on the demonstration suffixes matches the profile under a 1-D
//! Wasserstein discrepancy, with pairwise-ranking and fixed-value losses as
//! auxiliary supervision. Learned rewards are evaluated by re-optimizing
//! policies on small enumerable gridworld MDPs.
//!
//! Module map:
//! - [`mdp`]: finite MDPs, policies, trajectory sampling/enumeration, value iteration
//! - [`presets`]: the gridworld instances used throughout the tests and CLI
//! - [`distributions`]: suffix augmentation, return distributions, push-forward measures
//! - [`ot`]: exact and entropy-regularized 1-D transport plans, the transport loss
//! - [`reward`]: tabular/MLP reward models with analytic gradients, loss terms
//! - [`trainer`]: the minibatched fitting loop with schedules and checkpoints
//! - [`eval`]: correlation analysis, policy re-optimization, ablation/noise/gamma sweeps
//! - [`io`]: versioned JSON/JSONL/CSV artifacts shared with the CLI

pub mod distributions;
pub mod error;
pub mod eval;
pub mod io;
pub mod mdp;
pub mod ot;
pub mod presets;
pub mod reward;
pub mod trainer;

pub use error::{Error, Result};
