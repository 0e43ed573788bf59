//! Fusion of several concurrent object trackers through a hidden Markov model
//! over binary "which channel is currently correct" states.
//!
//! The model is learned online: an external high-precision detector partially
//! annotates the hidden state sequence, and a semi-supervised Baum-Welch
//! (generalized EM) learner refits the transition matrix and the beta-distributed
//! observable model at each accepted detection.
//!
//! Modules:
//! - [`hmm`]: state space, beta emission model, segmented forward-backward, learner.
//! - [`fusion`]: the per-frame engine with detection gating and reinitialization.
//! - [`detector`]: the statistical pieces of a feature-based detector.
//! - [`simulator`]: seeded synthetic scenarios, brute-force oracle, evaluation.
//! - [`trace`] / [`report`]: JSON-lines trace files and per-frame run reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod detector;
pub mod exec;
pub mod fusion;
pub mod hmm;
pub mod report;
pub mod simulator;
pub mod trace;

pub use exec::Execution;
