//! Core algorithms for a desk-scale study of chain-of-thought length
//! penalties in group-relative policy optimization.
//!
//! A tiny autoregressive policy emits a variable-length semantic plan
//! (the CoT) followed by a fixed block of scene tokens; a programmatic
//! reward ensemble scores the decoded scene against the symbolic prompt,
//! and four CoT-shortening strategies (cap / target / hard / soft) shape
//! the reward before group-normalized advantages drive a clipped-surrogate
//! update with an exact KL penalty against a frozen reference policy.
//!
//! Everything in this crate is pure computation over `alloc` collections:
//!
//! - [`env`] - synthetic text-to-scene task: prompts, vocabularies, scene
//!   decoding, and the three-model reward ensemble.
//! - [`policy`] - the autoregressive token model with exact log-probs,
//!   analytic gradients, and exact per-position KL.
//! - [`grpo`] - advantages, bi-level probability ratios, the clipped
//!   surrogate objective, and the adaptive-moment update step.
//! - [`penalties`] - the four length-shortening strategies and reward
//!   composition.
//! - [`trainer`] - verbose-CoT pretraining and the RL loop with snapshot
//!   discipline and a pluggable record sink.
//! - [`eval`] - benchmark scoring, length statistics, Pearson matrices,
//!   the CoT-necessity study, and token-cost accounting.
//!
//! File formats, configuration, and the command-line driver live in the
//! companion `shortcot` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod env;
pub mod error;
pub mod eval;
pub mod grpo;
pub mod penalties;
pub mod policy;
pub mod rng;
pub mod trainer;

pub use error::CoreError;

/// Token identifier in the shared vocabulary id space
/// (prompt ids, then semantic ids, then scene ids).
pub type Token = u32;
