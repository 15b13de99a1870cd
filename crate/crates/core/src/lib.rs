//! Fairness-aware dataset distillation at desk scale.
//!
//! The crate is organized bottom-up:
//!
//! - [`datagen`] builds group-biased datasets (Gaussian and tiny colored images),
//!   balanced test splits and the corruption / label-noise / partial-label protocols.
//! - [`nets`] holds small ReLU MLPs with exact reverse-mode gradients with respect to
//!   parameters and inputs, an SGD trainer and trajectory recording.
//! - [`targets`] turns a frozen feature map into class-conditional subgroup statistics and
//!   builds the vanilla mixture, group-averaged, reweighted and barycentric targets, plus
//!   the residual geometry used to audit the worst-case subgroup mismatch.
//! - [`distill`] optimizes a synthetic set under distribution, gradient and trajectory
//!   matching against any of those targets.
//! - [`eval`] trains downstream classifiers on a synthetic set and reports accuracy and
//!   equalized-odds gaps.
//! - [`harness`] wires everything into configurable sweeps and the `verify` property suites.

// Validation uses `!(x > 0.0)` so that NaN is rejected along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod distill;
pub mod error;
pub mod eval;
pub mod harness;
pub mod nets;
pub mod rng;
pub mod targets;

pub use error::{Error, Result};
