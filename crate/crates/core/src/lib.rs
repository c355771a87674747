//! Workbench for evolving domain generalization.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor_nn`]: dense 64-bit matrices, MLPs with exact backprop, optimizers
//!   and a portable checkpoint format.
//! - [`synthetic_data`]: ordered domain sequences (EvolCircle, RPlate,
//!   RotatedCloud, rotated MNIST) plus IDX ingestion and a JSON-lines cache.
//! - [`dpnets`]: the directional prototypical network, trained on episodes whose
//!   support set comes from domain `i` and whose query set comes from `i + 1`.
//! - [`baselines`]: ERM, ERM on recent domains, domain-index-augmented ERM and
//!   the vanilla prototypical network.
//! - [`divergence_lab`]: exact finite-distribution KL/JS machinery and numerical
//!   certification of the target-risk bounds.
//! - [`harness`]: random search, multi-seed trials, sweeps and report emission.

pub mod baselines;
pub mod divergence_lab;
pub mod dpnets;
pub mod error;
pub mod harness;
pub mod parallel;
pub mod seed;
pub mod synthetic_data;
pub mod tensor_nn;

pub use error::{Error, Result};
