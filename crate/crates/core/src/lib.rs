//! Bayesian inference for multivariate mixed membership models over grouped
//! categorical data.
//!
//! Subjects answer `p` categorical questions split a priori into `G` groups.
//! Each subject holds, per group, a membership score between two extreme
//! profiles; the scores of different groups are dependent through a
//! multivariate logistic-normal law. The crate provides the Gibbs sampler
//! (Pólya-gamma augmented), a space-time variant of the score model, tensor
//! identities for the implied joint pmf, posterior predictive diagnostics and
//! synthetic-data generators.

pub mod archive;
pub mod data;
pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod gibbs;
pub mod linalg;
pub mod mlnd;
pub mod polya_gamma;
pub mod rng;
pub mod simgen;
pub mod spatiotemporal;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
