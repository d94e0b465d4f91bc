//! Gibbs sampler for the two-profile multivariate mixed membership model.
//!
//! One sweep updates, in order: kernels, profile indicators, Pólya-gamma
//! auxiliaries, the score mean (scores integrated out), the scores, and the
//! score covariance. Subject-level steps run in parallel on keyed streams, so
//! results do not depend on the worker count.

mod chain;
mod state;
pub mod steps;

pub use chain::{
    drive, init_state, mu_mean, run_chain, ChainConfig, ChainMeta, ChainSamples, Draw, GibbsSampler, RetainFields,
    SweepOrder, Sweeper,
};
pub use state::{ChainState, KernelSet, LatentState};
pub use steps::{
    covariance_conditional, indicator_probability, kernel_posterior_params, mean_conditional, score_conditional,
    update_indicators, update_kernels, update_lambda, update_mu, update_omega, update_sigma, PseudoObservation,
    SweepStreams,
};
