//! Risk-aware sequential planning over learned trajectory models.
//!
//! The crate decodes plans from an autoregressive token-level sequence model
//! with beam search, where the candidate-retention step is pluggable. The
//! headline strategy (WSTS) treats each candidate trajectory as an asset with
//! a predicted mean return and a predicted variance, solves a mean-variance
//! portfolio problem over the candidate set, and resamples the beam from the
//! resulting weights. Expectation-maximizing beam search (EM-BS) and
//! likelihood-driven top-K sampling are included as baselines.
//!
//! Modules, bottom of the stack first:
//!
//! - [`trajectory`] — transitions, reward-to-go augmentation, per-dimension
//!   discretization, the token frame layout, and offline-batch persistence.
//! - [`model`] — the conditional categorical model interface, a smoothed
//!   tabular Markov implementation, and moment extraction from token
//!   distributions.
//! - [`portfolio`] — the simplex-constrained mean-variance solver and its
//!   brute-force grid oracle.
//! - [`planner`] — the beam-search engine and the three retention strategies.
//! - [`envs`] — small stochastic test environments, behavior policies, and
//!   offline-batch generation.
//! - [`stats`] — interquartile means and stratified bootstrap confidence
//!   intervals.
//! - [`harness`] — MPC episode execution, multi-seed evaluation, strategy
//!   comparison, and report persistence. The `wsts` binary is a thin wrapper
//!   over this module.
//!
//! The `examples/` directory walks through each capability end to end; see
//! the README for the catalog.

pub mod envs;
pub mod harness;
pub mod model;
pub mod planner;
pub mod portfolio;
pub mod stats;
pub mod trajectory;

mod error;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Derive an independent stream seed from a base seed and a salt
/// (splitmix64 finalizer). Used everywhere a per-episode or per-step rng is
/// spawned from a top-level seed.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
