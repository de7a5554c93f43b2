//! Fixed-confidence best-arm identification for heteroscedastic Gaussian
//! bandits, applied to mmWave beam alignment.
//!
//! - [`channel`]: array responses, DFT codebook, multipath channels, grouped beams.
//! - [`bandit`]: instances with reward law N(μ, 2μσ²) and running statistics.
//! - [`glr`]: divergences, GLR stopping statistic, optimal weights, bounds.
//! - [`algorithms`]: HT&S, T&S, EBA and their two-phase drivers.
//! - [`harness`]: scenario configs, Monte Carlo runs, CSV reports.
//! - [`cli`]: the `beam-bai` command line.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common `f64` instantiations.

pub mod algorithms;
pub mod bandit;
pub mod channel;
pub mod cli;
pub mod glr;
pub mod harness;
pub mod scalar;

pub use scalar::Scalar;

pub type Channel64 = channel::Channel<f64>;
pub type Codebook64 = channel::Codebook<f64>;
pub type BanditInstance64 = bandit::BanditInstance<f64>;
pub type TrackingState64 = bandit::TrackingState<f64>;
pub type Heteroscedastic64 = glr::Heteroscedastic<f64>;
pub type WeightSolution64 = glr::WeightSolution<f64>;
pub type BeamOracle64 = algorithms::BeamOracle<f64>;

pub type Channel32 = channel::Channel<f32>;
pub type BanditInstance32 = bandit::BanditInstance<f32>;
