//! Bayesian nonparametric tests for multivariate location.
//!
//! The one-sample and two-sample tests place a Dirichlet-process prior on the
//! data distribution, draw from the posterior of the spatial-median functional
//! by truncated stick-breaking (or the Bayesian bootstrap), and reject when the
//! hypothesized location falls outside an elliptical credible region.
//!
//! Around that core sit the classical spatial sign/rank score tests, a
//! chi-square Hotelling variant, local asymptotic power under contiguous
//! alternatives, generators for the simulation families, and a reproducible
//! power-study harness.
//!
//! ```
//! use spatial_bnp::bnp::{one_sample_test, BnpConfig};
//! use spatial_bnp::dp::Posterior;
//! use spatial_bnp::datagen::DistributionSpec;
//! use spatial_bnp::seed::SeedStream;
//!
//! let truth = DistributionSpec::standard_gaussian(2);
//! let data = truth.sample(100, &mut SeedStream::new(7).rng()).unwrap();
//! let config = BnpConfig { draws: 200, ..BnpConfig::default() };
//! let result = one_sample_test(&data, &[0.0, 0.0], &Posterior::BayesianBootstrap, &config, SeedStream::new(1)).unwrap();
//! assert!(result.outcome.statistic >= 0.0);
//! ```

#![forbid(unsafe_code)]

pub mod asymptotics;
pub mod bnp;
pub mod classical;
pub mod datagen;
pub mod dp;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod sample;
pub mod seed;
pub mod spatial;

pub use error::{Error, Result};
pub use sample::Sample;
