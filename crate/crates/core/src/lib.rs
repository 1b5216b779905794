//! Simulation and likelihood-based inference for spatiotemporal partially
//! observed Markov process (SpatPOMP) metapopulation models.
//!
//! The crate provides a stochastic SEAIR metapopulation model driven by
//! inter-unit mobility, block and bootstrap particle filters, an ensemble
//! Kalman filter, iterated block particle filtering for maximum likelihood,
//! negative-binomial benchmarks, MCAP profile intervals and per-observation
//! log-likelihood anomalies.
//!
//! Loops over particles, replicates and grid points run on rayon when the
//! `parallel` feature is on and [`Execution::Parallel`] is requested. Every
//! random draw comes from a stream keyed by what it is for, so results do
//! not depend on the execution mode or thread count.

pub mod anomaly;
pub mod benchmarks;
pub mod error;
pub mod exec;
pub mod filters;
pub mod ibpf;
pub mod mobility;
pub mod pomp;
pub mod profile;
pub mod rng;
pub mod seair;
pub mod stats;
pub mod synthetic;
pub mod toy;

pub use error::{Error, Result};
pub use exec::Execution;
