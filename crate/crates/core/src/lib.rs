//! Decentralized Bayesian learning over noisy device-to-device channels.
//!
//! A set of agents holds disjoint shards of a dataset and runs decentralized
//! stochastic gradient Langevin dynamics to sample from the posterior over a
//! shared model. Instead of exchanging iterates over ideal links, agents
//! broadcast analog scaled iterates over a shared additive-Gaussian
//! multiple-access channel, and the receiver-side scaling is chosen so that
//! the channel noise itself plays the role of the Langevin injection noise.
//!
//! The crate also provides the digital baseline the analog scheme is usually
//! compared against (sparsified, quantized gradient exchange under a
//! per-round bit budget), calibration and accuracy metrics for the resulting
//! posterior ensembles, and a deterministic experiment runner that sweeps
//! algorithm, topology, SNR and seed grids into CSV summaries.
//!
//! Entry points:
//!
//! * [`samplers`] implements the chains (centralized and decentralized
//!   Langevin, the channel-driven variant, and the quantized digital
//!   baseline).
//! * [`runner`] parses experiment configs and executes sweep grids.
//! * [`topology`], [`channel`], [`compression`], [`models`] and [`metrics`]
//!   hold the building blocks and can be used on their own.

pub mod channel;
pub mod compression;
pub mod error;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod runner;
pub mod samplers;
pub mod topology;

pub use error::{Error, Result};
