//! Tabular contextual-MDP laboratory for imitation and reinforcement learning
//! from expert data whose context (the hidden confounder) is missing.
//!
//! Everything here is pure, allocation-only (`no_std` + `alloc`) and driven by
//! explicit seeds. File formats, the CLI and the experiment harness live in the
//! companion `confound-lab` crate.
//!
//! Module map:
//! - [`mdp`]: contextual MDPs, policies, exact planning and simulation.
//! - [`occupancy`]: exact, marginal and empirical discounted occupancies.
//! - [`divergence`]: f-divergences, conjugates and variational estimators.
//! - [`dataset`]: confounded expert data, corrective trajectory sampling.
//! - [`imitation`]: ambiguity sets, mean policy and bound checkers.
//! - [`rl`]: follow-the-leader and online-gradient solvers with expert data.
//! - [`envs`]: toy, catastrophic and four-rooms environments.
#![no_std]

extern crate alloc;

pub mod dataset;
pub mod divergence;
pub mod envs;
mod error;
pub mod imitation;
pub mod linalg;
pub(crate) mod math;
pub mod mdp;
pub mod occupancy;
pub mod rl;
pub mod rng;

pub use error::{Error, Result};
pub use mdp::{ContextDistribution, ContextualMdp, Dims, Policy};
pub use occupancy::OccupancyMeasure;
