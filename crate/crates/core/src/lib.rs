//! Benchmarking tools for Bayesian reinforcement learning on finite MDPs.
//!
//! The crate is organised around the evaluation pipeline:
//!
//! * [`mdp`]: finite MDPs, trajectory simulation, discounted returns and
//!   value iteration.
//! * [`prior`]: flat Dirichlet-multinomial distributions over MDPs, posterior
//!   bookkeeping and the GC / GDL / Grid benchmark generators.
//! * [`agents`]: Random, e-Greedy, Soft-Max, OPPS-DS, BAMCP, BFS3, SBOSS and
//!   BEB, all following an offline-learn / search / online-learn lifecycle.
//! * [`formulas`]: the formula-indexed strategy spaces used by OPPS-DS.
//! * [`protocol`]: experiment runs, score estimates, time features, paired
//!   Z-tests and best-agent selection under offline/online time bounds.

pub mod agents;
pub mod error;
pub mod formulas;
pub mod mdp;
pub mod prior;
pub mod protocol;
pub mod rng;
mod solver;

pub use error::{Error, Result};
