//! Fluid and finite-N models of a many-station queueing system with a
//! central server that pools a fraction `p` of the service capacity and always
//! serves a longest queue.
//!
//! * [`state`]: queue vectors, tail and aggregate profiles, weighted metric.
//! * [`invariant`]: closed-form fixed point of the fluid model.
//! * [`fluid`]: drift, projected Euler integration, one-sided Lipschitz checks.
//! * [`sim`]: the embedded Markov chain and steady-state estimation.
//! * [`harness`]: convergence studies, parameter sweeps, CSV output.

pub mod error;
pub mod fluid;
pub mod harness;
pub mod invariant;
pub mod rng;
pub mod sim;
pub mod state;

pub use error::{Error, Result};
pub use state::{AggregateProfile, Params, QueueVector, TailProfile, Trajectory};
