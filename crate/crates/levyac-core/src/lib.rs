#![cfg_attr(not(feature = "std"), no_std)]
//! Actor-critic solvers for jump-diffusion stochastic control and n-agent
//! portfolio games, together with semi-explicit constant Nash equilibria
//! used as ground truth.
//!
//! The crate is organized around three layers:
//!
//! * [`sde`] simulates controlled Itô processes with compensated
//!   compound-Poisson jumps on a uniform time grid ([`grid::TimeGrid`]).
//! * [`net`] is a small self-contained residual-network toolkit with
//!   reverse-mode and forward-over-reverse derivatives, which [`control`]
//!   and [`game`] use to train critic and actor networks.
//! * [`equilibrium`] solves the coupled first-order systems for constant
//!   equilibria in closed-to-semi-explicit form and evaluates the matching
//!   value functions, including the single-agent Merton and LQR benchmarks
//!   in [`problems`].
//!
//! Everything is deterministic given a master seed: random draws are routed
//! through keyed substreams ([`rng`]) so that batch results do not depend on
//! scheduling, worker count, or iteration order of parallel loops.

extern crate alloc;

mod error;
pub mod rng;
pub mod grid;
pub mod sde;
pub mod net;
pub mod metrics;
pub mod equilibrium;
pub mod control;
pub mod problems;
pub mod game;
pub(crate) mod par;

pub use error::{Error, Result};
