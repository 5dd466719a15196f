//! Safe actor-critic learning with discrete-time control barrier functions.
//!
//! A model-free learner proposes actions; a quadratic program built from
//! affine barrier functions, a nominal control-affine model and a
//! Gaussian-process estimate of the residual dynamics returns the minimal
//! correction that keeps the state inside the safe set with high probability.
//! In *guide* mode an extra network (`u_bar`) accumulates past corrections so
//! the learner improves around the deployed, safe behaviour.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! parsing and the command-line front end live in the `rlcbf` crate.
//!
//! Module map:
//!
//! - [`approx`]: dense MLP with manual gradients and Adam.
//! - [`gp`]: residual extraction and GP regression.
//! - [`qp`]: exact active-set solver for the barrier QP.
//! - [`cbf`]: affine barriers, QP assembly, safety filter and invariance audit.
//! - [`env`]: inverted pendulum and five-car chain.
//! - [`rl`]: DDPG-style agent, replay buffer and compensator fitting.
//! - [`driver`]: the episode loop in baseline, compensate and guide modes.

#![no_std]

extern crate alloc;

pub mod approx;
pub mod cbf;
pub mod driver;
pub mod env;
pub mod error;
pub mod gp;
pub mod linalg;
pub mod qp;
pub mod rl;

pub use error::{Error, Result};

/// Deterministic RNG used everywhere in the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate RNG from a seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
