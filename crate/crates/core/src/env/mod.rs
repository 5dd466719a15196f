//! Benchmark environments as discrete-time control-affine systems.

mod car;
mod pendulum;

pub use car::{CarChain, CarModel, CarParams, CAR_STATE_DIM};
pub use pendulum::{wrap_angle, Pendulum, PendulumModel, PendulumParams};

use alloc::vec;
use alloc::vec::Vec;

use crate::cbf::{AffineBarrier, NominalModel};
use crate::Rng;

/// Per-coordinate actuator limits.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ActionBox {
    pub fn symmetric(dim: usize, bound: f64) -> Self {
        ActionBox {
            lower: vec![-bound; dim],
            upper: vec![bound; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn clip(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
            .collect()
    }

    pub fn contains(&self, a: &[f64], tol: f64) -> bool {
        a.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol)
    }

    pub fn half_width(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (hi - lo))
            .collect()
    }
}

/// How the per-step safety quantity is judged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SafetyLimit {
    /// Unsafe when the quantity exceeds the limit (e.g. `|theta| > 1`).
    Upper(f64),
    /// Unsafe when the quantity drops below the limit (e.g. headway < 2 m).
    Lower(f64),
}

impl SafetyLimit {
    pub fn violated(&self, value: f64) -> bool {
        match *self {
            SafetyLimit::Upper(l) => value > l,
            SafetyLimit::Lower(l) => value < l,
        }
    }

    /// Worse of two values under this limit.
    pub fn worst(&self, a: f64, b: f64) -> f64 {
        match self {
            SafetyLimit::Upper(_) => a.max(b),
            SafetyLimit::Lower(_) => a.min(b),
        }
    }
}

/// Barrier shape parameters shared by the default barrier sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierShape {
    pub eta: f64,
    /// Velocity lookahead in seconds (`gamma_v` for the pendulum, `tau` for cars).
    pub lookahead: f64,
}

pub trait Environment: Send + Sync {
    fn name(&self) -> &'static str;
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn dt(&self) -> f64;
    fn horizon(&self) -> usize;
    fn action_box(&self) -> &ActionBox;

    /// Initial state strictly inside every barrier in `barriers`.
    fn sample_init(&self, rng: &mut Rng, barriers: &[AffineBarrier]) -> Vec<f64>;

    /// True (unknown to the controller) dynamics.
    fn step(&self, state: &[f64], action: &[f64], t: usize, rng: &mut Rng) -> Vec<f64>;

    fn nominal(&self) -> &dyn NominalModel;

    /// Reward for taking `action` in `state` at step `t`.
    fn reward(&self, state: &[f64], action: &[f64], t: usize) -> f64;

    /// Input representation for the learner and the GP.
    fn features(&self, state: &[f64]) -> Vec<f64>;
    fn feature_dim(&self) -> usize;

    /// Scalar safety quantity (`|theta|`, minimum headway, ...).
    fn safety_value(&self, state: &[f64]) -> f64;
    fn safety_limit(&self) -> SafetyLimit;

    /// Episode ends early (e.g. collision).
    fn is_terminal(&self, _state: &[f64]) -> bool {
        false
    }

    fn default_barriers(&self, shape: BarrierShape) -> Vec<AffineBarrier>;
}
