use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

// Unused when std is in the dependency graph (test builds).
#[allow(unused_imports)]
use num_traits::Float;

use rand::Rng as _;

use super::{ActionBox, BarrierShape, Environment, SafetyLimit};
use crate::cbf::{AffineBarrier, NominalModel};
use crate::Rng;

/// Maps an angle to `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = num_traits::Euclid::rem_euclid(&theta, &(2.0 * PI));
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    /// Mass assumed by the controller's model.
    pub nominal_mass: f64,
    pub nominal_length: f64,
    pub gravity: f64,
    pub dt: f64,
    pub horizon: usize,
    pub max_torque: f64,
    pub init_theta: f64,
    pub init_theta_dot: f64,
    /// Limit on `|theta|` defining the safe region.
    pub safe_angle: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            mass: 1.0,
            length: 1.0,
            nominal_mass: 1.4,
            nominal_length: 1.4,
            gravity: 10.0,
            dt: 0.05,
            horizon: 200,
            max_torque: 15.0,
            init_theta: 0.8,
            init_theta_dot: 1.0,
            safe_angle: 1.0,
        }
    }
}

/// Euler pendulum model; used both as the true plant and as the nominal model.
#[derive(Debug, Clone, PartialEq)]
pub struct PendulumModel {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub dt: f64,
}

impl PendulumModel {
    fn gravity_gain(&self) -> f64 {
        3.0 * self.gravity / (2.0 * self.length)
    }

    fn torque_gain(&self) -> f64 {
        3.0 / (self.mass * self.length * self.length)
    }
}

impl NominalModel for PendulumModel {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn drift(&self, s: &[f64], _t: usize) -> Vec<f64> {
        let dt = self.dt;
        let acc = self.gravity_gain() * s[0].sin();
        vec![s[0] + s[1] * dt + acc * dt * dt, s[1] + acc * dt]
    }

    fn actuation(&self, _s: &[f64], _t: usize) -> Vec<f64> {
        let k = self.torque_gain();
        vec![k * self.dt * self.dt, k * self.dt]
    }

    fn difference(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        vec![wrap_angle(a[0] - b[0]), a[1] - b[1]]
    }
}

/// Torque-controlled inverted pendulum, state `(theta, theta_dot)`, upright at 0.
#[derive(Debug, Clone)]
pub struct Pendulum {
    pub params: PendulumParams,
    truth: PendulumModel,
    nominal: PendulumModel,
    action_box: ActionBox,
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Self {
        let truth = PendulumModel {
            mass: params.mass,
            length: params.length,
            gravity: params.gravity,
            dt: params.dt,
        };
        let nominal = PendulumModel {
            mass: params.nominal_mass,
            length: params.nominal_length,
            ..truth.clone()
        };
        let action_box = ActionBox::symmetric(1, params.max_torque);
        Pendulum {
            params,
            truth,
            nominal,
            action_box,
        }
    }

    pub fn true_model(&self) -> &PendulumModel {
        &self.truth
    }

    /// `theta^2 + 0.1 theta_dot^2 + 0.001 u^2`.
    pub fn cost(state: &[f64], torque: f64) -> f64 {
        let th = wrap_angle(state[0]);
        th * th + 0.1 * state[1] * state[1] + 0.001 * torque * torque
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Pendulum::new(PendulumParams::default())
    }
}

impl Environment for Pendulum {
    fn name(&self) -> &'static str {
        "pendulum"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn dt(&self) -> f64 {
        self.params.dt
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn action_box(&self) -> &ActionBox {
        &self.action_box
    }

    fn sample_init(&self, rng: &mut Rng, barriers: &[AffineBarrier]) -> Vec<f64> {
        let (th, thd) = (self.params.init_theta, self.params.init_theta_dot);
        loop {
            let s = vec![rng.random_range(-th..=th), rng.random_range(-thd..=thd)];
            if barriers.iter().all(|b| b.value(&s) > 0.0) {
                return s;
            }
        }
    }

    fn step(&self, state: &[f64], action: &[f64], _t: usize, _rng: &mut Rng) -> Vec<f64> {
        let u = self.action_box.clip(action);
        let mut next = self
            .truth
            .predict(state, &u, 0)
            .expect("pendulum action is 1-d");
        next[0] = wrap_angle(next[0]);
        next
    }

    fn nominal(&self) -> &dyn NominalModel {
        &self.nominal
    }

    fn reward(&self, state: &[f64], action: &[f64], _t: usize) -> f64 {
        -Pendulum::cost(state, action[0])
    }

    fn features(&self, state: &[f64]) -> Vec<f64> {
        state.to_vec()
    }

    fn feature_dim(&self) -> usize {
        2
    }

    fn safety_value(&self, state: &[f64]) -> f64 {
        wrap_angle(state[0]).abs()
    }

    fn safety_limit(&self) -> SafetyLimit {
        SafetyLimit::Upper(self.params.safe_angle)
    }

    /// `1 -+ theta` and `1 -+ (theta + lookahead * theta_dot)`.
    fn default_barriers(&self, shape: BarrierShape) -> Vec<AffineBarrier> {
        let lim = self.params.safe_angle;
        let g = shape.lookahead;
        [
            (vec![-1.0, 0.0]),
            (vec![1.0, 0.0]),
            (vec![-1.0, -g]),
            (vec![1.0, g]),
        ]
        .into_iter()
        .map(|p| AffineBarrier {
            p,
            q: lim,
            eta: shape.eta,
        })
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::extract_residual;

    fn step(p: &Pendulum, s: [f64; 2], u: f64) -> Vec<f64> {
        p.step(&s, &[u], 0, &mut crate::seeded_rng(0))
    }

    #[test]
    fn upright_is_equilibrium() {
        assert_eq!(step(&Pendulum::default(), [0.0, 0.0], 0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn hand_substituted_step() {
        let s = step(&Pendulum::default(), [0.1, 0.0], 0.0);
        let th = 0.1 + 15.0 * 0.1f64.sin() * 0.0025;
        let thd = 15.0 * 0.1f64.sin() * 0.05;
        assert!((s[0] - th).abs() < 1e-15);
        assert!((s[1] - thd).abs() < 1e-15);
    }

    #[test]
    fn odd_symmetry() {
        let p = Pendulum::default();
        let a = step(&p, [0.3, -0.7], 4.0);
        let b = step(&p, [-0.3, 0.7], -4.0);
        assert!((a[0] + b[0]).abs() < 1e-15 && (a[1] + b[1]).abs() < 1e-15);
    }

    #[test]
    fn angle_wraps() {
        let p = Pendulum::default();
        let s = step(&p, [3.1, 5.0], 0.0);
        assert!(s[0] <= PI && s[0] > -PI);
        assert!(s[0] < 0.0);
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
    }

    #[test]
    fn nominal_actuation_column() {
        let p = Pendulum::default();
        let g = p.nominal().actuation(&[0.4, 1.0], 0);
        let k = 3.0 / (1.4 * 1.4 * 1.4);
        assert!((g[0] - k * 0.0025).abs() < 1e-15);
        assert!((g[1] - k * 0.05).abs() < 1e-15);
        assert_eq!(g, p.nominal().actuation(&[-2.0, 3.0], 7));
        assert_eq!(p.nominal().drift(&[0.0, 0.0], 0), vec![0.0, 0.0]);
    }

    #[test]
    fn residual_matches_two_model_evaluations() {
        let p = Pendulum::default();
        let s = [0.1, 0.0];
        let next = step(&p, s, 0.0);
        let d = extract_residual(&s, &[0.0], &next, p.nominal(), 0).unwrap();
        let true_acc = 15.0 * 0.1f64.sin();
        let nom_acc = 30.0 / 2.8 * 0.1f64.sin();
        assert!((d[0] - (true_acc - nom_acc) * 0.0025).abs() < 1e-15);
        assert!((d[1] - (true_acc - nom_acc) * 0.05).abs() < 1e-15);
    }

    #[test]
    fn residual_zero_with_true_parameters() {
        let p = Pendulum::new(PendulumParams {
            nominal_mass: 1.0,
            nominal_length: 1.0,
            ..Default::default()
        });
        let s = [0.6, -1.3];
        let next = step(&p, s, 7.5);
        let d = extract_residual(&s, &[7.5], &next, p.nominal(), 0).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn cost_values() {
        assert_eq!(Pendulum::cost(&[0.0, 0.0], 0.0), 0.0);
        assert_eq!(Pendulum::cost(&[1.0, 0.0], 0.0), 1.0);
        assert!((Pendulum::cost(&[0.5, 1.0], 10.0) - 0.45).abs() < 1e-15);
    }

    #[test]
    fn unforced_pendulum_falls() {
        let p = Pendulum::default();
        let bs = p.default_barriers(BarrierShape {
            eta: 0.5,
            lookahead: 0.25,
        });
        let mut s = vec![PI / 2.0, 0.0];
        let h0 = bs[0].value(&s);
        let mut rng = crate::seeded_rng(0);
        for t in 0..5 {
            s = p.step(&s, &[0.0], t, &mut rng);
        }
        assert!(s[0] > PI / 2.0);
        assert!(bs[0].value(&s) < h0);
    }

    #[test]
    fn initial_states_inside_all_barriers() {
        let p = Pendulum::default();
        let bs = p.default_barriers(BarrierShape {
            eta: 0.5,
            lookahead: 0.25,
        });
        let mut rng = crate::seeded_rng(3);
        for _ in 0..500 {
            let s = p.sample_init(&mut rng, &bs);
            assert!(bs.iter().all(|b| b.value(&s) > 0.0));
            assert!(s[0].abs() <= 0.8 && s[1].abs() <= 1.0);
        }
        let a = p.sample_init(&mut crate::seeded_rng(9), &bs);
        let b = p.sample_init(&mut crate::seeded_rng(9), &bs);
        assert_eq!(a, b);
    }
}
