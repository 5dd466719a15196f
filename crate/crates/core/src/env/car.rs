use alloc::vec;
use alloc::vec::Vec;

// Unused when std is in the dependency graph (test builds).
#[allow(unused_imports)]
use num_traits::Float;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{ActionBox, BarrierShape, Environment, SafetyLimit};
use crate::cbf::{AffineBarrier, NominalModel};
use crate::Rng;

/// Five positions followed by five velocities.
pub const CAR_STATE_DIM: usize = 10;
const CARS: usize = 5;
/// Index of the controlled car (car 4, zero-based 3).
const EGO: usize = 3;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct CarParams {
    pub dt: f64,
    pub horizon: usize,
    pub v_des: f64,
    pub kp: f64,
    pub kb: f64,
    pub kd: f64,
    pub nominal_kp: f64,
    pub nominal_kb: f64,
    pub nominal_kd: f64,
    /// Standard deviation of the noise added to each driver's acceleration.
    pub noise_std: f64,
    pub max_accel: f64,
    pub init_headway: (f64, f64),
    pub init_velocity: (f64, f64),
    /// Hard headway floor.
    pub min_headway: f64,
    /// Headway below which the reward penalises closeness.
    pub comfort_headway: f64,
}

impl Default for CarParams {
    fn default() -> Self {
        CarParams {
            dt: 0.1,
            horizon: 300,
            v_des: 30.0,
            kp: 4.0,
            kb: 20.0,
            kd: 0.1,
            nominal_kp: 3.5,
            nominal_kb: 18.0,
            nominal_kd: 0.0,
            noise_std: 0.5,
            max_accel: 100.0,
            init_headway: (8.0, 12.0),
            init_velocity: (28.0, 32.0),
            min_headway: 2.0,
            comfort_headway: 3.0,
        }
    }
}

fn g1(x: f64) -> f64 {
    if x <= 6.0 {
        x
    } else {
        0.0
    }
}

fn g2(x: f64) -> f64 {
    if x <= 12.0 {
        x
    } else {
        0.0
    }
}

/// Driver-model dynamics with a given parameter set; car 4's input enters through `actuation`.
#[derive(Debug, Clone, PartialEq)]
pub struct CarModel {
    pub kp: f64,
    pub kb: f64,
    pub kd: f64,
    pub v_des: f64,
    pub dt: f64,
    pub max_accel: f64,
}

impl CarModel {
    /// Scripted accelerations of all five cars at step `t` (car 4 entry is zero).
    pub fn driver_accels(&self, s: &[f64], t: usize) -> [f64; CARS] {
        let (pos, vel) = s.split_at(CARS);
        let time = t as f64 * self.dt;
        let track = |i: usize| self.kp * (self.v_des - vel[i]);
        [
            self.v_des - 10.0 * (0.2 * time).sin(),
            track(1) - self.kb * g1(pos[0] - pos[1]),
            track(2) - self.kb * g1(pos[1] - pos[2]),
            0.0,
            track(4) - 0.5 * self.kb * g2(pos[2] - pos[4]),
        ]
    }

    fn integrate(&self, s: &[f64], accel: &[f64; CARS]) -> Vec<f64> {
        let dt = self.dt;
        let mut next = vec![0.0; CAR_STATE_DIM];
        for i in 0..CARS {
            let v = s[CARS + i];
            let vdot = -self.kd * v + accel[i];
            next[i] = s[i] + v * dt + vdot * dt * dt;
            next[CARS + i] = v + vdot * dt;
        }
        next
    }

    /// Steps all cars with the given driver noise and ego acceleration.
    pub fn step_with(&self, s: &[f64], a4: f64, t: usize, noise: &[f64; CARS]) -> Vec<f64> {
        let mut acc = self.driver_accels(s, t);
        for i in 0..CARS {
            if i != EGO {
                acc[i] = (acc[i] + noise[i]).clamp(-self.max_accel, self.max_accel);
            }
        }
        acc[EGO] = a4;
        self.integrate(s, &acc)
    }
}

impl NominalModel for CarModel {
    fn state_dim(&self) -> usize {
        CAR_STATE_DIM
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn drift(&self, s: &[f64], t: usize) -> Vec<f64> {
        self.step_with(s, 0.0, t, &[0.0; CARS])
    }

    fn actuation(&self, _s: &[f64], _t: usize) -> Vec<f64> {
        let mut g = vec![0.0; CAR_STATE_DIM];
        g[EGO] = self.dt * self.dt;
        g[CARS + EGO] = self.dt;
        g
    }
}

/// Five cars in a single lane; the learner drives car 4.
#[derive(Debug, Clone)]
pub struct CarChain {
    pub params: CarParams,
    truth: CarModel,
    nominal: CarModel,
    action_box: ActionBox,
}

impl CarChain {
    pub fn new(params: CarParams) -> Self {
        let truth = CarModel {
            kp: params.kp,
            kb: params.kb,
            kd: params.kd,
            v_des: params.v_des,
            dt: params.dt,
            max_accel: params.max_accel,
        };
        let nominal = CarModel {
            kp: params.nominal_kp,
            kb: params.nominal_kb,
            kd: params.nominal_kd,
            ..truth.clone()
        };
        let action_box = ActionBox::symmetric(1, params.max_accel);
        CarChain {
            params,
            truth,
            nominal,
            action_box,
        }
    }

    pub fn true_model(&self) -> &CarModel {
        &self.truth
    }

    /// Headways in front of and behind the ego car.
    pub fn ego_gaps(state: &[f64]) -> (f64, f64) {
        (state[2] - state[3], state[3] - state[4])
    }

    /// Per-step cost: fuel proxy plus closeness penalty. Non-positive gaps are clamped.
    pub fn step_cost(&self, state: &[f64], a4: f64) -> f64 {
        let v4 = state[CARS + EGO];
        let (front, back) = CarChain::ego_gaps(state);
        let close = |gap: f64| {
            if gap <= self.params.comfort_headway {
                (500.0 / gap.max(0.1)).abs()
            } else {
                0.0
            }
        };
        v4 * a4.max(0.0) + close(front) + close(back)
    }
}

impl Default for CarChain {
    fn default() -> Self {
        CarChain::new(CarParams::default())
    }
}

impl Environment for CarChain {
    fn name(&self) -> &'static str {
        "cars"
    }

    fn state_dim(&self) -> usize {
        CAR_STATE_DIM
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
        let (hl, hh) = self.params.init_headway;
        let (vl, vh) = self.params.init_velocity;
        loop {
            let mut s = vec![0.0; CAR_STATE_DIM];
            for i in (0..CARS - 1).rev() {
                s[i] = s[i + 1] + rng.random_range(hl..=hh);
            }
            for v in &mut s[CARS..] {
                *v = rng.random_range(vl..=vh);
            }
            if barriers.iter().all(|b| b.value(&s) > 0.0) {
                return s;
            }
        }
    }

    fn step(&self, state: &[f64], action: &[f64], t: usize, rng: &mut Rng) -> Vec<f64> {
        let a4 = action[0].clamp(-self.params.max_accel, self.params.max_accel);
        let mut noise = [0.0; CARS];
        if self.params.noise_std > 0.0 {
            let dist = Normal::new(0.0, self.params.noise_std).expect("positive std");
            for (i, n) in noise.iter_mut().enumerate() {
                if i != EGO {
                    *n = dist.sample(rng);
                }
            }
        }
        self.truth.step_with(state, a4, t, &noise)
    }

    fn nominal(&self) -> &dyn NominalModel {
        &self.nominal
    }

    fn reward(&self, state: &[f64], action: &[f64], _t: usize) -> f64 {
        -self.step_cost(state, action[0])
    }

    /// Relative, translation-invariant view: gaps behind car 2 and velocity offsets of cars 2-5.
    fn features(&self, s: &[f64]) -> Vec<f64> {
        let v = self.params.v_des;
        vec![
            (s[1] - s[2]) / 10.0,
            (s[2] - s[3]) / 10.0,
            (s[3] - s[4]) / 10.0,
            (s[6] - v) / 10.0,
            (s[7] - v) / 10.0,
            (s[8] - v) / 10.0,
            (s[9] - v) / 10.0,
        ]
    }

    fn feature_dim(&self) -> usize {
        7
    }

    fn safety_value(&self, state: &[f64]) -> f64 {
        let (front, back) = CarChain::ego_gaps(state);
        front.min(back)
    }

    fn safety_limit(&self) -> SafetyLimit {
        SafetyLimit::Lower(self.params.min_headway)
    }

    fn is_terminal(&self, state: &[f64]) -> bool {
        self.safety_value(state) <= 0.0
    }

    /// `(s3 - s4) - d + tau (v3 - v4)` and `(s4 - s5) - d + tau (v4 - v5)`.
    fn default_barriers(&self, shape: BarrierShape) -> Vec<AffineBarrier> {
        let tau = shape.lookahead;
        let d = self.params.min_headway;
        (2..4)
            .map(|lead| {
                let mut p = vec![0.0; CAR_STATE_DIM];
                p[lead] = 1.0;
                p[lead + 1] = -1.0;
                p[CARS + lead] = tau;
                p[CARS + lead + 1] = -tau;
                AffineBarrier {
                    p,
                    q: -d,
                    eta: shape.eta,
                }
            })
            .collect()
    }
}
