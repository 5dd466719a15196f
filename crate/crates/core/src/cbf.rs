//! Discrete-time affine control barrier functions and the QP safety filter.
//!
//! A barrier `h(s) = p.s + q` certifies the half-space `h >= 0` when each
//! step satisfies `h(s') >= (1 - eta) h(s)`. With a nominal model
//! `s' = f(s) + g(s) u + d(s)` and a residual bound `|d - mu| <= k sigma`,
//! the worst case of `h(s')` is affine in the action, which gives one QP row
//! per barrier.

use alloc::boxed::Box;
use alloc::vec::Vec;

// Unused when std is in the dependency graph (test builds).
#[allow(unused_imports)]
use num_traits::Float;

use crate::env::ActionBox;
use crate::error::{ensure_finite, Error, Result};
use crate::gp::{in_band, Prediction, ResidualModel};
use crate::linalg::dot;
use crate::qp::{solve_qp, QpRow, QpSpec};

/// `h(s) = p . s + q` with decay rate `eta`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct AffineBarrier {
    pub p: Vec<f64>,
    pub q: f64,
    pub eta: f64,
}

impl AffineBarrier {
    pub fn new(p: Vec<f64>, q: f64, eta: f64) -> Result<Self> {
        let b = AffineBarrier { p, q, eta };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::config(
                "eta",
                "barrier decay rate must satisfy eta in [0, 1]",
            ));
        }
        if self.p.iter().all(|v| *v == 0.0) {
            return Err(Error::config("barrier.p", "normal vector must be non-zero"));
        }
        if !self.q.is_finite() || self.p.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("barrier", "coefficients must be finite"));
        }
        Ok(())
    }

    pub fn value(&self, state: &[f64]) -> f64 {
        dot(&self.p, state) + self.q
    }

    /// `(lambda p, lambda q)` for `lambda > 0`; describes the same set.
    pub fn scaled(&self, lambda: f64) -> Self {
        AffineBarrier {
            p: self.p.iter().map(|v| v * lambda).collect(),
            q: self.q * lambda,
            eta: self.eta,
        }
    }
}

/// Known part of the control-affine dynamics `s' = f(s) + g(s) a + d(s)`.
pub trait NominalModel {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;

    /// `f(s)` at step `t`.
    fn drift(&self, state: &[f64], t: usize) -> Vec<f64>;

    /// `g(s)` at step `t`, row-major `state_dim x action_dim`.
    fn actuation(&self, state: &[f64], t: usize) -> Vec<f64>;

    /// `f(s) + g(s) a`.
    fn predict(&self, state: &[f64], action: &[f64], t: usize) -> Result<Vec<f64>> {
        if action.len() != self.action_dim() {
            return Err(Error::shape(
                "nominal action",
                self.action_dim(),
                action.len(),
            ));
        }
        let m = self.action_dim();
        let g = self.actuation(state, t);
        let mut s = self.drift(state, t);
        for (i, si) in s.iter_mut().enumerate() {
            *si += dot(&g[i * m..(i + 1) * m], action);
        }
        Ok(s)
    }

    /// `a - b` in state coordinates (angles may wrap).
    fn difference(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x - y).collect()
    }
}

/// QP row for one barrier.
///
/// `u_base` is the part of the action already committed before the filter:
/// zero for a standalone filter, the learner's action when compensating, and
/// learner plus compensator when guiding. The row reads `c . a + eps >= b` with
///
/// ```text
/// c = p^T g(s)
/// b = (1 - eta) h(s) - p^T f(s) - c . u_base - p^T mu + k |p|^T sigma - q
/// ```
#[allow(clippy::too_many_arguments)]
pub fn cbf_row(
    barrier: &AffineBarrier,
    state: &[f64],
    drift: &[f64],
    actuation: &[f64],
    prediction: &Prediction,
    k_delta: f64,
    u_base: &[f64],
) -> QpRow {
    let m = u_base.len();
    let n = state.len();
    let coeff: Vec<f64> = (0..m)
        .map(|j| (0..n).map(|i| barrier.p[i] * actuation[i * m + j]).sum())
        .collect();
    let robust: f64 = barrier
        .p
        .iter()
        .zip(&prediction.sigma)
        .map(|(p, s)| p.abs() * s)
        .sum();
    let offset = (1.0 - barrier.eta) * barrier.value(state)
        - dot(&barrier.p, drift)
        - dot(&coeff, u_base)
        - dot(&barrier.p, &prediction.mu)
        + k_delta * robust
        - barrier.q;
    QpRow { coeff, offset }
}

/// Everything the filter needs at one time step.
pub struct FilterProblem<'a> {
    pub state: &'a [f64],
    /// GP input for `state` (the state itself or its feature vector).
    pub input: &'a [f64],
    pub t: usize,
    /// Already committed action (`u_base` of [`cbf_row`]).
    pub proposed: &'a [f64],
    pub barriers: &'a [AffineBarrier],
    pub nominal: &'a dyn NominalModel,
    pub residual: &'a dyn ResidualModel,
    pub k_delta: f64,
    pub action_box: &'a ActionBox,
    pub slack_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    pub u_cbf: Vec<f64>,
    pub eps: f64,
    /// Per barrier: the high-probability lower bound on `h(s')` under the
    /// filtered action.
    pub predicted_h_next: Vec<f64>,
    pub kkt_residual: f64,
    pub prediction: Prediction,
}

impl FilterResult {
    pub fn deployed(&self, proposed: &[f64]) -> Vec<f64> {
        proposed
            .iter()
            .zip(&self.u_cbf)
            .map(|(u, c)| u + c)
            .collect()
    }
}

/// Builds the QP (rows from every barrier, box shifted by the proposed action).
pub fn filter_qp(problem: &FilterProblem<'_>) -> Result<(QpSpec, Prediction)> {
    let n = problem.nominal.state_dim();
    let m = problem.nominal.action_dim();
    if problem.state.len() != n {
        return Err(Error::shape("filter state", n, problem.state.len()));
    }
    if problem.proposed.len() != m {
        return Err(Error::shape("filter action", m, problem.proposed.len()));
    }
    ensure_finite(problem.proposed, "proposed action")?;
    ensure_finite(problem.state, "filter state")?;
    let prediction = problem.residual.predict(problem.state, problem.input)?;
    if prediction.mu.len() != n || prediction.sigma.len() != n {
        return Err(Error::shape("residual prediction", n, prediction.mu.len()));
    }
    let drift = problem.nominal.drift(problem.state, problem.t);
    let actuation = problem.nominal.actuation(problem.state, problem.t);
    let lower = problem
        .action_box
        .lower
        .iter()
        .zip(problem.proposed)
        .map(|(lo, u)| lo - u)
        .collect();
    let upper = problem
        .action_box
        .upper
        .iter()
        .zip(problem.proposed)
        .map(|(hi, u)| hi - u)
        .collect();
    let mut spec = QpSpec::new(lower, upper, problem.slack_weight);
    for b in problem.barriers {
        if b.p.len() != n {
            return Err(Error::shape("barrier normal", n, b.p.len()));
        }
        spec.rows.push(cbf_row(
            b,
            problem.state,
            &drift,
            &actuation,
            &prediction,
            problem.k_delta,
            problem.proposed,
        ));
    }
    Ok((spec, prediction))
}

/// Minimal correction `u_cbf` so that `proposed + u_cbf` satisfies every
/// barrier row with the least slack.
pub fn safe_filter(problem: &FilterProblem<'_>) -> Result<FilterResult> {
    let (spec, prediction) = filter_qp(problem)?;
    let sol = solve_qp(&spec).map_err(|e| Error::Filter {
        step: problem.t,
        source: Box::new(e),
    })?;
    let predicted_h_next = spec
        .rows
        .iter()
        .zip(problem.barriers)
        .map(|(row, b)| {
            // row: c.a + eps >= b  <=>  lower bound of h(s') >= (1-eta) h(s) - eps
            dot(&row.coeff, &sol.action) - row.offset + (1.0 - b.eta) * b.value(problem.state)
        })
        .collect();
    Ok(FilterResult {
        u_cbf: sol.action,
        eps: sol.eps,
        predicted_h_next,
        kkt_residual: sol.kkt_residual,
        prediction,
    })
}

/// One logged transition as seen by [`invariance_audit`].
#[derive(Debug, Clone, PartialEq)]
pub struct AuditStep {
    pub h: Vec<f64>,
    pub h_next: Vec<f64>,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub step: usize,
    pub barrier: usize,
    /// `(1 - eta) h - eps - h_next`, positive when violated.
    pub deficit: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditReport {
    pub steps: usize,
    pub violations: Vec<Violation>,
    /// Per step: next state inside `C = {h >= 0}` for every barrier.
    pub in_safe_set: Vec<bool>,
    /// Per step: next state inside `C_eps = {h >= -eps_max / eta}`.
    pub in_relaxed_set: Vec<bool>,
    /// Largest `-h` seen (0 if the trajectory never left `C`).
    pub max_excursion: f64,
    pub max_eps: f64,
    /// `max_eps / eta` over barriers; infinite when some `eta = 0` and `max_eps > 0`.
    pub excursion_bound: f64,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Slack allowed before an inequality counts as violated.
pub const AUDIT_TOL: f64 = 1e-9;

/// Checks `h(s_{t+1}) >= (1 - eta) h(s_t) - eps_t` for every step and barrier.
pub fn invariance_audit(steps: &[AuditStep], etas: &[f64]) -> AuditReport {
    let max_eps = steps.iter().map(|s| s.eps).fold(0.0, f64::max);
    let excursion_bound = etas
        .iter()
        .map(|eta| if max_eps == 0.0 { 0.0 } else { max_eps / eta })
        .fold(0.0, f64::max);
    let mut report = AuditReport {
        steps: steps.len(),
        max_eps,
        excursion_bound,
        ..Default::default()
    };
    for (t, step) in steps.iter().enumerate() {
        let mut safe = true;
        let mut relaxed = true;
        for (i, eta) in etas.iter().enumerate() {
            let (h, h_next) = (step.h[i], step.h_next[i]);
            let deficit = (1.0 - eta) * h - step.eps - h_next;
            if deficit > AUDIT_TOL {
                report.violations.push(Violation {
                    step: t,
                    barrier: i,
                    deficit,
                });
            }
            if h_next < 0.0 {
                safe = false;
            }
            let floor = if max_eps == 0.0 { 0.0 } else { -max_eps / eta };
            if h_next < floor - AUDIT_TOL {
                relaxed = false;
            }
            report.max_excursion = report.max_excursion.max(-h).max(-h_next);
        }
        report.in_safe_set.push(safe);
        report.in_relaxed_set.push(relaxed);
    }
    report
}

/// Fraction of `(d, mu, sigma)` triples whose realized `d` lies inside the
/// `k_delta` band in every component. `None` for an empty input.
pub fn band_coverage<'a, I>(samples: I, k_delta: f64) -> Option<f64>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64], &'a [f64])>,
{
    let (mut inside, mut total) = (0usize, 0usize);
    for (d, mu, sigma) in samples {
        total += 1;
        if in_band(d, mu, sigma, k_delta) {
            inside += 1;
        }
    }
    (total > 0).then(|| inside as f64 / total as f64)
}

/// Barrier values at `state`.
pub fn barrier_values(barriers: &[AffineBarrier], state: &[f64]) -> Vec<f64> {
    barriers.iter().map(|b| b.value(state)).collect()
}

/// `|x|_2`, used for correction magnitudes.
pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}
