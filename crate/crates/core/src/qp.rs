//! Exact solver for the barrier quadratic program
//!
//! ```text
//! minimize    1/2 |a|^2 + K_eps * eps
//! subject to  c_i . a + eps >= b_i     (barrier rows)
//!             lo <= a <= hi            (actuator box)
//!             eps >= 0
//! ```
//!
//! The Hessian is singular along `eps`, so the primal active-set method takes
//! a ray step in `-eps` whenever no slack-bearing constraint is in the working
//! set; otherwise the equality-constrained subproblem has a nonsingular KKT
//! matrix and is solved directly.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// Unused when std is in the dependency graph (test builds).
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{dot, householder_qr, lu_solve};

/// One barrier row `coeff . a + eps >= offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpRow {
    pub coeff: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSpec {
    pub rows: Vec<QpRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub slack_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub action: Vec<f64>,
    pub eps: f64,
    pub objective: f64,
    /// Working-set indices at termination, see [`QpSpec::constraint_count`]
    /// for the numbering.
    pub active_set: Vec<usize>,
    /// Lagrange multiplier per constraint (zero off the working set).
    pub multipliers: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Maximum KKT violations, see [`kkt_check`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal_feasibility: f64,
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_feasibility)
            .max(self.complementarity)
    }
}

impl QpSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, slack_weight: f64) -> Self {
        QpSpec {
            rows: Vec::new(),
            lower,
            upper,
            slack_weight,
        }
    }

    pub fn with_row(mut self, coeff: Vec<f64>, offset: f64) -> Self {
        self.rows.push(QpRow { coeff, offset });
        self
    }

    pub fn action_dim(&self) -> usize {
        self.lower.len()
    }

    /// Constraints are numbered: barrier rows, lower bounds, upper bounds,
    /// then `eps >= 0`.
    pub fn constraint_count(&self) -> usize {
        self.rows.len() + 2 * self.action_dim() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.action_dim();
        if m == 0 {
            return Err(Error::QpSpec("action dimension is zero".into()));
        }
        if self.upper.len() != m {
            return Err(Error::QpSpec(format!(
                "box has {} lower and {} upper bounds",
                m,
                self.upper.len()
            )));
        }
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::QpSpec(format!("non-finite bound on coordinate {i}")));
            }
            if lo > hi {
                return Err(Error::QpSpec(format!(
                    "inconsistent box on coordinate {i}: low {lo} > high {hi}"
                )));
            }
        }
        if !(self.slack_weight > 0.0 && self.slack_weight.is_finite()) {
            return Err(Error::QpSpec("slack weight must be positive".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.coeff.len() != m {
                return Err(Error::QpSpec(format!(
                    "row {i} has {} coefficients, expected {m}",
                    r.coeff.len()
                )));
            }
            if !r.offset.is_finite() || r.coeff.iter().any(|c| !c.is_finite()) {
                return Err(Error::QpSpec(format!("row {i} is not finite")));
            }
        }
        Ok(())
    }

    pub fn objective(&self, action: &[f64], eps: f64) -> f64 {
        0.5 * dot(action, action) + self.slack_weight * eps
    }

    /// Constraint `i` as `(normal over (a, eps), rhs)` with `normal . x >= rhs`.
    fn constraint(&self, i: usize) -> (Vec<f64>, f64) {
        let m = self.action_dim();
        let r = self.rows.len();
        let mut normal = vec![0.0; m + 1];
        if i < r {
            normal[..m].copy_from_slice(&self.rows[i].coeff);
            normal[m] = 1.0;
            (normal, self.rows[i].offset)
        } else if i < r + m {
            normal[i - r] = 1.0;
            (normal, self.lower[i - r])
        } else if i < r + 2 * m {
            normal[i - r - m] = -1.0;
            (normal, -self.upper[i - r - m])
        } else {
            normal[m] = 1.0;
            (normal, 0.0)
        }
    }

    fn constraints(&self) -> Vec<(Vec<f64>, f64)> {
        (0..self.constraint_count())
            .map(|i| self.constraint(i))
            .collect()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let m = self.action_dim();
        let mut g = x.to_vec();
        g[m] = self.slack_weight;
        g
    }
}

const MAX_ITERATIONS: usize = 500;

/// Solves the program to global optimality.
pub fn solve_qp(spec: &QpSpec) -> Result<QpSolution> {
    spec.validate()?;
    let m = spec.action_dim();
    let n = m + 1;
    let cons = spec.constraints();
    let scale = 1.0
        + spec.rows.iter().map(|r| r.offset.abs()).fold(0.0, f64::max)
        + spec
            .lower
            .iter()
            .chain(&spec.upper)
            .map(|v| v.abs())
            .fold(0.0, f64::max);

    // feasible start: clamp the origin into the box, then pick eps large enough
    let mut x: Vec<f64> = spec
        .lower
        .iter()
        .zip(&spec.upper)
        .map(|(lo, hi)| 0.0f64.clamp(*lo, *hi))
        .collect();
    let worst = spec
        .rows
        .iter()
        .map(|r| r.offset - dot(&r.coeff, &x))
        .fold(0.0, f64::max);
    x.push(worst);

    let mut working: Vec<usize> = Vec::new();
    let mut multipliers = vec![0.0; cons.len()];

    for iter in 0..MAX_ITERATIONS {
        let has_slack = working.iter().any(|&i| cons[i].0[m] != 0.0);
        let (step, lambda, lam_scales) = if has_slack {
            let target = face_minimiser(spec, &cons, &working).ok_or_else(|| Error::Solver {
                iterations: iter,
                detail: format!("singular KKT system with working set {working:?}"),
            })?;
            let step: Vec<f64> = target.0.iter().zip(&x).map(|(t, xi)| t - xi).collect();
            (step, target.1, target.2)
        } else {
            // zero curvature along eps and positive cost: ray towards smaller eps
            let mut d = vec![0.0; n];
            d[m] = -1.0;
            let (alpha, blocking) = ratio_test(&cons, &working, &x, &d, f64::INFINITY);
            let blocking = blocking.ok_or_else(|| Error::Solver {
                iterations: iter,
                detail: "unbounded slack ray".into(),
            })?;
            x[m] -= alpha;
            working.push(blocking);
            continue;
        };

        let step_norm = step.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if step_norm <= 1e-12 * scale {
            // each multiplier is judged against the size of the terms it was
            // computed from, so rounding in K_eps-sized ones is not mistaken
            // for a sign change
            let (worst_k, worst_val) = lambda
                .iter()
                .zip(&lam_scales)
                .map(|(l, sc)| l / sc)
                .enumerate()
                .fold(
                    (usize::MAX, 0.0),
                    |best, (k, v)| if v < best.1 { (k, v) } else { best },
                );
            if worst_k == usize::MAX || worst_val >= -1e-9 {
                multipliers.iter_mut().for_each(|v| *v = 0.0);
                for (k, &ci) in working.iter().enumerate() {
                    multipliers[ci] = lambda[k].max(0.0);
                }
                return Ok(finish(spec, x, working, multipliers, iter + 1));
            }
            working.remove(worst_k);
        } else {
            let (alpha, blocking) = ratio_test(&cons, &working, &x, &step, 1.0);
            x.iter_mut()
                .zip(&step)
                .for_each(|(xi, pi)| *xi += alpha * pi);
            if let Some(b) = blocking {
                working.push(b);
            }
        }
    }
    Err(Error::Solver {
        iterations: MAX_ITERATIONS,
        detail: format!("no convergence; working set {working:?}, iterate {x:?}"),
    })
}

/// Largest `alpha <= alpha_max` keeping `x + alpha d` feasible, and the
/// constraint that blocks it.
fn ratio_test(
    cons: &[(Vec<f64>, f64)],
    working: &[usize],
    x: &[f64],
    d: &[f64],
    alpha_max: f64,
) -> (f64, Option<usize>) {
    let mut alpha = alpha_max;
    let mut blocking = None;
    let dnorm = dot(d, d).sqrt();
    for (i, (normal, rhs)) in cons.iter().enumerate() {
        if working.contains(&i) {
            continue;
        }
        let ad = dot(normal, d);
        if ad < -1e-12 * dnorm * dot(normal, normal).sqrt() && independent(cons, working, i) {
            let slack = (dot(normal, x) - rhs).max(0.0);
            let t = slack / -ad;
            if t < alpha {
                alpha = t;
                blocking = Some(i);
            }
        }
    }
    (alpha, blocking)
}

/// Minimiser of the objective with every working constraint held as an
/// equality, and the multipliers in working-set order.
///
/// Bounds in the working set pin their coordinates, and the slack is
/// eliminated: either `eps >= 0` is in the set and `eps = 0`, or one barrier
/// row fixes `eps` and the other rows become differences. What is left is a
/// min-norm problem over the free coordinates in which the large slack
/// weight only shows up in the linear term. Bound multipliers are recovered
/// last from their own coordinates, so their (possibly huge) values never
/// feed back into the row multipliers.
fn face_minimiser(
    spec: &QpSpec,
    cons: &[(Vec<f64>, f64)],
    working: &[usize],
) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let m = spec.action_dim();
    let rows = spec.rows.len();
    let slack_idx = cons.len() - 1;

    let mut pinned: Vec<Option<f64>> = vec![None; m];
    for &ci in working {
        if ci >= rows && ci < rows + m {
            pinned[ci - rows] = Some(spec.lower[ci - rows]);
        } else if ci >= rows + m && ci < slack_idx {
            pinned[ci - rows - m] = Some(spec.upper[ci - rows - m]);
        }
    }
    let free: Vec<usize> = (0..m).filter(|&j| pinned[j].is_none()).collect();
    let row_set: Vec<usize> = working.iter().copied().filter(|&i| i < rows).collect();
    let eps_fixed = working.contains(&slack_idx);
    let free_norm = |i: usize| {
        free.iter()
            .map(|&j| spec.rows[i].coeff[j].powi(2))
            .sum::<f64>()
    };
    let reference = if eps_fixed {
        None
    } else {
        // every choice is equivalent in exact arithmetic; the shortest free
        // part keeps K_eps * rounding smallest
        Some(
            row_set
                .iter()
                .copied()
                .min_by(|&i, &j| free_norm(i).total_cmp(&free_norm(j)))?,
        )
    };

    let pinned_dot =
        |c: &[f64]| -> f64 { (0..m).filter_map(|j| pinned[j].map(|v| c[j] * v)).sum() };
    let mut eq_rows: Vec<usize> = Vec::new();
    let mut eq: Vec<(Vec<f64>, f64)> = Vec::new();
    for &i in &row_set {
        if Some(i) == reference {
            continue;
        }
        let mut c = spec.rows[i].coeff.clone();
        let mut b = spec.rows[i].offset;
        if let Some(r) = reference {
            c.iter_mut()
                .zip(&spec.rows[r].coeff)
                .for_each(|(a, cr)| *a -= cr);
            b -= spec.rows[r].offset;
        }
        b -= pinned_dot(&c);
        eq.push((free.iter().map(|&j| c[j]).collect(), b));
        eq_rows.push(i);
    }
    let q_lin: Vec<f64> = match reference {
        Some(r) => free
            .iter()
            .map(|&j| spec.slack_weight * spec.rows[r].coeff[j])
            .collect(),
        None => vec![0.0; free.len()],
    };
    let (a_free, mu) = equality_min_norm(&eq, free.len(), &q_lin)?;

    let mut action: Vec<f64> = pinned.iter().map(|p| p.unwrap_or(0.0)).collect();
    for (k, &j) in free.iter().enumerate() {
        action[j] = a_free[k];
    }

    let mut row_lambda = vec![0.0; rows];
    let mut row_sum = 0.0;
    for (&i, l) in eq_rows.iter().zip(&mu) {
        row_lambda[i] = *l;
        row_sum += l;
    }
    let eps = match reference {
        Some(r) => {
            row_lambda[r] = spec.slack_weight - row_sum;
            spec.rows[r].offset - dot(&spec.rows[r].coeff, &action)
        }
        None => 0.0,
    };

    let k_eps = spec.slack_weight;
    let row_abs: f64 = row_set.iter().map(|&i| row_lambda[i].abs()).sum();
    let ref_pull = reference.map_or(0.0, |r| k_eps * free_norm(r).sqrt());
    let (lambda, scales) = working
        .iter()
        .map(|&ci| {
            if Some(ci) == reference || ci == slack_idx {
                let l = if ci == slack_idx {
                    k_eps - row_sum
                } else {
                    row_lambda[ci]
                };
                (l, 1.0 + k_eps + row_abs)
            } else if ci < rows {
                (row_lambda[ci], 1.0 + row_lambda[ci].abs() + ref_pull)
            } else {
                let j = (ci - rows) % m;
                let terms = row_set
                    .iter()
                    .map(|&i| row_lambda[i] * spec.rows[i].coeff[j]);
                let pull: f64 = terms.clone().sum();
                let size: f64 = terms.map(f64::abs).sum();
                let l = if ci < rows + m {
                    action[j] - pull
                } else {
                    pull - action[j]
                };
                (l, 1.0 + action[j].abs() + size)
            }
        })
        .unzip();
    let mut x = action;
    x.push(eps);
    Some((x, lambda, scales))
}

/// `min 1/2 |a|^2 - q . a` subject to `row_k . a = b_k`, by the null-space
/// method on a QR factorisation of the constraint matrix. Returns the
/// minimiser and the multipliers of the equality rows.
fn equality_min_norm(
    eq: &[(Vec<f64>, f64)],
    m: usize,
    q_lin: &[f64],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let w = eq.len();
    if w > m {
        return None;
    }
    if m == 0 {
        return Some((Vec::new(), Vec::new()));
    }
    // A^T as an m x w matrix
    let mut at = vec![0.0; m * w];
    for (k, (row, _)) in eq.iter().enumerate() {
        for j in 0..m {
            at[j * w + k] = row[j];
        }
    }
    let (q, r) = householder_qr(&at, m, w);
    let rmax = r.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for k in 0..w {
        if r[k * w + k].abs() <= 1e-12 * rmax.max(1e-300) {
            return None;
        }
    }
    // R1^T z = b
    let mut z = vec![0.0; w];
    for k in 0..w {
        let s: f64 = (0..k).map(|i| r[i * w + k] * z[i]).sum();
        z[k] = (eq[k].1 - s) / r[k * w + k];
    }
    let mut a = vec![0.0; m];
    for j in 0..m {
        a[j] = (0..w).map(|k| q[j * m + k] * z[k]).sum();
    }
    // free directions
    let qnorm = dot(q_lin, q_lin).sqrt();
    for k in w..m {
        let mut y: f64 = (0..m).map(|j| q[j * m + k] * q_lin[j]).sum();
        if y.abs() <= 1e-13 * qnorm {
            y = 0.0;
        }
        for j in 0..m {
            a[j] += q[j * m + k] * y;
        }
    }
    // R1 lambda = Q1^T (a - q)
    let resid: Vec<f64> = a.iter().zip(q_lin).map(|(x, c)| x - c).collect();
    let mut lambda = vec![0.0; w];
    for k in (0..w).rev() {
        let qt: f64 = (0..m).map(|j| q[j * m + k] * resid[j]).sum();
        let s: f64 = (k + 1..w).map(|i| r[k * w + i] * lambda[i]).sum();
        lambda[k] = (qt - s) / r[k * w + k];
    }
    Some((a, lambda))
}

/// Whether the normal of constraint `cand` is outside the span of the working normals.
fn independent(cons: &[(Vec<f64>, f64)], working: &[usize], cand: usize) -> bool {
    let n = cons[cand].0.len();
    if working.len() >= n {
        return false;
    }
    let set: Vec<usize> = working
        .iter()
        .copied()
        .chain(core::iter::once(cand))
        .collect();
    let p = set.len();
    let mut gram = vec![0.0; p * p];
    for (a, &i) in set.iter().enumerate() {
        for (b, &j) in set.iter().enumerate() {
            let (u, v) = (&cons[i].0, &cons[j].0);
            gram[a * p + b] = dot(u, v) / (dot(u, u) * dot(v, v)).sqrt();
        }
    }
    lu_solve(&gram, p, &vec![0.0; p], 1e-10).is_some()
}

fn finish(
    spec: &QpSpec,
    mut x: Vec<f64>,
    working: Vec<usize>,
    multipliers: Vec<f64>,
    iterations: usize,
) -> QpSolution {
    let m = spec.action_dim();
    for j in 0..m {
        x[j] = x[j].clamp(spec.lower[j], spec.upper[j]);
    }
    let action = x[..m].to_vec();
    let needed = spec
        .rows
        .iter()
        .map(|r| r.offset - dot(&r.coeff, &action))
        .fold(0.0, f64::max);
    // with eps >= 0 in the working set the rows hold up to rounding; keep eps
    // exactly zero so K_eps does not amplify that rounding in the objective
    let eps = if working.contains(&(spec.constraint_count() - 1)) {
        0.0
    } else {
        needed.max(0.0)
    };
    let objective = spec.objective(&action, eps);
    let mut sol = QpSolution {
        action,
        eps,
        objective,
        active_set: working,
        multipliers,
        kkt_residual: 0.0,
        iterations,
    };
    sol.kkt_residual = kkt_check(spec, &sol, 1e-9).max();
    sol
}

/// Measures how far `(solution.action, solution.eps)` is from satisfying the
/// KKT conditions.
///
/// The check looks for any non-negative multiplier vector that certifies the
/// point. Candidates are recomputed by non-negative least squares over the
/// constraints whose slack is at most `active_tol` (once on raw data, once
/// with each equation weighted by its own scale); the multipliers carried by
/// `solution` are tried as well when present. Stationarity is reported per
/// component relative to the magnitude of the terms being balanced, so a
/// large slack weight cannot hide an error in the action components.
pub fn kkt_check(spec: &QpSpec, solution: &QpSolution, active_tol: f64) -> KktReport {
    let m = spec.action_dim();
    let mut x = solution.action.clone();
    x.push(solution.eps);
    let cons = spec.constraints();
    let grad = spec.gradient(&x);
    let columns: Vec<Vec<f64>> = cons.iter().map(|(n, _)| n.clone()).collect();
    let slacks: Vec<f64> = cons.iter().map(|(n, rhs)| dot(n, &x) - rhs).collect();
    let primal = slacks.iter().fold(0.0f64, |a, s| a.max(-s));

    let near: Vec<usize> = (0..cons.len())
        .filter(|&i| slacks[i] <= active_tol)
        .collect();
    let near_cols: Vec<Vec<f64>> = near.iter().map(|&i| columns[i].clone()).collect();
    let unit = vec![1.0; m + 1];
    let scaled: Vec<f64> = grad.iter().map(|g| 1.0 / g.abs().max(1.0)).collect();
    let mut candidates: Vec<Vec<f64>> = [unit, scaled]
        .iter()
        .map(|w| {
            let mut full = vec![0.0; cons.len()];
            for (&i, l) in near.iter().zip(weighted_nnls(&near_cols, &grad, w)) {
                full[i] = l;
            }
            full
        })
        .collect();
    let carried = &solution.multipliers;
    if carried.len() == cons.len() && carried.iter().all(|l| l.is_finite() && *l >= 0.0) {
        candidates.push(carried.clone());
    }

    let mut best = (f64::INFINITY, 0.0, 0.0);
    for lambda in &candidates {
        let stationarity = stationarity_of(&columns, &grad, lambda);
        let complementarity = lambda
            .iter()
            .zip(&slacks)
            .map(|(l, s)| (l * s).abs() / l.max(1.0))
            .fold(0.0, f64::max);
        if stationarity.max(complementarity) < best.0 {
            best = (
                stationarity.max(complementarity),
                stationarity,
                complementarity,
            );
        }
    }
    KktReport {
        stationarity: best.1,
        primal_feasibility: primal.max(0.0),
        complementarity: best.2,
    }
}

/// Per-component stationarity residual relative to the terms being balanced.
fn stationarity_of(columns: &[Vec<f64>], grad: &[f64], lambda: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for (j, g) in grad.iter().enumerate() {
        let mut r = *g;
        let mut mag = g.abs();
        for (col, l) in columns.iter().zip(lambda) {
            r -= l * col[j];
            mag += (l * col[j]).abs();
        }
        worst = worst.max(r.abs() / mag.max(1.0));
    }
    worst
}

/// NNLS on row-weighted, column-normalised data, mapped back to raw multipliers.
fn weighted_nnls(columns: &[Vec<f64>], grad: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut scaled = Vec::with_capacity(columns.len());
    let mut norms = Vec::with_capacity(columns.len());
    for col in columns {
        let c: Vec<f64> = col.iter().zip(weights).map(|(a, w)| a * w).collect();
        let norm = dot(&c, &c).sqrt().max(1e-300);
        norms.push(norm);
        scaled.push(c.iter().map(|v| v / norm).collect::<Vec<f64>>());
    }
    let target: Vec<f64> = grad.iter().zip(weights).map(|(g, w)| g * w).collect();
    nnls(&scaled, &target)
        .into_iter()
        .zip(&norms)
        .map(|(z, n)| z / n)
        .collect()
}

/// Lawson-Hanson non-negative least squares: `min |E z - f|`, `z >= 0`,
/// with `E` given by columns.
fn nnls(columns: &[Vec<f64>], f: &[f64]) -> Vec<f64> {
    let k = columns.len();
    let mut z = vec![0.0; k];
    if k == 0 {
        return z;
    }
    let mut passive: Vec<usize> = Vec::new();
    let mut excluded = vec![false; k];
    let residual = |z: &[f64]| -> Vec<f64> {
        let mut r = f.to_vec();
        for (col, zi) in columns.iter().zip(z) {
            r.iter_mut().zip(col).for_each(|(ri, c)| *ri -= zi * c);
        }
        r
    };
    for _ in 0..3 * k + 10 {
        let r = residual(&z);
        let pick = (0..k)
            .filter(|j| !passive.contains(j) && !excluded[*j])
            .map(|j| (j, dot(&columns[j], &r)))
            .fold(None, |best: Option<(usize, f64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            });
        let Some((j, w)) = pick else { break };
        if w <= 1e-13 {
            break;
        }
        passive.push(j);
        loop {
            let Some(sub) = least_squares(columns, &passive, f) else {
                passive.retain(|p| *p != j);
                excluded[j] = true;
                break;
            };
            if sub.iter().all(|v| *v > 0.0) {
                z.iter_mut().for_each(|v| *v = 0.0);
                for (p, v) in passive.iter().zip(&sub) {
                    z[*p] = *v;
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (p, v) in passive.iter().zip(&sub) {
                if *v <= 0.0 {
                    let denom = z[*p] - v;
                    if denom > 0.0 {
                        alpha = alpha.min(z[*p] / denom);
                    }
                }
            }
            for (p, v) in passive.iter().zip(&sub) {
                z[*p] += alpha * (v - z[*p]);
            }
            passive.retain(|p| z[*p] > 1e-15);
            for j in 0..k {
                if !passive.contains(&j) {
                    z[j] = 0.0;
                }
            }
            if passive.is_empty() {
                break;
            }
        }
    }
    z
}

fn least_squares(columns: &[Vec<f64>], set: &[usize], f: &[f64]) -> Option<Vec<f64>> {
    let p = set.len();
    let mut normal = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    for (a, &i) in set.iter().enumerate() {
        rhs[a] = dot(&columns[i], f);
        for (b, &j) in set.iter().enumerate() {
            normal[a * p + b] = dot(&columns[i], &columns[j]);
        }
    }
    lu_solve(&normal, p, &rhs, 1e-12)
}
