//! Oracle suites run by `rlcbf selftest`.
//!
//! - GP: posterior mean and variance against an explicit dense inverse of
//!   `K + noise I` computed by Gauss-Jordan elimination.
//! - QP: solver objective against a grid search of the box, plus KKT.
//! - Gradients: backpropagated parameter and input gradients against
//!   central finite differences.

use rand::Rng as _;

use rlcbf_core::approx::{Mlp, OutputActivation};
use rlcbf_core::gp::{GpModel, KernelHyper, Residual};
use rlcbf_core::qp::{kkt_check, solve_qp, QpSpec};
use rlcbf_core::{seeded_rng, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Worst error measure seen (suite-specific units).
    pub worst: f64,
    pub tolerance: f64,
    pub first_failure: Option<String>,
}

impl SuiteReport {
    fn new(name: &'static str, tolerance: f64) -> Self {
        SuiteReport {
            name,
            cases: 0,
            failures: 0,
            worst: 0.0,
            tolerance,
            first_failure: None,
        }
    }

    fn record(&mut self, error: f64, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if error.is_nan() || error > self.worst {
            self.worst = error;
        }
        if !(error <= self.tolerance) {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(describe());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

/// Inverse of a dense `n x n` matrix by Gauss-Jordan with partial pivoting.
pub fn gauss_jordan_inverse(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let w = 2 * n;
    let mut m = vec![0.0; n * w];
    for i in 0..n {
        m[i * w..i * w + n].copy_from_slice(&a[i * n..(i + 1) * n]);
        m[i * w + n + i] = 1.0;
    }
    for col in 0..n {
        let piv =
            (col..n).max_by(|&x, &y| m[x * w + col].abs().total_cmp(&m[y * w + col].abs()))?;
        if m[piv * w + col].abs() < 1e-300 {
            return None;
        }
        for k in 0..w {
            m.swap(col * w + k, piv * w + k);
        }
        let d = m[col * w + col];
        for k in 0..w {
            m[col * w + k] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r * w + col];
                if f != 0.0 {
                    for k in 0..w {
                        m[r * w + k] -= f * m[col * w + k];
                    }
                }
            }
        }
    }
    Some(
        (0..n)
            .flat_map(|i| m[i * w + n..(i + 1) * w].to_vec())
            .collect(),
    )
}

/// Posterior `(mu per output, variance)` from the dense formulas.
pub fn dense_gp_posterior(
    hyper: &KernelHyper,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    query: &[f64],
) -> Option<(Vec<f64>, f64)> {
    let n = xs.len();
    let outputs = ys.first().map_or(0, Vec::len);
    if n == 0 {
        return Some((vec![0.0; outputs], hyper.signal_variance));
    }
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] =
                hyper.kernel(&xs[i], &xs[j]) + if i == j { hyper.noise_variance } else { 0.0 };
        }
    }
    let inv = gauss_jordan_inverse(&k, n)?;
    let ks: Vec<f64> = xs.iter().map(|x| hyper.kernel(x, query)).collect();
    // w = K^-1 k*
    let w: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| inv[i * n + j] * ks[j]).sum())
        .collect();
    let mu = (0..outputs)
        .map(|d| (0..n).map(|i| w[i] * ys[i][d]).sum())
        .collect();
    let var = hyper.signal_variance - ks.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    Some((mu, var.max(0.0)))
}

pub fn gp_suite(instances: usize, seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new("gp posterior vs dense inverse", 1e-8);
    let mut rng = seeded_rng(seed);
    for case in 0..instances {
        let dim = rng.random_range(1..=3);
        let outputs = rng.random_range(1..=3);
        let n = rng.random_range(0..=20);
        let hyper = KernelHyper {
            lengthscale: rng.random_range(0.3..2.0),
            signal_variance: rng.random_range(0.5..2.0),
            noise_variance: rng.random_range(1e-3..1e-1),
        };
        let point = |rng: &mut Rng| {
            (0..dim)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect::<Vec<f64>>()
        };
        let xs: Vec<Vec<f64>> = (0..n).map(|_| point(&mut rng)).collect();
        let ys: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..outputs).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let residuals: Vec<Residual> = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| Residual {
                input: x.clone(),
                d_hat: y.clone(),
            })
            .collect();
        let model = match GpModel::fit(&residuals, outputs, hyper, 1000) {
            Ok(m) => m,
            Err(e) => {
                report.record(f64::INFINITY, || format!("case {case}: fit failed: {e}"));
                continue;
            }
        };
        let mut worst: f64 = 0.0;
        let mut queries: Vec<Vec<f64>> = (0..5).map(|_| point(&mut rng)).collect();
        queries.extend(xs.iter().take(2).cloned());
        for q in &queries {
            let Some((mu, var)) = dense_gp_posterior(&hyper, &xs, &ys, q) else {
                worst = f64::INFINITY;
                continue;
            };
            match model.predict_at(q) {
                Ok(p) => {
                    for (a, b) in p.mu.iter().zip(&mu) {
                        worst = worst.max((a - b).abs());
                    }
                    for s in &p.sigma {
                        worst = worst.max((s * s - var).abs());
                    }
                }
                Err(_) => worst = f64::INFINITY,
            }
        }
        report.record(worst, || {
            format!("case {case}: n = {n}, max error {worst:e}")
        });
    }
    report
}

/// Best objective over a grid with `per_axis` points per action coordinate.
pub fn grid_qp_best(spec: &QpSpec, per_axis: usize) -> f64 {
    let m = spec.action_dim();
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; m];
    loop {
        let a: Vec<f64> = (0..m)
            .map(|j| {
                spec.lower[j]
                    + (spec.upper[j] - spec.lower[j]) * idx[j] as f64 / (per_axis - 1) as f64
            })
            .collect();
        let eps = spec
            .rows
            .iter()
            .map(|r| r.offset - r.coeff.iter().zip(&a).map(|(c, x)| c * x).sum::<f64>())
            .fold(0.0, f64::max);
        best = best.min(spec.objective(&a, eps));
        let mut k = 0;
        loop {
            if k == m {
                return best;
            }
            idx[k] += 1;
            if idx[k] < per_axis {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

pub fn random_qp(rng: &mut Rng, m: usize) -> QpSpec {
    let lower: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..1.0)).collect();
    let upper = lower
        .iter()
        .map(|lo| lo + rng.random_range(0.0..6.0))
        .collect();
    let k = [0.5, 1.0, 10.0, 1e3, 1e12][rng.random_range(0..5)];
    let mut spec = QpSpec::new(lower, upper, k);
    for _ in 0..rng.random_range(0..=4) {
        let c = (0..m)
            .map(|_| match rng.random_range(0..4) {
                0 => 0.0,
                1 => rng.random_range(-1e-3..1e-3),
                _ => rng.random_range(-5.0..5.0),
            })
            .collect();
        spec = spec.with_row(c, rng.random_range(-20.0..20.0));
    }
    spec
}

/// Error is the larger of the objective excess over the grid (relative) and
/// the KKT residual.
pub fn qp_suite(instances: usize, seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new("qp vs grid oracle and kkt", 1e-7);
    let mut rng = seeded_rng(seed);
    for case in 0..instances {
        let m = 1 + case % 3;
        let spec = random_qp(&mut rng, m);
        let per_axis = if m == 3 { 41 } else { 61 };
        match solve_qp(&spec) {
            Ok(sol) => {
                let grid = grid_qp_best(&spec, per_axis);
                let excess = ((sol.objective - grid) / (1.0 + grid.abs())).max(0.0);
                let kkt = kkt_check(&spec, &sol, 1e-9).max();
                let err = if excess > 1e-9 { f64::INFINITY } else { kkt };
                report.record(err, || {
                    format!(
                        "case {case}: objective {} grid {grid} kkt {kkt:e}",
                        sol.objective
                    )
                });
            }
            Err(e) => report.record(f64::INFINITY, || format!("case {case}: solver error {e}")),
        }
    }
    report
}

/// Relative error between an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Adds `delta` to parameter `index` of layer `layer` (weights, then bias).
fn nudge(net: &mut Mlp, layer: usize, index: usize, delta: f64) {
    let l = &mut net.layers_mut()[layer];
    let nw = l.weights.len();
    if index < nw {
        l.weights[index] += delta;
    } else {
        l.bias[index - nw] += delta;
    }
}

/// Largest relative error over all parameters and inputs of one network for
/// the scalar loss `upstream . mlp(x)`.
pub fn gradient_check(mlp: &Mlp, x: &[f64], upstream: &[f64]) -> f64 {
    let h = 1e-6;
    let loss = |net: &Mlp, input: &[f64]| -> f64 {
        net.forward(input)
            .expect("shapes match")
            .iter()
            .zip(upstream)
            .map(|(o, u)| o * u)
            .sum()
    };
    let (grads, input_grad) = mlp.backward(x, upstream).expect("shapes match");
    let mut worst: f64 = 0.0;
    let mut probe = mlp.clone();
    for (li, lg) in grads.layers.iter().enumerate() {
        for (pi, g) in lg.weights.iter().chain(&lg.bias).enumerate() {
            nudge(&mut probe, li, pi, h);
            let up = loss(&probe, x);
            nudge(&mut probe, li, pi, -2.0 * h);
            let down = loss(&probe, x);
            nudge(&mut probe, li, pi, h);
            worst = worst.max(relative_error(*g, (up - down) / (2.0 * h)));
        }
    }
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let up = loss(mlp, &xp);
        xp[i] = x[i] - h;
        let down = loss(mlp, &xp);
        xp[i] = x[i];
        worst = worst.max(relative_error(input_grad[i], (up - down) / (2.0 * h)));
    }
    worst
}

pub fn gradient_suite(nets: usize, seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new("network gradients vs finite differences", 1e-4);
    let mut rng = seeded_rng(seed);
    for case in 0..nets {
        let depth = rng.random_range(1..=3);
        let mut sizes = vec![rng.random_range(1..=5)];
        for _ in 0..depth {
            sizes.push(rng.random_range(1..=8));
        }
        sizes.push(rng.random_range(1..=3));
        let output = match case % 3 {
            0 => OutputActivation::Identity,
            1 => OutputActivation::Tanh,
            _ => OutputActivation::ScaledTanh(rng.random_range(0.5..20.0)),
        };
        let mlp = Mlp::new(&sizes, output, rng.random()).expect("valid sizes");
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.5..1.5)).collect();
        let up: Vec<f64> = (0..*sizes.last().unwrap())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let err = gradient_check(&mlp, &x, &up);
        report.record(err, || {
            format!("case {case}: sizes {sizes:?} {output:?}: {err:e}")
        });
    }
    report
}

/// All suites with the sizes used by the CLI.
pub fn run_all(seed: u64) -> Vec<SuiteReport> {
    vec![
        gp_suite(50, seed),
        qp_suite(200, seed.wrapping_add(1)),
        gradient_suite(20, seed.wrapping_add(2)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_jordan_inverts() {
        let a = [4.0, 1.0, 2.0, 1.0, 3.0, 0.5, 2.0, 0.5, 5.0];
        let inv = gauss_jordan_inverse(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        assert!(gauss_jordan_inverse(&[1.0, 2.0, 2.0, 4.0], 2).is_none());
    }

    #[test]
    fn dense_posterior_single_point() {
        let hyper = KernelHyper {
            lengthscale: 1.0,
            signal_variance: 1.0,
            noise_variance: 0.01,
        };
        let (mu, var) = dense_gp_posterior(&hyper, &[vec![0.0]], &[vec![2.0]], &[0.0]).unwrap();
        assert!((mu[0] - 2.0 / 1.01).abs() < 1e-12);
        assert!((var - (1.0 - 1.0 / 1.01)).abs() < 1e-12);
    }

    #[test]
    fn grid_oracle_finds_unconstrained_minimum() {
        let spec = QpSpec::new(vec![-1.0], vec![1.0], 1.0);
        assert_eq!(grid_qp_best(&spec, 61), 0.0);
    }

    #[test]
    fn gradient_check_flags_a_wrong_gradient() {
        let mlp = Mlp::new(&[2, 3, 1], OutputActivation::Identity, 1).unwrap();
        assert!(gradient_check(&mlp, &[0.3, -0.2], &[1.0]) < 1e-6);
        assert!(relative_error(1.0, 1.1) > 1e-4);
    }

    #[test]
    fn suites_pass() {
        for r in [gp_suite(10, 7), qp_suite(12, 7), gradient_suite(6, 7)] {
            assert!(r.passed(), "{r:?}");
        }
    }
}
