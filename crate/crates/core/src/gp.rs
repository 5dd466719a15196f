//! Gaussian-process regression of the residual dynamics.
//!
//! One scalar GP per state dimension. All dimensions share the same inputs
//! and kernel, so a single Cholesky factor of `K + noise * I` serves every
//! output and the predictive standard deviation is the same across them.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// Unused when std is in the dependency graph (test builds).
#[allow(unused_imports)]
use num_traits::Float;

use crate::cbf::NominalModel;
use crate::error::{ensure_finite, Error, Result};
use crate::linalg;

/// Squared-exponential kernel hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct KernelHyper {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl Default for KernelHyper {
    fn default() -> Self {
        KernelHyper {
            lengthscale: 1.0,
            signal_variance: 1.0,
            noise_variance: 1e-2,
        }
    }
}

impl KernelHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(Error::config("gp.lengthscale", "must be > 0"));
        }
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(Error::config("gp.signal_variance", "must be > 0"));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::config("gp.noise_variance", "must be >= 0"));
        }
        Ok(())
    }

    /// `signal_variance * exp(-|x - y|^2 / (2 lengthscale^2))`.
    pub fn kernel(&self, x: &[f64], y: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        self.signal_variance * (-d2 / (2.0 * self.lengthscale * self.lengthscale)).exp()
    }
}

/// A measured residual `d_hat = s_next - f(s) - g(s) a` at GP input `input`.
///
/// `input` is the state itself or the environment's feature vector of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub input: Vec<f64>,
    pub d_hat: Vec<f64>,
}

/// Computes the one-step residual of the nominal model.
pub fn extract_residual(
    state: &[f64],
    action: &[f64],
    next_state: &[f64],
    nominal: &dyn NominalModel,
    t: usize,
) -> Result<Vec<f64>> {
    ensure_finite(state, "residual state")?;
    ensure_finite(action, "residual action")?;
    ensure_finite(next_state, "residual next state")?;
    let predicted = nominal.predict(state, action, t)?;
    if predicted.len() != next_state.len() {
        return Err(Error::shape("residual", predicted.len(), next_state.len()));
    }
    let d = nominal.difference(next_state, &predicted);
    ensure_finite(&d, "residual")?;
    Ok(d)
}

/// Posterior mean and standard deviation per state dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Anything that can bound the residual dynamics at a state.
pub trait ResidualModel {
    /// `state` is the raw state, `input` its GP feature vector.
    fn predict(&self, state: &[f64], input: &[f64]) -> Result<Prediction>;
}

/// Trusts the nominal model completely: `mu = 0`, `sigma = 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroResidual {
    pub dim: usize,
}

impl ResidualModel for ZeroResidual {
    fn predict(&self, _: &[f64], _: &[f64]) -> Result<Prediction> {
        Ok(Prediction {
            mu: vec![0.0; self.dim],
            sigma: vec![0.0; self.dim],
        })
    }
}

/// Exact residual supplied by a closure over the raw state, with zero spread.
pub struct ExactResidual<F>(pub F);

impl<F> ResidualModel for ExactResidual<F>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    fn predict(&self, state: &[f64], _: &[f64]) -> Result<Prediction> {
        let mu = (self.0)(state);
        let sigma = vec![0.0; mu.len()];
        Ok(Prediction { mu, sigma })
    }
}

/// Fitted GP over a sliding window of residuals.
#[derive(Debug, Clone)]
pub struct GpModel {
    hyper: KernelHyper,
    capacity: usize,
    output_dim: usize,
    inputs: VecDeque<Vec<f64>>,
    targets: VecDeque<Vec<f64>>,
    chol: Vec<f64>,
    /// `alpha[d] = (K + noise I)^-1 y_d`.
    alpha: Vec<Vec<f64>>,
    jitter: f64,
}

const JITTERS: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

impl GpModel {
    /// Empty model: predictions return the prior.
    pub fn empty(output_dim: usize, hyper: KernelHyper, capacity: usize) -> Result<Self> {
        hyper.validate()?;
        if capacity == 0 {
            return Err(Error::config("gp.capacity", "must be >= 1"));
        }
        Ok(GpModel {
            hyper,
            capacity,
            output_dim,
            inputs: VecDeque::new(),
            targets: VecDeque::new(),
            chol: Vec::new(),
            alpha: vec![Vec::new(); output_dim],
            jitter: 0.0,
        })
    }

    /// Fits on the most recent `capacity` residuals.
    pub fn fit(
        residuals: &[Residual],
        output_dim: usize,
        hyper: KernelHyper,
        capacity: usize,
    ) -> Result<Self> {
        let mut model = GpModel::empty(output_dim, hyper, capacity)?;
        model.window_update(residuals)?;
        Ok(model)
    }

    /// Appends residuals, evicts the oldest beyond capacity and refits.
    pub fn window_update(&mut self, residuals: &[Residual]) -> Result<()> {
        let skip = residuals.len().saturating_sub(self.capacity);
        for r in &residuals[skip..] {
            if r.d_hat.len() != self.output_dim {
                return Err(Error::shape("gp target", self.output_dim, r.d_hat.len()));
            }
            if let Some(first) = self.inputs.front() {
                if first.len() != r.input.len() {
                    return Err(Error::shape("gp input", first.len(), r.input.len()));
                }
            }
            ensure_finite(&r.input, "gp input")?;
            ensure_finite(&r.d_hat, "gp target")?;
            self.inputs.push_back(r.input.clone());
            self.targets.push_back(r.d_hat.clone());
            if self.inputs.len() > self.capacity {
                self.inputs.pop_front();
                self.targets.pop_front();
            }
        }
        self.refit()
    }

    fn refit(&mut self) -> Result<()> {
        let n = self.inputs.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.hyper.kernel(&self.inputs[i], &self.inputs[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        let mut factor = None;
        for &jitter in &JITTERS {
            let mut kk = k.clone();
            for i in 0..n {
                kk[i * n + i] += self.hyper.noise_variance + jitter;
            }
            if let Some(l) = linalg::cholesky(&kk, n) {
                factor = Some((l, jitter));
                break;
            }
        }
        let (chol, jitter) = factor.ok_or_else(|| {
            Error::Model(format!(
                "kernel matrix of {n} points is not positive definite even with jitter 1e-6"
            ))
        })?;
        let alpha = (0..self.output_dim)
            .map(|d| {
                let mut y: Vec<f64> = self.targets.iter().map(|t| t[d]).collect();
                linalg::solve_lower_in_place(&chol, n, &mut y);
                linalg::solve_lower_transpose_in_place(&chol, n, &mut y);
                y
            })
            .collect();
        self.chol = chol;
        self.alpha = alpha;
        self.jitter = jitter;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn hyper(&self) -> &KernelHyper {
        &self.hyper
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Jitter that was added to the diagonal in the last fit.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn inputs(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.iter().map(|v| v.as_slice())
    }

    pub fn targets(&self) -> impl Iterator<Item = &[f64]> {
        self.targets.iter().map(|v| v.as_slice())
    }

    /// Lower Cholesky factor of `K + (noise + jitter) I`, row-major.
    pub fn cholesky_factor(&self) -> &[f64] {
        &self.chol
    }

    /// Posterior mean and standard deviation at `input`.
    pub fn predict_at(&self, input: &[f64]) -> Result<Prediction> {
        ensure_finite(input, "gp query")?;
        let n = self.inputs.len();
        if n == 0 {
            return Ok(Prediction {
                mu: vec![0.0; self.output_dim],
                sigma: vec![self.hyper.signal_variance.sqrt(); self.output_dim],
            });
        }
        if input.len() != self.inputs[0].len() {
            return Err(Error::shape("gp query", self.inputs[0].len(), input.len()));
        }
        let mut kstar: Vec<f64> = self
            .inputs
            .iter()
            .map(|x| self.hyper.kernel(x, input))
            .collect();
        let mu = self.alpha.iter().map(|a| linalg::dot(a, &kstar)).collect();
        linalg::solve_lower_in_place(&self.chol, n, &mut kstar);
        let var = (self.hyper.signal_variance - linalg::dot(&kstar, &kstar)).max(0.0);
        Ok(Prediction {
            mu,
            sigma: vec![var.sqrt(); self.output_dim],
        })
    }
}

impl ResidualModel for GpModel {
    fn predict(&self, _state: &[f64], input: &[f64]) -> Result<Prediction> {
        self.predict_at(input)
    }
}

/// Per-dimension `[mu - k sigma, mu + k sigma]`.
pub fn confidence_interval(mu: &[f64], sigma: &[f64], k_delta: f64) -> Vec<(f64, f64)> {
    mu.iter()
        .zip(sigma)
        .map(|(m, s)| (m - k_delta * s, m + k_delta * s))
        .collect()
}

/// Whether every component of `d` lies inside the `k_delta` band.
pub fn in_band(d: &[f64], mu: &[f64], sigma: &[f64], k_delta: f64) -> bool {
    d.iter()
        .zip(confidence_interval(mu, sigma, k_delta))
        .all(|(v, (lo, hi))| *v >= lo && *v <= hi)
}
