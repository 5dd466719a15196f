use alloc::format;

// Unused when std is in the dependency graph (test builds).
#[allow(unused_imports)]
use num_traits::Float;

use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub config: AdamConfig,
    first: Gradients,
    second: Gradients,
    steps: u64,
}

impl OptimState {
    pub fn new(mlp: &Mlp, config: AdamConfig) -> Self {
        OptimState {
            config,
            first: Gradients::zeros_like(mlp),
            second: Gradients::zeros_like(mlp),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one bias-corrected Adam update (descent on `grads`).
    ///
    /// Fails without touching the network if any gradient is non-finite.
    pub fn step(&mut self, mlp: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != self.first.layers.len() {
            return Err(Error::shape(
                "adam gradients",
                self.first.layers.len(),
                grads.layers.len(),
            ));
        }
        for (i, (g, m)) in grads.layers.iter().zip(&self.first.layers).enumerate() {
            if g.weights.len() != m.weights.len() || g.bias.len() != m.bias.len() {
                return Err(Error::shape(
                    "adam gradients",
                    m.weights.len(),
                    g.weights.len(),
                ));
            }
            if let Some(bad) = g.weights.iter().chain(&g.bias).find(|v| !v.is_finite()) {
                return Err(Error::Training {
                    layer: i,
                    detail: format!("non-finite gradient {bad}"),
                });
            }
        }
        self.steps += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.steps as f64;
        let c1 = 1.0 - beta1.powf(t);
        let c2 = 1.0 - beta2.powf(t);
        for (((layer, g), m), v) in mlp
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first.layers)
            .zip(&mut self.second.layers)
        {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let gs = g.weights.iter().chain(&g.bias);
            let ms = m.weights.iter_mut().chain(m.bias.iter_mut());
            let vs = v.weights.iter_mut().chain(v.bias.iter_mut());
            for (((p, g), m), v) in params.zip(gs).zip(ms).zip(vs) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
