//! Dense feed-forward approximators with hand-written reverse-mode gradients.
//!
//! Used for the actor, the critic and the barrier compensator. Hidden layers
//! use `tanh`; the output activation is selectable so actors can be bounded
//! to the actuator range.

mod adam;
mod mlp;

pub use adam::{AdamConfig, OptimState};
pub use mlp::{Gradients, Layer, LayerGrad, Mlp, OutputActivation, Trace};

use alloc::vec::Vec;

use crate::Result;

/// One full-batch or mini-batch mean-squared-error step on `(inputs, targets)`.
///
/// Returns the batch loss `mean_i ||mlp(x_i) - y_i||^2` measured before the
/// update.
pub fn mse_step(
    mlp: &mut Mlp,
    opt: &mut OptimState,
    inputs: &[&[f64]],
    targets: &[&[f64]],
) -> Result<f64> {
    let mut grads = Gradients::zeros_like(mlp);
    let n = inputs.len().max(1) as f64;
    let mut loss = 0.0;
    let mut upstream = Vec::new();
    for (x, y) in inputs.iter().zip(targets) {
        let trace = mlp.forward_trace(x)?;
        upstream.clear();
        for (o, t) in trace.output().iter().zip(y.iter()) {
            let e = o - t;
            loss += e * e;
            upstream.push(2.0 * e / n);
        }
        mlp.backward_accumulate(&trace, &upstream, &mut grads)?;
    }
    opt.step(mlp, &grads)?;
    Ok(loss / n)
}

/// Mean-squared error of `mlp` over a dataset, without updating it.
pub fn mse(mlp: &Mlp, inputs: &[&[f64]], targets: &[&[f64]]) -> Result<f64> {
    let mut loss = 0.0;
    for (x, y) in inputs.iter().zip(targets) {
        let out = mlp.forward(x)?;
        loss += out
            .iter()
            .zip(y.iter())
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>();
    }
    Ok(loss / inputs.len().max(1) as f64)
}
