//! Off-policy actor-critic learner and the barrier compensator network.
//!
//! The learner follows DDPG: a deterministic actor bounded to the actuator
//! box, a Q critic over `(features, action)`, target copies tracked by soft
//! updates, and a uniform replay buffer. The critic sees the action that was
//! actually deployed; the actor gradient only flows through its own output.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// Unused when std is in the dependency graph (test builds).
#[allow(unused_imports)]
use num_traits::Float;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::approx::{mse, AdamConfig, Gradients, Mlp, OptimState, OutputActivation};
use crate::env::ActionBox;
use crate::error::{Error, Result};
use crate::Rng;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct AgentConfig {
    pub gamma: f64,
    /// Soft target-update rate.
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Exploration std at the first episode, as a fraction of the box half-width.
    pub noise_start: f64,
    /// Exploration std at the last episode, same units.
    pub noise_end: f64,
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Multiplies rewards before they enter the critic targets.
    pub reward_scale: f64,
    /// Minibatch updates between episodes; 0 means one per environment step.
    pub updates_per_episode: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.99,
            tau: 5e-3,
            batch_size: 64,
            buffer_capacity: 100_000,
            noise_start: 0.1,
            noise_end: 0.01,
            hidden: vec![64, 64],
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            reward_scale: 1.0,
            updates_per_episode: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config(
                "gamma",
                format!("must satisfy 0 < gamma < 1, got {}", self.gamma),
            ));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config(
                "tau",
                format!("must satisfy 0 < tau <= 1, got {}", self.tau),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::config("buffer_capacity", "must be positive"));
        }
        for (field, v) in [
            ("noise_start", self.noise_start),
            ("noise_end", self.noise_end),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(
                    field,
                    format!("must be a finite non-negative fraction, got {v}"),
                ));
            }
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden", "layer widths must be positive"));
        }
        for (field, v) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return Err(Error::config("reward_scale", "must be positive"));
        }
        Ok(())
    }

    /// Per-coordinate exploration std for `episode` of `episodes`, decaying
    /// linearly from `noise_start` to `noise_end` times the half-width.
    pub fn noise_std(&self, action_box: &ActionBox, episode: usize, episodes: usize) -> Vec<f64> {
        let frac = if episodes > 1 {
            (episode.min(episodes - 1)) as f64 / (episodes - 1) as f64
        } else {
            0.0
        };
        let level = self.noise_start + (self.noise_end - self.noise_start) * frac;
        action_box.half_width().iter().map(|h| level * h).collect()
    }
}

/// One stored step. States are feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Deployed action.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True only for genuine terminal states, not for time-limit truncation.
    pub done: bool,
}

/// Fixed-capacity ring buffer of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            data: Vec::new(),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform sample of `min(n, len)` distinct transitions.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Vec<&Transition> {
        let n = n.min(self.data.len());
        index::sample(rng, self.data.len(), n)
            .into_iter()
            .map(|i| &self.data[i])
            .collect()
    }
}

/// Regression network approximating the sum of past barrier corrections.
///
/// The network predicts targets divided by the box half-width; its last layer
/// starts at zero so the initial output is exactly zero.
#[derive(Debug, Clone)]
pub struct Compensator {
    net: Mlp,
    opt: OptimState,
    scale: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    /// Loss on the dataset before fitting, in half-width units.
    pub loss_before: f64,
    pub loss_after: f64,
    /// Fit kept the previous parameters because it did not improve the loss.
    pub reverted: bool,
}

impl Compensator {
    pub fn new(
        input_dim: usize,
        action_box: &ActionBox,
        hidden: &[usize],
        lr: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_box.dim());
        let mut net = Mlp::new(&sizes, OutputActivation::Identity, seed)?;
        net.zero_output_layer();
        let opt = OptimState::new(&net, AdamConfig::with_lr(lr));
        Ok(Compensator {
            net,
            opt,
            scale: action_box.half_width(),
        })
    }

    pub fn from_net(net: Mlp, action_box: &ActionBox, lr: f64) -> Result<Self> {
        if net.output_dim() != action_box.dim() {
            return Err(Error::shape(
                "compensator output",
                action_box.dim(),
                net.output_dim(),
            ));
        }
        let opt = OptimState::new(&net, AdamConfig::with_lr(lr));
        Ok(Compensator {
            net,
            opt,
            scale: action_box.half_width(),
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn predict(&self, features: &[f64]) -> Result<Vec<f64>> {
        let out = self.net.forward(features)?;
        Ok(out.iter().zip(&self.scale).map(|(o, s)| o * s).collect())
    }

    fn scaled_targets(&self, targets: &[Vec<f64>]) -> Vec<Vec<f64>> {
        targets
            .iter()
            .map(|t| t.iter().zip(&self.scale).map(|(v, s)| v / s).collect())
            .collect()
    }

    /// Minibatch MSE regression of `features -> target`, warm-started from
    /// the current parameters. If the loss on the whole dataset gets worse
    /// the previous parameters are restored.
    pub fn fit(
        &mut self,
        inputs: &[Vec<f64>],
        targets: &[Vec<f64>],
        epochs: usize,
        batch_size: usize,
        rng: &mut Rng,
    ) -> Result<Option<FitReport>> {
        if inputs.len() != targets.len() {
            return Err(Error::shape(
                "compensator dataset",
                inputs.len(),
                targets.len(),
            ));
        }
        if inputs.is_empty() {
            return Ok(None);
        }
        let scaled = self.scaled_targets(targets);
        let xs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
        let ys: Vec<&[f64]> = scaled.iter().map(|v| v.as_slice()).collect();
        let loss_before = mse(&self.net, &xs, &ys)?;
        let saved = (self.net.clone(), self.opt.clone());
        let batch = batch_size.max(1);
        let mut order: Vec<usize> = (0..xs.len()).collect();
        for _ in 0..epochs {
            shuffle(&mut order, rng);
            for chunk in order.chunks(batch) {
                let bx: Vec<&[f64]> = chunk.iter().map(|&i| xs[i]).collect();
                let by: Vec<&[f64]> = chunk.iter().map(|&i| ys[i]).collect();
                crate::approx::mse_step(&mut self.net, &mut self.opt, &bx, &by)?;
            }
        }
        let mut loss_after = mse(&self.net, &xs, &ys)?;
        let reverted = !(loss_after <= loss_before);
        if reverted {
            (self.net, self.opt) = saved;
            loss_after = loss_before;
        }
        Ok(Some(FitReport {
            loss_before,
            loss_after,
            reverted,
        }))
    }
}

fn shuffle(v: &mut [usize], rng: &mut Rng) {
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub critic_loss: f64,
    /// Mean `Q(s, actor(s) + u_bar(s))` over the batch.
    pub actor_objective: f64,
    pub updates: usize,
}

/// What the episode loop needs from a learner.
pub trait Learner {
    /// Action before filtering, with Gaussian exploration of the given std.
    fn propose(&self, features: &[f64], noise_std: &[f64], rng: &mut Rng) -> Result<Vec<f64>>;

    fn observe(&mut self, transition: Transition);

    /// Called between episodes. In guide mode `compensator` is the current
    /// `u_bar`, which is part of the policy being improved.
    fn improve(&mut self, compensator: Option<&Compensator>, rng: &mut Rng) -> Result<UpdateStats>;
}

#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub config: AgentConfig,
    action_box: ActionBox,
    half: Vec<f64>,
    feature_dim: usize,
    actor: Mlp,
    actor_target: Mlp,
    critic: Mlp,
    critic_target: Mlp,
    actor_opt: OptimState,
    critic_opt: OptimState,
    buffer: ReplayBuffer,
    /// Updates per `improve` call when the config says "one per step".
    default_updates: usize,
}

impl DdpgAgent {
    pub fn new(
        feature_dim: usize,
        action_box: &ActionBox,
        config: AgentConfig,
        horizon: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let m = action_box.dim();
        let half = action_box.half_width();
        if half.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::config(
                "action_box",
                "needs positive width on every coordinate",
            ));
        }
        let centred = action_box
            .lower
            .iter()
            .zip(&action_box.upper)
            .all(|(lo, hi)| (lo + hi).abs() <= 1e-12 * (hi - lo));
        if !centred {
            return Err(Error::config(
                "action_box",
                "actor output assumes a box centred at zero",
            ));
        }
        let mut actor_sizes = vec![feature_dim];
        actor_sizes.extend_from_slice(&config.hidden);
        actor_sizes.push(m);
        let mut critic_sizes = vec![feature_dim + m];
        critic_sizes.extend_from_slice(&config.hidden);
        critic_sizes.push(1);
        // one shared output scale; boxes here are one-dimensional or uniform
        let actor = Mlp::new(&actor_sizes, OutputActivation::ScaledTanh(half[0]), seed)?;
        let critic = Mlp::new(
            &critic_sizes,
            OutputActivation::Identity,
            seed.wrapping_add(1),
        )?;
        if half.iter().any(|h| (h - half[0]).abs() > 1e-12 * half[0]) {
            return Err(Error::config(
                "action_box",
                "all coordinates must share one half-width",
            ));
        }
        Ok(DdpgAgent {
            actor_opt: OptimState::new(&actor, AdamConfig::with_lr(config.actor_lr)),
            critic_opt: OptimState::new(&critic, AdamConfig::with_lr(config.critic_lr)),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            buffer: ReplayBuffer::new(config.buffer_capacity),
            action_box: action_box.clone(),
            half,
            feature_dim,
            default_updates: horizon.max(1),
            config,
        })
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn actor_target(&self) -> &Mlp {
        &self.actor_target
    }

    pub fn critic_target(&self) -> &Mlp {
        &self.critic_target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Replaces the online and target networks, e.g. from a checkpoint.
    pub fn load_networks(&mut self, actor: Mlp, critic: Mlp) -> Result<()> {
        if actor.layer_sizes() != self.actor.layer_sizes() {
            return Err(Error::Checkpoint(
                "actor layout does not match the config".into(),
            ));
        }
        if critic.layer_sizes() != self.critic.layer_sizes() {
            return Err(Error::Checkpoint(
                "critic layout does not match the config".into(),
            ));
        }
        self.actor_target = actor.clone();
        self.critic_target = critic.clone();
        self.actor_opt = OptimState::new(&actor, AdamConfig::with_lr(self.config.actor_lr));
        self.critic_opt = OptimState::new(&critic, AdamConfig::with_lr(self.config.critic_lr));
        self.actor = actor;
        self.critic = critic;
        Ok(())
    }

    fn critic_input(&self, features: &[f64], action: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.feature_dim + action.len());
        x.extend_from_slice(features);
        x.extend(action.iter().zip(&self.half).map(|(a, h)| a / h));
        x
    }

    /// `Q(s, a)` of the online critic.
    pub fn q_value(&self, features: &[f64], action: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(&self.critic_input(features, action))?[0])
    }

    /// One DDPG minibatch update. Does nothing while the buffer is empty.
    pub fn update(
        &mut self,
        compensator: Option<&Compensator>,
        rng: &mut Rng,
    ) -> Result<UpdateStats> {
        let batch: Vec<Transition> = self
            .buffer
            .sample(self.config.batch_size, rng)
            .into_iter()
            .cloned()
            .collect();
        if batch.is_empty() {
            return Ok(UpdateStats::default());
        }
        let n = batch.len() as f64;
        let gamma = self.config.gamma;

        // critic regression towards r + gamma * Q'(s', pi'(s') + u_bar(s'))
        let mut grads = Gradients::zeros_like(&self.critic);
        let mut critic_loss = 0.0;
        for t in &batch {
            let mut a_next = self.actor_target.forward(&t.next_state)?;
            if let Some(c) = compensator {
                let ub = c.predict(&t.next_state)?;
                a_next.iter_mut().zip(&ub).for_each(|(a, u)| *a += u);
            }
            let a_next = self.action_box.clip(&a_next);
            let bootstrap = if t.done {
                0.0
            } else {
                self.critic_target
                    .forward(&self.critic_input(&t.next_state, &a_next))?[0]
            };
            let y = self.config.reward_scale * t.reward + gamma * bootstrap;
            let trace = self
                .critic
                .forward_trace(&self.critic_input(&t.state, &t.action))?;
            let e = trace.output()[0] - y;
            critic_loss += e * e;
            self.critic
                .backward_accumulate(&trace, &[2.0 * e / n], &mut grads)?;
        }
        critic_loss /= n;
        if !critic_loss.is_finite() {
            return Err(Error::Training {
                layer: self.critic.layers().len() - 1,
                detail: format!("critic loss is {critic_loss}"),
            });
        }
        self.critic_opt.step(&mut self.critic, &grads)?;

        // actor ascent on Q(s, pi(s) + u_bar(s))
        let mut grads = Gradients::zeros_like(&self.actor);
        let mut objective = 0.0;
        for t in &batch {
            let trace = self.actor.forward_trace(&t.state)?;
            let mut a = trace.output().to_vec();
            if let Some(c) = compensator {
                let ub = c.predict(&t.state)?;
                a.iter_mut().zip(&ub).for_each(|(x, u)| *x += u);
            }
            let ctrace = self
                .critic
                .forward_trace(&self.critic_input(&t.state, &a))?;
            objective += ctrace.output()[0];
            let dx = self.critic.input_gradient(&ctrace, &[1.0])?;
            let upstream: Vec<f64> = dx[self.feature_dim..]
                .iter()
                .zip(&self.half)
                .map(|(g, h)| -g / h / n)
                .collect();
            self.actor
                .backward_accumulate(&trace, &upstream, &mut grads)?;
        }
        self.actor_opt.step(&mut self.actor, &grads)?;

        let tau = self.config.tau;
        self.actor_target.soft_update_from(&self.actor, tau);
        self.critic_target.soft_update_from(&self.critic, tau);
        Ok(UpdateStats {
            critic_loss,
            actor_objective: objective / n,
            updates: 1,
        })
    }
}

impl Learner for DdpgAgent {
    fn propose(&self, features: &[f64], noise_std: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let mut u = self.actor.forward(features)?;
        for (ui, s) in u.iter_mut().zip(noise_std) {
            if *s > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                *ui += s * z;
            }
        }
        Ok(self.action_box.clip(&u))
    }

    fn observe(&mut self, transition: Transition) {
        self.buffer.push(transition);
    }

    fn improve(&mut self, compensator: Option<&Compensator>, rng: &mut Rng) -> Result<UpdateStats> {
        let count = match self.config.updates_per_episode {
            0 => self.default_updates,
            k => k,
        };
        let mut total = UpdateStats::default();
        for _ in 0..count {
            let s = self.update(compensator, rng)?;
            total.critic_loss += s.critic_loss;
            total.actor_objective += s.actor_objective;
            total.updates += s.updates;
        }
        if total.updates > 0 {
            total.critic_loss /= total.updates as f64;
            total.actor_objective /= total.updates as f64;
        }
        Ok(total)
    }
}
