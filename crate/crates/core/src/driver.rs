//! Episode loop and training schedule.
//!
//! Per episode the deployed action is `u_rl + u_bar + u_cbf`, where `u_bar`
//! is zero unless guiding and `u_cbf` is zero for the unfiltered baseline.
//! Between episodes the GP window is refit, the compensator regresses the
//! episode's `u_bar + u_cbf`, and the learner takes its gradient steps.

use alloc::vec;
use alloc::vec::Vec;

use crate::cbf::{barrier_values, norm, safe_filter, AffineBarrier, AuditStep, FilterProblem};
use crate::env::Environment;
use crate::gp::{extract_residual, GpModel, KernelHyper, Prediction, Residual, ResidualModel};
use crate::rl::{Compensator, FitReport, Learner, Transition, UpdateStats};
use crate::{Error, Result, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Mode {
    /// Plain learner, no filter.
    Baseline,
    /// Filter corrects the learner's action; the learner is not told.
    Compensate,
    /// Filter corrects `u_rl + u_bar`; the learner improves the sum.
    Guide,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Compensate => "compensate",
            Mode::Guide => "guide",
        }
    }

    pub fn is_filtered(self) -> bool {
        self != Mode::Baseline
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSettings {
    pub k_delta: f64,
    pub slack_weight: f64,
}

impl Default for FilterSettings {
    fn default() -> Self {
        FilterSettings {
            k_delta: 2.0,
            slack_weight: 1e12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub state: Vec<f64>,
    pub features: Vec<f64>,
    pub u_rl: Vec<f64>,
    pub u_bar: Vec<f64>,
    pub u_cbf: Vec<f64>,
    /// Exactly `(u_rl + u_bar) + u_cbf`.
    pub action: Vec<f64>,
    pub eps: f64,
    pub reward: f64,
    pub h: Vec<f64>,
    pub h_next: Vec<f64>,
    /// Residual prediction the filter used (empty in baseline mode).
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Realized `s' - f(s) - g(s) a`, and the GP input it is stored under.
    pub residual: Vec<f64>,
    pub residual_input: Vec<f64>,
    pub next_state: Vec<f64>,
    pub next_features: Vec<f64>,
    pub done: bool,
    pub kkt_residual: f64,
}

impl StepRecord {
    pub fn audit_step(&self) -> AuditStep {
        AuditStep {
            h: self.h.clone(),
            h_next: self.h_next.clone(),
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub mode: Mode,
    pub initial_state: Vec<f64>,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub ret: f64,
    /// Worst safety quantity over every visited state.
    pub safety_metric: f64,
    pub max_eps: f64,
    pub mean_ucbf_norm: f64,
    pub unsafe_episode: bool,
    /// Smallest barrier value over every visited state.
    pub min_h: f64,
    pub steps: usize,
}

impl EpisodeLog {
    pub fn summary(&self, env: &dyn Environment) -> EpisodeSummary {
        let limit = env.safety_limit();
        let mut worst = env.safety_value(&self.initial_state);
        let mut ret = 0.0;
        let mut max_eps: f64 = 0.0;
        let mut ucbf = 0.0;
        let mut min_h = f64::INFINITY;
        if let Some(first) = self.steps.first() {
            min_h = first.h.iter().copied().fold(min_h, f64::min);
        }
        for s in &self.steps {
            worst = limit.worst(worst, env.safety_value(&s.next_state));
            ret += s.reward;
            max_eps = max_eps.max(s.eps);
            ucbf += norm(&s.u_cbf);
            min_h = s.h_next.iter().copied().fold(min_h, f64::min);
        }
        let n = self.steps.len();
        EpisodeSummary {
            episode: self.episode,
            ret,
            safety_metric: worst,
            max_eps,
            mean_ucbf_norm: if n == 0 { 0.0 } else { ucbf / n as f64 },
            unsafe_episode: limit.violated(worst),
            min_h: if min_h.is_finite() { min_h } else { 0.0 },
            steps: n,
        }
    }

    pub fn transitions(&self, mode: Mode) -> impl Iterator<Item = Transition> + '_ {
        self.steps.iter().map(move |s| Transition {
            state: s.features.clone(),
            // compensating learners update around their own action
            action: if mode == Mode::Compensate {
                s.u_rl.clone()
            } else {
                s.action.clone()
            },
            reward: s.reward,
            next_state: s.next_features.clone(),
            done: s.done,
        })
    }

    pub fn residuals(&self) -> Vec<Residual> {
        self.steps
            .iter()
            .map(|s| Residual {
                input: s.residual_input.clone(),
                d_hat: s.residual.clone(),
            })
            .collect()
    }

    /// Compensator dataset `(features, u_bar + u_cbf)`.
    pub fn compensator_pairs(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        self.steps
            .iter()
            .map(|s| {
                let target = s.u_bar.iter().zip(&s.u_cbf).map(|(b, c)| b + c).collect();
                (s.features.clone(), target)
            })
            .unzip()
    }

    pub fn audit_steps(&self) -> Vec<AuditStep> {
        self.steps.iter().map(StepRecord::audit_step).collect()
    }
}

/// Everything fixed during one episode.
pub struct EpisodeContext<'a> {
    pub env: &'a dyn Environment,
    pub barriers: &'a [AffineBarrier],
    pub residual: &'a dyn ResidualModel,
    /// Consulted in guide mode only.
    pub compensator: Option<&'a Compensator>,
    pub mode: Mode,
    pub filter: FilterSettings,
    pub noise_std: &'a [f64],
    pub episode: usize,
    pub residual_input: ResidualInput,
}

/// What the residual model is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ResidualInput {
    /// Feature vector of the state.
    #[default]
    State,
    /// Features followed by the action in half-width units: the committed
    /// action `u_rl + u_bar` when predicting, the deployed one when storing.
    StateAction,
}

impl ResidualInput {
    pub fn build(self, features: &[f64], action: &[f64], half: &[f64]) -> Vec<f64> {
        let mut x = features.to_vec();
        if self == ResidualInput::StateAction {
            x.extend(action.iter().zip(half).map(|(a, h)| a / h));
        }
        x
    }
}

/// Rolls out one episode without changing the learner.
pub fn run_episode(
    ctx: &EpisodeContext<'_>,
    learner: &dyn Learner,
    rng: &mut Rng,
) -> Result<EpisodeLog> {
    let env = ctx.env;
    let m = env.action_dim();
    let nominal = env.nominal();
    let half = env.action_box().half_width();
    let mut state = env.sample_init(rng, ctx.barriers);
    let mut log = EpisodeLog {
        episode: ctx.episode,
        mode: ctx.mode,
        initial_state: state.clone(),
        steps: Vec::with_capacity(env.horizon()),
    };
    for t in 0..env.horizon() {
        let features = env.features(&state);
        let u_rl = learner.propose(&features, ctx.noise_std, rng)?;
        let u_bar = match (ctx.mode, ctx.compensator) {
            (Mode::Guide, Some(c)) => c.predict(&features)?,
            _ => vec![0.0; m],
        };
        let base: Vec<f64> = u_rl.iter().zip(&u_bar).map(|(r, b)| r + b).collect();
        let gp_input = ctx.residual_input.build(&features, &base, &half);
        let (u_cbf, eps, kkt, prediction) = if ctx.mode.is_filtered() {
            let result = safe_filter(&FilterProblem {
                state: &state,
                input: &gp_input,
                t,
                proposed: &base,
                barriers: ctx.barriers,
                nominal,
                residual: ctx.residual,
                k_delta: ctx.filter.k_delta,
                action_box: env.action_box(),
                slack_weight: ctx.filter.slack_weight,
            })?;
            (
                result.u_cbf,
                result.eps,
                result.kkt_residual,
                result.prediction,
            )
        } else {
            let empty = Prediction {
                mu: Vec::new(),
                sigma: Vec::new(),
            };
            (vec![0.0; m], 0.0, 0.0, empty)
        };
        let action: Vec<f64> = base.iter().zip(&u_cbf).map(|(b, c)| b + c).collect();
        let reward = env.reward(&state, &action, t);
        let next_state = env.step(&state, &action, t, rng);
        if next_state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("environment state"));
        }
        let clipped = env.action_box().clip(&action);
        let residual = extract_residual(&state, &clipped, &next_state, nominal, t)?;
        let residual_input = ctx.residual_input.build(&features, &clipped, &half);
        let done = env.is_terminal(&next_state);
        log.steps.push(StepRecord {
            t,
            h: barrier_values(ctx.barriers, &state),
            h_next: barrier_values(ctx.barriers, &next_state),
            next_features: env.features(&next_state),
            state: core::mem::replace(&mut state, next_state.clone()),
            features,
            u_rl,
            u_bar,
            u_cbf,
            action,
            eps,
            reward,
            mu: prediction.mu,
            sigma: prediction.sigma,
            residual,
            residual_input,
            next_state,
            done,
            kkt_residual: kkt,
        });
        if done {
            break;
        }
    }
    Ok(log)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub episodes: usize,
    pub filter: FilterSettings,
    pub gp_hyper: KernelHyper,
    pub gp_capacity: usize,
    pub residual_input: ResidualInput,
    pub compensator_epochs: usize,
    pub compensator_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Guide,
            episodes: 150,
            filter: FilterSettings::default(),
            gp_hyper: KernelHyper::default(),
            gp_capacity: 1000,
            residual_input: ResidualInput::State,
            compensator_epochs: 30,
            compensator_batch: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::config("episodes", "must be at least 1"));
        }
        if !(self.filter.k_delta >= 0.0 && self.filter.k_delta.is_finite()) {
            return Err(Error::config("k_delta", "must be finite and >= 0"));
        }
        if !(self.filter.slack_weight > 0.0 && self.filter.slack_weight.is_finite()) {
            return Err(Error::config("slack_weight", "must be finite and > 0"));
        }
        if self.gp_capacity == 0 {
            return Err(Error::config("gp_capacity", "must be at least 1"));
        }
        if self.compensator_batch == 0 {
            return Err(Error::config("compensator_batch", "must be at least 1"));
        }
        self.gp_hyper.validate()
    }
}

/// What happened between two episodes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Interlude {
    pub update: UpdateStats,
    pub compensator: Option<FitReport>,
    pub gp_points: usize,
}

/// Owns the mutable state of one training run.
pub struct Trainer<'a, L: Learner> {
    pub env: &'a dyn Environment,
    pub barriers: Vec<AffineBarrier>,
    pub config: TrainConfig,
    pub learner: L,
    pub compensator: Compensator,
    pub gp: GpModel,
    noise: crate::rl::AgentConfig,
    rng: Rng,
    episode: usize,
}

impl<'a, L: Learner> Trainer<'a, L> {
    /// `noise` supplies the exploration schedule.
    pub fn new(
        env: &'a dyn Environment,
        barriers: Vec<AffineBarrier>,
        config: TrainConfig,
        learner: L,
        compensator: Compensator,
        noise: crate::rl::AgentConfig,
        rng: Rng,
    ) -> Result<Self> {
        config.validate()?;
        for b in &barriers {
            b.validate()?;
            if b.p.len() != env.state_dim() {
                return Err(Error::shape("barrier normal", env.state_dim(), b.p.len()));
            }
        }
        let gp = GpModel::empty(env.state_dim(), config.gp_hyper, config.gp_capacity)?;
        Ok(Trainer {
            env,
            barriers,
            config,
            learner,
            compensator,
            gp,
            noise,
            rng,
            episode: 0,
        })
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn is_finished(&self) -> bool {
        self.episode >= self.config.episodes
    }

    /// Runs the next episode, then refits the models from it.
    pub fn step_episode(&mut self) -> Result<(EpisodeLog, Interlude)> {
        let noise_std =
            self.noise
                .noise_std(self.env.action_box(), self.episode, self.config.episodes);
        let mode = self.config.mode;
        let log = {
            let ctx = EpisodeContext {
                env: self.env,
                barriers: &self.barriers,
                residual: &self.gp,
                compensator: Some(&self.compensator),
                mode,
                filter: self.config.filter,
                noise_std: &noise_std,
                episode: self.episode,
                residual_input: self.config.residual_input,
            };
            run_episode(&ctx, &self.learner, &mut self.rng)?
        };
        let mut interlude = Interlude::default();
        for t in log.transitions(mode) {
            self.learner.observe(t);
        }
        if mode.is_filtered() {
            self.gp.window_update(&log.residuals())?;
            interlude.gp_points = self.gp.len();
        }
        if mode == Mode::Guide {
            let (x, y) = log.compensator_pairs();
            interlude.compensator = self.compensator.fit(
                &x,
                &y,
                self.config.compensator_epochs,
                self.config.compensator_batch,
                &mut self.rng,
            )?;
        }
        let comp = (mode == Mode::Guide).then_some(&self.compensator);
        interlude.update = self.learner.improve(comp, &mut self.rng)?;
        self.episode += 1;
        Ok((log, interlude))
    }

    /// Runs the remaining episodes, handing each log to `on_episode`.
    pub fn run<F>(&mut self, mut on_episode: F) -> Result<()>
    where
        F: FnMut(&EpisodeLog, &Interlude) -> Result<()>,
    {
        while !self.is_finished() {
            let (log, interlude) = self.step_episode()?;
            on_episode(&log, &interlude)?;
        }
        Ok(())
    }

    /// Noise-free filtered rollouts of the current policy.
    pub fn evaluate(&self, episodes: usize, rng: &mut Rng) -> Result<ProposedEval> {
        let ctx = EpisodeContext {
            env: self.env,
            barriers: &self.barriers,
            residual: &self.gp,
            compensator: Some(&self.compensator),
            mode: self.config.mode,
            filter: self.config.filter,
            noise_std: &vec![0.0; self.env.action_dim()],
            episode: self.episode,
            residual_input: self.config.residual_input,
        };
        proposed_policy_eval(&ctx, &self.learner, episodes, rng)
    }
}

/// Returns of the deployed controller and of the same controller without the
/// filter correction, scored along the same filtered rollouts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposedEval {
    pub episodes: usize,
    pub deployed_return: f64,
    pub proposed_return: f64,
    pub mean_ucbf_norm: f64,
}

pub fn proposed_policy_eval(
    ctx: &EpisodeContext<'_>,
    learner: &dyn Learner,
    episodes: usize,
    rng: &mut Rng,
) -> Result<ProposedEval> {
    let mut deployed = 0.0;
    let mut proposed = 0.0;
    let mut ucbf = 0.0;
    let mut steps = 0usize;
    for _ in 0..episodes {
        let log = run_episode(ctx, learner, rng)?;
        for s in &log.steps {
            let u_prop: Vec<f64> = s.u_rl.iter().zip(&s.u_bar).map(|(r, b)| r + b).collect();
            deployed += s.reward;
            proposed += if s.u_cbf.iter().all(|c| *c == 0.0) {
                s.reward
            } else {
                ctx.env.reward(&s.state, &u_prop, s.t)
            };
            ucbf += norm(&s.u_cbf);
            steps += 1;
        }
    }
    let n = episodes.max(1) as f64;
    Ok(ProposedEval {
        episodes,
        deployed_return: deployed / n,
        proposed_return: proposed / n,
        mean_ucbf_norm: if steps == 0 { 0.0 } else { ucbf / steps as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{BarrierShape, Pendulum, PendulumParams};
    use crate::gp::ZeroResidual;
    use crate::rl::{AgentConfig, DdpgAgent};
    use crate::seeded_rng;

    fn small_agent(env: &dyn Environment, seed: u64) -> DdpgAgent {
        let config = AgentConfig {
            hidden: vec![16, 16],
            batch_size: 16,
            updates_per_episode: 5,
            ..AgentConfig::default()
        };
        DdpgAgent::new(
            env.feature_dim(),
            env.action_box(),
            config,
            env.horizon(),
            seed,
        )
        .unwrap()
    }

    fn short_pendulum() -> Pendulum {
        Pendulum::new(PendulumParams {
            horizon: 40,
            ..PendulumParams::default()
        })
    }

    fn shape() -> BarrierShape {
        BarrierShape {
            eta: 0.5,
            lookahead: 0.25,
        }
    }

    fn trainer<'a>(env: &'a Pendulum, mode: Mode, seed: u64) -> Trainer<'a, DdpgAgent> {
        let config = TrainConfig {
            mode,
            episodes: 3,
            compensator_epochs: 5,
            ..TrainConfig::default()
        };
        let comp = Compensator::new(2, env.action_box(), &[8], 1e-3, seed + 1).unwrap();
        Trainer::new(
            env,
            env.default_barriers(shape()),
            config,
            small_agent(env, seed),
            comp,
            AgentConfig::default(),
            seeded_rng(seed),
        )
        .unwrap()
    }

    #[test]
    fn deployed_action_is_the_exact_sum_of_components() {
        let env = short_pendulum();
        for mode in [Mode::Baseline, Mode::Compensate, Mode::Guide] {
            let mut tr = trainer(&env, mode, 3);
            for _ in 0..3 {
                let (log, _) = tr.step_episode().unwrap();
                for s in &log.steps {
                    for j in 0..s.action.len() {
                        assert_eq!(s.action[j], (s.u_rl[j] + s.u_bar[j]) + s.u_cbf[j]);
                    }
                    assert!(env.action_box().contains(&s.action, 1e-9), "{:?}", s.action);
                    if mode != Mode::Guide {
                        assert!(s.u_bar.iter().all(|u| *u == 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn baseline_never_filters() {
        let env = short_pendulum();
        let mut tr = trainer(&env, Mode::Baseline, 5);
        let (log, interlude) = tr.step_episode().unwrap();
        assert_eq!(log.steps.len(), env.horizon());
        assert!(log
            .steps
            .iter()
            .all(|s| s.u_cbf == vec![0.0] && s.eps == 0.0 && s.mu.is_empty()));
        assert_eq!(interlude.gp_points, 0);
        assert!(tr.gp.is_empty());
    }

    #[test]
    fn fresh_compensator_makes_guide_match_compensate() {
        let env = short_pendulum();
        let mut guide = trainer(&env, Mode::Guide, 9);
        let mut comp = trainer(&env, Mode::Compensate, 9);
        let (a, _) = guide.step_episode().unwrap();
        let (b, _) = comp.step_episode().unwrap();
        assert!(a.steps.iter().all(|s| s.u_bar == vec![0.0]));
        assert_eq!(a.steps.len(), b.steps.len());
        for (x, y) in a.steps.iter().zip(&b.steps) {
            assert_eq!(x.action, y.action);
            assert_eq!(x.state, y.state);
        }
    }

    #[test]
    fn compensator_targets_are_the_logged_corrections() {
        let env = short_pendulum();
        let mut tr = trainer(&env, Mode::Guide, 11);
        tr.step_episode().unwrap();
        let (log, _) = tr.step_episode().unwrap();
        let (x, y) = log.compensator_pairs();
        assert_eq!(x.len(), log.steps.len());
        for (s, target) in log.steps.iter().zip(&y) {
            assert_eq!(target[0], s.u_bar[0] + s.u_cbf[0]);
        }
    }

    #[test]
    fn same_seed_same_run() {
        let env = short_pendulum();
        let run = |seed| {
            let mut tr = trainer(&env, Mode::Guide, seed);
            let mut out = Vec::new();
            tr.run(|log, _| {
                out.push(log.summary(&env));
                Ok(())
            })
            .unwrap();
            out
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }

    #[test]
    fn gp_window_grows_with_filtered_episodes() {
        let env = short_pendulum();
        let mut tr = trainer(&env, Mode::Compensate, 2);
        let (_, i1) = tr.step_episode().unwrap();
        let (_, i2) = tr.step_episode().unwrap();
        assert_eq!(i1.gp_points, 40);
        assert_eq!(i2.gp_points, 80);
    }

    #[test]
    fn summary_tracks_worst_angle_and_return() {
        let env = short_pendulum();
        let log = EpisodeLog {
            episode: 0,
            mode: Mode::Baseline,
            initial_state: vec![0.2, 0.0],
            steps: vec![StepRecord {
                t: 0,
                state: vec![0.2, 0.0],
                features: vec![0.2, 0.0],
                u_rl: vec![0.0],
                u_bar: vec![0.0],
                u_cbf: vec![3.0],
                action: vec![3.0],
                eps: 0.25,
                reward: -1.0,
                h: vec![0.8],
                h_next: vec![-0.1],
                mu: vec![],
                sigma: vec![],
                residual: vec![0.0, 0.0],
                residual_input: vec![0.2, 0.0],
                next_state: vec![-1.1, 0.0],
                next_features: vec![-1.1, 0.0],
                done: false,
                kkt_residual: 0.0,
            }],
        };
        let s = log.summary(&env);
        assert_eq!(s.ret, -1.0);
        assert!((s.safety_metric - 1.1).abs() < 1e-12);
        assert!(s.unsafe_episode);
        assert_eq!(s.max_eps, 0.25);
        assert_eq!(s.mean_ucbf_norm, 3.0);
        assert_eq!(s.min_h, -0.1);
    }

    #[test]
    fn unfiltered_evaluation_scores_identically() {
        let env = short_pendulum();
        let agent = small_agent(&env, 1);
        let barriers = env.default_barriers(shape());
        let zero = ZeroResidual { dim: 2 };
        let ctx = EpisodeContext {
            env: &env,
            barriers: &barriers,
            residual: &zero,
            compensator: None,
            mode: Mode::Baseline,
            filter: FilterSettings::default(),
            noise_std: &[0.0],
            episode: 0,
            residual_input: ResidualInput::State,
        };
        let eval = proposed_policy_eval(&ctx, &agent, 2, &mut seeded_rng(0)).unwrap();
        assert_eq!(eval.deployed_return, eval.proposed_return);
        assert_eq!(eval.mean_ucbf_norm, 0.0);
    }
}
