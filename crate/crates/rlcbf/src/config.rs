//! Experiment configuration files.
//!
//! A config is a TOML document; every key is optional and unknown keys are
//! rejected. `configs/defaults.toml` lists every key with its default value.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rlcbf_core::cbf::AffineBarrier;
use rlcbf_core::driver::{FilterSettings, Mode, ResidualInput, TrainConfig};
use rlcbf_core::env::{BarrierShape, CarChain, CarParams, Environment, Pendulum, PendulumParams};
use rlcbf_core::gp::KernelHyper;
use rlcbf_core::rl::AgentConfig;

/// Bundled presets, addressable by name on the command line.
pub const PRESETS: &[(&str, &str)] = &[
    ("defaults", include_str!("../configs/defaults.toml")),
    (
        "pendulum_baseline",
        include_str!("../configs/pendulum_baseline.toml"),
    ),
    (
        "pendulum_compensate",
        include_str!("../configs/pendulum_compensate.toml"),
    ),
    (
        "pendulum_guide",
        include_str!("../configs/pendulum_guide.toml"),
    ),
    ("car_baseline", include_str!("../configs/car_baseline.toml")),
    (
        "car_compensate",
        include_str!("../configs/car_compensate.toml"),
    ),
    ("car_guide", include_str!("../configs/car_guide.toml")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    #[default]
    Pendulum,
    Car,
}

impl EnvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::Pendulum => "pendulum",
            EnvKind::Car => "car",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    pub k_delta: f64,
    pub slack_weight: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        let d = FilterSettings::default();
        FilterSection {
            k_delta: d.k_delta,
            slack_weight: d.slack_weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BarrierSection {
    pub eta: f64,
    /// Velocity lookahead in seconds; per-environment default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lookahead: Option<f64>,
    /// Explicit `(p, q, eta)` barriers replacing the environment's defaults.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub custom: Vec<AffineBarrier>,
}

impl Default for BarrierSection {
    fn default() -> Self {
        BarrierSection {
            eta: 0.5,
            lookahead: None,
            custom: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpSection {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub capacity: usize,
    /// `state` or `state_action`; per-environment default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<ResidualInput>,
}

impl Default for GpSection {
    fn default() -> Self {
        let h = KernelHyper::default();
        GpSection {
            lengthscale: h.lengthscale,
            signal_variance: h.signal_variance,
            noise_variance: h.noise_variance,
            capacity: 1000,
            input: None,
        }
    }
}

impl GpSection {
    pub fn hyper(&self) -> KernelHyper {
        KernelHyper {
            lengthscale: self.lengthscale,
            signal_variance: self.signal_variance,
            noise_variance: self.noise_variance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompensatorSection {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
}

impl Default for CompensatorSection {
    fn default() -> Self {
        CompensatorSection {
            hidden: vec![32, 32],
            lr: 1e-3,
            epochs: 30,
            batch: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub mode: Mode,
    /// 150 for the pendulum and 200 for the car when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes: Option<usize>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// Also write per-step CSVs.
    pub verbose: bool,
    pub filter: FilterSection,
    pub barrier: BarrierSection,
    pub gp: GpSection,
    pub agent: AgentConfig,
    pub compensator: CompensatorSection,
    pub pendulum: PendulumParams,
    pub car: CarParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env: EnvKind::Pendulum,
            mode: Mode::Baseline,
            episodes: None,
            seeds: vec![0],
            out: PathBuf::from("runs"),
            verbose: false,
            filter: FilterSection::default(),
            barrier: BarrierSection::default(),
            gp: GpSection::default(),
            agent: AgentConfig::default(),
            compensator: CompensatorSection::default(),
            pendulum: PendulumParams::default(),
            car: CarParams::default(),
        }
    }
}

/// Every problem found in a config, in field order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("{origin}: invalid config:\n{errors}")]
    Invalid {
        origin: String,
        errors: ConfigErrors,
    },
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Loads and validates a preset name or a file path. Existing files win
    /// over preset names.
    pub fn load(name_or_path: &str) -> Result<Self, LoadError> {
        let path = Path::new(name_or_path);
        let (origin, text) = if path.is_file() {
            let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            (path.display().to_string(), text)
        } else if let Some((_, text)) = PRESETS.iter().find(|(n, _)| *n == name_or_path) {
            (format!("preset {name_or_path}"), (*text).to_string())
        } else {
            return Err(LoadError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or preset"),
            });
        };
        Self::parse_validated(&text, &origin)
    }

    pub fn parse_validated(text: &str, origin: &str) -> Result<Self, LoadError> {
        let config = Self::from_toml(text).map_err(|e| LoadError::Parse {
            origin: origin.to_string(),
            message: e.to_string(),
        })?;
        config.validate().map_err(|errors| LoadError::Invalid {
            origin: origin.to_string(),
            errors,
        })?;
        Ok(config)
    }

    pub fn episodes(&self) -> usize {
        self.episodes.unwrap_or(match self.env {
            EnvKind::Pendulum => 150,
            EnvKind::Car => 200,
        })
    }

    pub fn lookahead(&self) -> f64 {
        self.barrier.lookahead.unwrap_or(match self.env {
            EnvKind::Pendulum => 0.25,
            EnvKind::Car => 0.5,
        })
    }

    /// The pendulum's actuation gain is part of the model error, so its
    /// residual depends on the action.
    pub fn residual_input(&self) -> ResidualInput {
        self.gp.input.unwrap_or(match self.env {
            EnvKind::Pendulum => ResidualInput::StateAction,
            EnvKind::Car => ResidualInput::State,
        })
    }

    pub fn build_env(&self) -> Box<dyn Environment> {
        match self.env {
            EnvKind::Pendulum => Box::new(Pendulum::new(self.pendulum.clone())),
            EnvKind::Car => Box::new(CarChain::new(self.car.clone())),
        }
    }

    pub fn barriers(&self, env: &dyn Environment) -> Vec<AffineBarrier> {
        if self.barrier.custom.is_empty() {
            env.default_barriers(BarrierShape {
                eta: self.barrier.eta,
                lookahead: self.lookahead(),
            })
        } else {
            self.barrier.custom.clone()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            mode: self.mode,
            episodes: self.episodes(),
            filter: FilterSettings {
                k_delta: self.filter.k_delta,
                slack_weight: self.filter.slack_weight,
            },
            gp_hyper: self.gp.hyper(),
            gp_capacity: self.gp.capacity,
            residual_input: self.residual_input(),
            compensator_epochs: self.compensator.epochs,
            compensator_batch: self.compensator.batch,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self.env {
            EnvKind::Pendulum => 2,
            EnvKind::Car => rlcbf_core::env::CAR_STATE_DIM,
        }
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut errs = Vec::new();
        let mut bad = |field: &str, reason: &str| errs.push(format!("{field}: {reason}"));

        if self.episodes == Some(0) {
            bad("episodes", "must be at least 1");
        }
        if self.seeds.is_empty() {
            bad("seeds", "must list at least one seed");
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            bad("seeds", "must not repeat");
        }
        if !(self.filter.k_delta >= 0.0 && self.filter.k_delta.is_finite()) {
            bad("filter.k_delta", "must be finite and >= 0");
        }
        if !(self.filter.slack_weight > 0.0 && self.filter.slack_weight.is_finite()) {
            bad("filter.slack_weight", "must be finite and > 0");
        }
        if !(0.0..=1.0).contains(&self.barrier.eta) {
            bad("barrier.eta", "decay rate must satisfy eta in [0, 1]");
        }
        if let Some(l) = self.barrier.lookahead {
            if !(l >= 0.0 && l.is_finite()) {
                bad("barrier.lookahead", "must be finite and >= 0");
            }
        }
        for (i, b) in self.barrier.custom.iter().enumerate() {
            if let Err(e) = b.validate() {
                bad(&format!("barrier.custom[{i}]"), &e.to_string());
            }
            if b.p.len() != self.state_dim() {
                bad(
                    &format!("barrier.custom[{i}].p"),
                    &format!(
                        "needs {} entries for {}",
                        self.state_dim(),
                        self.env.as_str()
                    ),
                );
            }
        }
        if let Err(e) = self.gp.hyper().validate() {
            bad("gp", &e.to_string());
        }
        if self.gp.capacity == 0 {
            bad("gp.capacity", "must be at least 1");
        }
        if let Err(e) = self.agent.validate() {
            bad("agent", &e.to_string());
        }
        if self.compensator.hidden.is_empty() || self.compensator.hidden.contains(&0) {
            bad(
                "compensator.hidden",
                "needs at least one non-empty hidden layer",
            );
        }
        if !(self.compensator.lr > 0.0 && self.compensator.lr.is_finite()) {
            bad("compensator.lr", "must be finite and > 0");
        }
        if self.compensator.batch == 0 {
            bad("compensator.batch", "must be at least 1");
        }
        self.validate_pendulum(&mut bad);
        self.validate_car(&mut bad);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errs))
        }
    }

    fn validate_pendulum(&self, bad: &mut impl FnMut(&str, &str)) {
        let p = &self.pendulum;
        for (name, v) in [
            ("pendulum.mass", p.mass),
            ("pendulum.length", p.length),
            ("pendulum.nominal_mass", p.nominal_mass),
            ("pendulum.nominal_length", p.nominal_length),
            ("pendulum.dt", p.dt),
            ("pendulum.max_torque", p.max_torque),
            ("pendulum.safe_angle", p.safe_angle),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bad(name, "must be finite and > 0");
            }
        }
        if !p.gravity.is_finite() {
            bad("pendulum.gravity", "must be finite");
        }
        if p.horizon == 0 {
            bad("pendulum.horizon", "must be at least 1");
        }
        if !(p.init_theta >= 0.0 && p.init_theta < p.safe_angle) {
            bad("pendulum.init_theta", "must lie in [0, safe_angle)");
        }
        if !(p.init_theta_dot >= 0.0 && p.init_theta_dot.is_finite()) {
            bad("pendulum.init_theta_dot", "must be finite and >= 0");
        }
    }

    fn validate_car(&self, bad: &mut impl FnMut(&str, &str)) {
        let c = &self.car;
        for (name, v) in [
            ("car.dt", c.dt),
            ("car.v_des", c.v_des),
            ("car.max_accel", c.max_accel),
            ("car.min_headway", c.min_headway),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bad(name, "must be finite and > 0");
            }
        }
        for (name, v) in [
            ("car.kp", c.kp),
            ("car.kb", c.kb),
            ("car.kd", c.kd),
            ("car.nominal_kp", c.nominal_kp),
            ("car.nominal_kb", c.nominal_kb),
            ("car.nominal_kd", c.nominal_kd),
            ("car.noise_std", c.noise_std),
            ("car.comfort_headway", c.comfort_headway),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                bad(name, "must be finite and >= 0");
            }
        }
        if c.horizon == 0 {
            bad("car.horizon", "must be at least 1");
        }
        let (lo, hi) = c.init_headway;
        if !(lo <= hi && lo > c.min_headway && hi.is_finite()) {
            bad("car.init_headway", "needs min_headway < low <= high");
        }
        let (lo, hi) = c.init_velocity;
        if !(lo <= hi && lo >= 0.0 && hi.is_finite()) {
            bad("car.init_velocity", "needs 0 <= low <= high");
        }
    }
}
