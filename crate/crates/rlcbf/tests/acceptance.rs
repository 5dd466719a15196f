//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if a binding criterion fails.
//!
//! Runs the full training schedules (5 pendulum seeds per mode, 3 car seeds),
//! so it takes a while on a single core.

use std::time::{Duration, Instant};

use rlcbf::config::ExperimentConfig;
use rlcbf::experiment::{with_trainer, RunError};
use rlcbf::selftest;
use rlcbf_core::cbf::{invariance_audit, AffineBarrier, NominalModel};
use rlcbf_core::driver::{
    run_episode, EpisodeContext, EpisodeLog, EpisodeSummary, FilterSettings, Mode, ResidualInput,
};
use rlcbf_core::env::{
    ActionBox, BarrierShape, Environment, Pendulum, PendulumModel, PendulumParams, SafetyLimit,
};
use rlcbf_core::gp::{in_band, ExactResidual};
use rlcbf_core::rl::{AgentConfig, DdpgAgent, Learner};
use rlcbf_core::{seeded_rng, Rng};

const PENDULUM_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const CAR_SEEDS: [u64; 3] = [0, 1, 2];
const SEED_BUDGET: Duration = Duration::from_secs(15 * 60);

struct Outcome {
    id: u8,
    binding: bool,
    pass: bool,
    detail: String,
}

/// What the suite keeps from each episode.
struct EpisodeFacts {
    summary: EpisodeSummary,
    unsafe_steps: usize,
    in_band: usize,
    banded: usize,
}

struct SeedRun {
    seed: u64,
    episodes: Vec<EpisodeFacts>,
    elapsed: Duration,
}

fn facts(env: &dyn Environment, log: &EpisodeLog, k_delta: f64) -> EpisodeFacts {
    let limit = env.safety_limit();
    let unsafe_steps = log
        .steps
        .iter()
        .filter(|s| limit.violated(env.safety_value(&s.next_state)))
        .count();
    let banded: Vec<_> = log.steps.iter().filter(|s| !s.mu.is_empty()).collect();
    let in_band_count = banded
        .iter()
        .filter(|s| in_band(&s.residual, &s.mu, &s.sigma, k_delta))
        .count();
    EpisodeFacts {
        summary: log.summary(env),
        unsafe_steps,
        in_band: in_band_count,
        banded: banded.len(),
    }
}

fn train(config: &ExperimentConfig, seeds: &[u64], label: &str) -> Vec<SeedRun> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut runs = Vec::new();
    for chunk in seeds.chunks(threads) {
        let results: Vec<Result<SeedRun, RunError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| {
                    scope.spawn(move || {
                        let start = Instant::now();
                        with_trainer(config, seed, |env, trainer| {
                            let mut episodes = Vec::new();
                            let k = config.filter.k_delta;
                            trainer
                                .run(|log, _| {
                                    episodes.push(facts(env, log, k));
                                    Ok(())
                                })
                                .map_err(|source| RunError::Core { seed, source })?;
                            Ok(SeedRun {
                                seed,
                                episodes,
                                elapsed: start.elapsed(),
                            })
                        })
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("training thread panicked"))
                .collect()
        });
        for r in results {
            let run = r.unwrap_or_else(|e| panic!("{label}: {e}"));
            eprintln!(
                "  {label} seed {}: {} episodes in {:.0?}",
                run.seed,
                run.episodes.len(),
                run.elapsed
            );
            runs.push(run);
        }
    }
    runs
}

fn preset(name: &str, seeds: &[u64]) -> ExperimentConfig {
    let mut c = ExperimentConfig::load(name).unwrap_or_else(|e| panic!("{name}: {e}"));
    c.seeds = seeds.to_vec();
    c
}

fn unsafe_episodes(runs: &[SeedRun], first: usize) -> usize {
    runs.iter()
        .map(|r| {
            r.episodes
                .iter()
                .take(first)
                .filter(|e| e.summary.unsafe_episode)
                .count()
        })
        .sum()
}

fn oracle_outcome(id: u8, report: selftest::SuiteReport) -> Outcome {
    Outcome {
        id,
        binding: true,
        pass: report.passed(),
        detail: format!(
            "{}: {} cases, {} failures, worst {:.2e} (tol {:.0e}){}",
            report.name,
            report.cases,
            report.failures,
            report.worst,
            report.tolerance,
            report
                .first_failure
                .map(|f| format!("; {f}"))
                .unwrap_or_default()
        ),
    }
}

/// Nominal drift with the true actuation, so the whole model error is a
/// function of the state alone and can be supplied exactly.
struct KnownActuation {
    drift: PendulumModel,
    actuation: PendulumModel,
}

impl NominalModel for KnownActuation {
    fn state_dim(&self) -> usize {
        2
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn drift(&self, s: &[f64], t: usize) -> Vec<f64> {
        self.drift.drift(s, t)
    }
    fn actuation(&self, s: &[f64], t: usize) -> Vec<f64> {
        self.actuation.actuation(s, t)
    }
    fn difference(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        self.drift.difference(a, b)
    }
}

struct PendulumWithModel {
    inner: Pendulum,
    model: KnownActuation,
}

impl Environment for PendulumWithModel {
    fn name(&self) -> &'static str {
        self.inner.name()
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn dt(&self) -> f64 {
        self.inner.dt()
    }
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }
    fn action_box(&self) -> &ActionBox {
        self.inner.action_box()
    }
    fn sample_init(&self, rng: &mut Rng, barriers: &[AffineBarrier]) -> Vec<f64> {
        self.inner.sample_init(rng, barriers)
    }
    fn step(&self, s: &[f64], a: &[f64], t: usize, rng: &mut Rng) -> Vec<f64> {
        self.inner.step(s, a, t, rng)
    }
    fn nominal(&self) -> &dyn NominalModel {
        &self.model
    }
    fn reward(&self, s: &[f64], a: &[f64], t: usize) -> f64 {
        self.inner.reward(s, a, t)
    }
    fn features(&self, s: &[f64]) -> Vec<f64> {
        self.inner.features(s)
    }
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }
    fn safety_value(&self, s: &[f64]) -> f64 {
        self.inner.safety_value(s)
    }
    fn safety_limit(&self) -> SafetyLimit {
        self.inner.safety_limit()
    }
    fn default_barriers(&self, shape: BarrierShape) -> Vec<AffineBarrier> {
        self.inner.default_barriers(shape)
    }
}

fn criterion_7() -> Outcome {
    let params = PendulumParams::default();
    let inner = Pendulum::new(params.clone());
    let truth = inner.true_model().clone();
    let nominal_drift = PendulumModel {
        mass: params.nominal_mass,
        length: params.nominal_length,
        gravity: params.gravity,
        dt: params.dt,
    };
    let env = PendulumWithModel {
        inner,
        model: KnownActuation {
            drift: nominal_drift.clone(),
            actuation: truth.clone(),
        },
    };
    let exact = ExactResidual(move |s: &[f64]| {
        let a = truth.drift(s, 0);
        let b = nominal_drift.drift(s, 0);
        vec![a[0] - b[0], a[1] - b[1]]
    });
    let eta = 0.5;
    let barriers = env.default_barriers(BarrierShape {
        eta,
        lookahead: 0.25,
    });
    let config = AgentConfig {
        hidden: vec![32, 32],
        ..AgentConfig::default()
    };
    let mut agent = DdpgAgent::new(2, env.action_box(), config, env.horizon(), 7).unwrap();
    let mut rng = seeded_rng(7);
    // wide exploration so the filter has work to do
    let noise = [0.5 * params.max_torque];
    let (mut checked, mut violations, mut corrected, mut left) = (0, 0, 0, 0);
    let mut excursion: f64 = 0.0;
    for episode in 0..10 {
        let ctx = EpisodeContext {
            env: &env,
            barriers: &barriers,
            residual: &exact,
            compensator: None,
            mode: Mode::Compensate,
            filter: FilterSettings::default(),
            noise_std: &noise,
            episode,
            residual_input: ResidualInput::State,
        };
        let log = run_episode(&ctx, &agent, &mut rng).unwrap();
        let zero_slack: Vec<_> = log
            .steps
            .iter()
            .filter(|s| s.eps == 0.0)
            .map(|s| s.audit_step())
            .collect();
        let report = invariance_audit(&zero_slack, &vec![eta; barriers.len()]);
        checked += report.steps;
        violations += report.violations.len();
        left += report.in_safe_set.iter().filter(|s| !**s).count();
        excursion = excursion.max(report.max_excursion);
        corrected += log.steps.iter().filter(|s| s.u_cbf[0] != 0.0).count();
        for t in log.transitions(Mode::Compensate) {
            agent.observe(t);
        }
        agent.improve(None, &mut rng).unwrap();
    }
    Outcome {
        id: 7,
        binding: true,
        pass: violations == 0 && checked > 0,
        detail: format!(
            "{checked} zero-slack steps audited over 10 episodes ({corrected} with a filter correction): {violations} violations, {left} ending with some h < 0 (deepest {excursion:.1e})"
        ),
    }
}

fn main() {
    let started = Instant::now();
    let mut outcomes = Vec::new();

    eprintln!("oracle suites");
    outcomes.push(oracle_outcome(5, selftest::gp_suite(50, 100)));
    outcomes.push(oracle_outcome(6, selftest::qp_suite(200, 200)));
    outcomes.push(oracle_outcome(9, selftest::gradient_suite(20, 300)));

    eprintln!("barrier audit with the true residual");
    outcomes.push(criterion_7());

    eprintln!("pendulum training");
    let guide = train(
        &preset("pendulum_guide", &PENDULUM_SEEDS),
        &PENDULUM_SEEDS,
        "pendulum guide",
    );
    let compensate = train(
        &preset("pendulum_compensate", &PENDULUM_SEEDS),
        &PENDULUM_SEEDS,
        "pendulum compensate",
    );
    let mut baseline_cfg = preset("pendulum_baseline", &PENDULUM_SEEDS);
    baseline_cfg.episodes = Some(100);
    let baseline = train(&baseline_cfg, &PENDULUM_SEEDS, "pendulum baseline");

    let slowest = guide
        .iter()
        .chain(&compensate)
        .map(|r| r.elapsed)
        .max()
        .unwrap_or_default();
    let (g_unsafe, c_unsafe) = (
        unsafe_episodes(&guide, usize::MAX),
        unsafe_episodes(&compensate, usize::MAX),
    );
    let worst_angle = guide
        .iter()
        .chain(&compensate)
        .flat_map(|r| &r.episodes)
        .map(|e| e.summary.safety_metric)
        .fold(0.0, f64::max);
    outcomes.push(Outcome {
        id: 1,
        binding: true,
        pass: g_unsafe == 0 && c_unsafe == 0 && slowest <= SEED_BUDGET,
        detail: format!(
            "unsafe episodes: guide {g_unsafe}, compensate {c_unsafe} (5 seeds x 150); largest |theta| {worst_angle:.4}; slowest seed {slowest:.0?}"
        ),
    });

    let early = unsafe_episodes(&baseline, 50);
    outcomes.push(Outcome {
        id: 2,
        binding: true,
        pass: early >= 1,
        detail: format!("baseline unsafe episodes within the first 50 (5 seeds pooled): {early}"),
    });

    let auc = |r: &SeedRun| {
        r.episodes
            .iter()
            .take(100)
            .map(|e| e.summary.ret)
            .sum::<f64>()
    };
    let wins = guide
        .iter()
        .zip(&baseline)
        .filter(|(g, b)| auc(g) > auc(b))
        .count();
    outcomes.push(Outcome {
        id: 4,
        binding: false,
        pass: wins >= 4,
        detail: format!(
            "guide return area beats baseline on {wins} of 5 seeds over the first 100 episodes"
        ),
    });

    let (hits, total) = guide
        .iter()
        .flat_map(|r| &r.episodes)
        .fold((0, 0), |(h, t), e| (h + e.in_band, t + e.banded));
    let coverage = hits as f64 / total.max(1) as f64;
    outcomes.push(Outcome {
        id: 8,
        binding: true,
        pass: total > 0 && coverage >= 0.90,
        detail: format!("realized residual inside the k=2 band on {hits} of {total} guide-mode steps ({coverage:.4})"),
    });

    let mean_ucbf = |eps: &[EpisodeFacts]| {
        eps.iter().map(|e| e.summary.mean_ucbf_norm).sum::<f64>() / eps.len() as f64
    };
    let decays: Vec<(f64, f64)> = guide
        .iter()
        .map(|r| {
            let n = r.episodes.len();
            (
                mean_ucbf(&r.episodes[..10]),
                mean_ucbf(&r.episodes[n - 10..]),
            )
        })
        .collect();
    let decay_ok = decays.iter().filter(|(first, last)| last < first).count();
    outcomes.push(Outcome {
        id: 10,
        binding: true,
        pass: decay_ok == decays.len(),
        detail: format!(
            "mean |u_cbf| first 10 -> last 10 episodes per seed: {}",
            decays
                .iter()
                .map(|(a, b)| format!("{a:.4}->{b:.4}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    });

    eprintln!("car training");
    let car = train(&preset("car_guide", &CAR_SEEDS), &CAR_SEEDS, "car guide");
    let bad_steps: usize = car
        .iter()
        .flat_map(|r| &r.episodes)
        .map(|e| e.unsafe_steps)
        .sum();
    let min_headway = car
        .iter()
        .flat_map(|r| &r.episodes)
        .map(|e| e.summary.safety_metric)
        .fold(f64::INFINITY, f64::min);
    let car_episodes: usize = car.iter().map(|r| r.episodes.len()).sum();
    outcomes.push(Outcome {
        id: 3,
        binding: true,
        pass: bad_steps == 0 && car_episodes == 600,
        detail: format!("{car_episodes} car episodes: {bad_steps} steps with headway < 2 m; smallest headway {min_headway:.4} m"),
    });

    outcomes.sort_by_key(|o| o.id);
    println!();
    let mut failed_binding = Vec::new();
    for o in &outcomes {
        println!(
            "criterion {:2} {}{}: {}",
            o.id,
            if o.pass { "PASS" } else { "FAIL" },
            if o.binding { "" } else { " (non-binding)" },
            o.detail
        );
        if o.binding && !o.pass {
            failed_binding.push(o.id);
        }
    }
    println!("acceptance finished in {:.0?}", started.elapsed());
    if !failed_binding.is_empty() {
        println!("binding criteria failed: {failed_binding:?}");
        std::process::exit(1);
    }
}
