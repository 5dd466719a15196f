//! Seeded training runs and their on-disk artifacts.
//!
//! Each seed writes into `<out>/seed_<n>/`:
//!
//! - `episodes.csv` and, with `verbose`, `steps.csv` (see [`crate::csvio`]);
//! - `evaluation.csv`: noise-free filtered rollouts of the final policy;
//! - `actor.bin`, `critic.bin`, `compensator.bin`: network checkpoints;
//! - `config.toml`: the effective configuration for that seed.

use std::path::{Path, PathBuf};

use rlcbf_core::approx::{Mlp, OutputActivation};
use rlcbf_core::driver::{ProposedEval, Trainer};
use rlcbf_core::env::Environment;
use rlcbf_core::rl::{Compensator, DdpgAgent};
use rlcbf_core::seeded_rng;

use crate::config::ExperimentConfig;
use crate::csvio::{write_text, CsvError, EpisodeRow, EpisodeWriter, StepWriter};

/// Rollouts scored by the final evaluation.
pub const EVAL_EPISODES: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("seed {seed}: {source}")]
    Core {
        seed: u64,
        #[source]
        source: rlcbf_core::Error,
    },
    #[error(transparent)]
    Output(#[from] CsvError),
    #[error("seed {seed}: worker thread panicked")]
    Panic { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedReport {
    pub seed: u64,
    pub dir: PathBuf,
    pub episodes: Vec<EpisodeRow>,
    pub evaluation: ProposedEval,
}

impl SeedReport {
    pub fn unsafe_episodes(&self) -> usize {
        self.episodes.iter().filter(|e| e.unsafe_episode).count()
    }
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Builds the environment and a fresh trainer for `seed` and hands both to `f`.
pub fn with_trainer<R>(
    config: &ExperimentConfig,
    seed: u64,
    f: impl FnOnce(&dyn Environment, &mut Trainer<'_, DdpgAgent>) -> Result<R, RunError>,
) -> Result<R, RunError> {
    let core = |source| RunError::Core { seed, source };
    let env = config.build_env();
    let env = env.as_ref();
    let agent = DdpgAgent::new(
        env.feature_dim(),
        env.action_box(),
        config.agent.clone(),
        env.horizon(),
        seed,
    )
    .map_err(core)?;
    let compensator = Compensator::new(
        env.feature_dim(),
        env.action_box(),
        &config.compensator.hidden,
        config.compensator.lr,
        seed.wrapping_add(0x5eed),
    )
    .map_err(core)?;
    let mut trainer = Trainer::new(
        env,
        config.barriers(env),
        config.train_config(),
        agent,
        compensator,
        config.agent.clone(),
        seeded_rng(seed),
    )
    .map_err(core)?;
    f(env, &mut trainer)
}

/// Trains one seed. `progress` receives every finished episode row.
pub fn run_seed(
    config: &ExperimentConfig,
    seed: u64,
    progress: &(dyn Fn(u64, &EpisodeRow) + Sync),
) -> Result<SeedReport, RunError> {
    with_trainer(config, seed, |env, trainer| {
        train_and_save(config, seed, env, trainer, progress)
    })
}

fn train_and_save(
    config: &ExperimentConfig,
    seed: u64,
    env: &dyn Environment,
    trainer: &mut Trainer<'_, DdpgAgent>,
    progress: &(dyn Fn(u64, &EpisodeRow) + Sync),
) -> Result<SeedReport, RunError> {
    let core = |source| RunError::Core { seed, source };
    let barriers = trainer.barriers.clone();
    let dir = seed_dir(&config.out, seed);
    std::fs::create_dir_all(&dir).map_err(|source| CsvError::Io {
        path: dir.clone(),
        source,
    })?;
    let mut effective = config.clone();
    effective.seeds = vec![seed];
    write_text(&dir.join("config.toml"), &effective.to_toml())?;

    let mut episodes = EpisodeWriter::create(&dir.join("episodes.csv"))?;
    let mut steps = if config.verbose {
        Some(StepWriter::create(
            &dir.join("steps.csv"),
            env.state_dim(),
            env.action_dim(),
            barriers.len(),
        )?)
    } else {
        None
    };
    let mut rows = Vec::with_capacity(config.episodes());
    let mut output_error = None;
    let result = trainer.run(|log, _| {
        let row = EpisodeRow::from(&log.summary(env));
        let written = episodes
            .write(&row)
            .and_then(|_| steps.as_mut().map_or(Ok(()), |w| w.write_episode(log)));
        if let Err(e) = written {
            output_error = Some(e);
            return Err(rlcbf_core::Error::NonFinite("output"));
        }
        progress(seed, &row);
        rows.push(row);
        Ok(())
    });
    if let Some(e) = output_error {
        return Err(e.into());
    }
    result.map_err(core)?;

    let evaluation = trainer
        .evaluate(EVAL_EPISODES, &mut seeded_rng(seed ^ 0xe7a1))
        .map_err(core)?;
    write_text(
        &dir.join("evaluation.csv"),
        &format!(
            "episodes,deployed_return,proposed_return,mean_ucbf_norm\n{},{},{},{}\n",
            evaluation.episodes,
            evaluation.deployed_return,
            evaluation.proposed_return,
            evaluation.mean_ucbf_norm
        ),
    )?;
    save_checkpoint(&dir, &trainer.learner, &trainer.compensator)?;
    Ok(SeedReport {
        seed,
        dir,
        episodes: rows,
        evaluation,
    })
}

/// Runs every seed of the config, several at a time.
pub fn run_all(
    config: &ExperimentConfig,
    threads: usize,
    progress: &(dyn Fn(u64, &EpisodeRow) + Sync),
) -> Result<Vec<SeedReport>, RunError> {
    let threads = threads.max(1);
    let mut reports = Vec::with_capacity(config.seeds.len());
    for chunk in config.seeds.chunks(threads) {
        let results: Vec<Result<SeedReport, RunError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| (seed, scope.spawn(move || run_seed(config, seed, progress))))
                .collect();
            handles
                .into_iter()
                .map(|(seed, h)| h.join().unwrap_or(Err(RunError::Panic { seed })))
                .collect()
        });
        for r in results {
            reports.push(r?);
        }
    }
    Ok(reports)
}

pub fn save_checkpoint(
    dir: &Path,
    agent: &DdpgAgent,
    compensator: &Compensator,
) -> Result<(), CsvError> {
    for (name, net) in [
        ("actor.bin", agent.actor()),
        ("critic.bin", agent.critic()),
        ("compensator.bin", compensator.net()),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, net.to_le_bytes()).map_err(|source| CsvError::Io { path, source })?;
    }
    Ok(())
}

/// Networks read back from a seed directory.
pub struct Checkpoint {
    pub actor: Mlp,
    pub critic: Mlp,
    pub compensator: Mlp,
}

pub fn load_checkpoint(dir: &Path, action_half_width: f64) -> Result<Checkpoint, RunError> {
    let read = |name: &str, output: OutputActivation| -> Result<Mlp, RunError> {
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|source| CsvError::Io {
            path: path.clone(),
            source,
        })?;
        Mlp::from_le_bytes(&bytes, output).map_err(|source| RunError::Core { seed: 0, source })
    };
    Ok(Checkpoint {
        actor: read("actor.bin", OutputActivation::ScaledTanh(action_half_width))?,
        critic: read("critic.bin", OutputActivation::Identity)?,
        compensator: read("compensator.bin", OutputActivation::Identity)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csvio::read_episodes;
    use rlcbf_core::driver::Mode;

    fn tiny(out: &Path, mode: Mode) -> ExperimentConfig {
        let mut c = ExperimentConfig::from_toml(
            "episodes = 2\n[agent]\nhidden = [8]\nbatch_size = 8\nupdates_per_episode = 2\n[compensator]\nhidden = [4]\nepochs = 2\n[pendulum]\nhorizon = 15\n",
        )
        .unwrap();
        c.mode = mode;
        c.out = out.to_path_buf();
        c
    }

    #[test]
    fn seed_run_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny(dir.path(), Mode::Guide);
        config.verbose = true;
        let report = run_seed(&config, 3, &|_, _| {}).unwrap();
        let sd = seed_dir(dir.path(), 3);
        for f in [
            "episodes.csv",
            "steps.csv",
            "evaluation.csv",
            "actor.bin",
            "critic.bin",
            "compensator.bin",
            "config.toml",
        ] {
            assert!(sd.join(f).is_file(), "{f} missing");
        }
        assert_eq!(
            read_episodes(&sd.join("episodes.csv")).unwrap(),
            report.episodes
        );
        let steps = std::fs::read_to_string(sd.join("steps.csv")).unwrap();
        assert_eq!(steps.lines().count(), 1 + 2 * 15);
        let ck = load_checkpoint(&sd, 15.0).unwrap();
        assert_eq!(ck.actor.layer_sizes(), vec![2, 8, 1]);
        assert_eq!(ck.compensator.layer_sizes(), vec![2, 4, 1]);
        let saved =
            ExperimentConfig::from_toml(&std::fs::read_to_string(sd.join("config.toml")).unwrap())
                .unwrap();
        assert_eq!(saved.seeds, vec![3]);
    }

    #[test]
    fn threads_do_not_change_results() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut ca = tiny(a.path(), Mode::Compensate);
        ca.seeds = vec![1, 2, 3];
        let mut cb = ca.clone();
        cb.out = b.path().to_path_buf();
        let ra = run_all(&ca, 1, &|_, _| {}).unwrap();
        let rb = run_all(&cb, 3, &|_, _| {}).unwrap();
        assert_eq!(ra.len(), 3);
        for (x, y) in ra.iter().zip(&rb) {
            assert_eq!(x.episodes, y.episodes);
            let fx = std::fs::read(x.dir.join("episodes.csv")).unwrap();
            let fy = std::fs::read(y.dir.join("episodes.csv")).unwrap();
            assert_eq!(fx, fy);
        }
    }
}
