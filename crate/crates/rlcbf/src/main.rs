use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rlcbf::config::{ExperimentConfig, LoadError};
use rlcbf::csvio::{aggregate, read_audit_steps};
use rlcbf::exit;
use rlcbf::experiment::run_all;
use rlcbf::selftest;
use rlcbf_core::cbf::invariance_audit;

#[derive(Parser)]
#[command(
    name = "rlcbf",
    version,
    about = "Barrier-filtered actor-critic experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run per seed and write metrics and checkpoints.
    Run {
        /// Preset name (e.g. pendulum_guide) or path to a TOML file.
        #[arg(long, default_value = "defaults")]
        config: String,
        /// Seeds to run; replaces the config's list. Repeatable.
        #[arg(long)]
        seed: Vec<u64>,
        /// Output directory; replaces the config's `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-step CSVs and print every episode.
        #[arg(long)]
        verbose: bool,
        /// Seeds trained concurrently (default: available cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check the barrier step condition on a step CSV.
    Audit {
        steps: PathBuf,
        /// Config supplying the barrier decay rates.
        #[arg(long, default_value = "defaults")]
        config: String,
    },
    /// Run the GP, QP and gradient oracle suites.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Merge per-seed episode CSVs into per-episode mean, min and max.
    Aggregate {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(name: &str) -> Result<ExperimentConfig, i32> {
    ExperimentConfig::load(name).map_err(|e| {
        eprintln!("error: {e}");
        match e {
            LoadError::Io { .. } | LoadError::Parse { .. } | LoadError::Invalid { .. } => {
                exit::CONFIG
            }
        }
    })
}

fn run(
    config: String,
    seed: Vec<u64>,
    out: Option<PathBuf>,
    verbose: bool,
    threads: Option<usize>,
) -> i32 {
    let mut cfg = match load_config(&config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if !seed.is_empty() {
        cfg.seeds = seed;
    }
    if let Some(out) = out {
        cfg.out = out;
    }
    cfg.verbose |= verbose;
    if let Err(errors) = cfg.validate() {
        eprintln!("error: invalid config:\n{errors}");
        return exit::CONFIG;
    }
    let threads =
        threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let progress = |seed: u64, row: &rlcbf::csvio::EpisodeRow| {
        if verbose {
            eprintln!(
                "seed {seed} episode {:4} return {:10.3} safety {:8.4} max_eps {:.3e} ucbf {:.4}{}",
                row.episode,
                row.ret,
                row.safety_metric,
                row.max_eps,
                row.mean_ucbf_norm,
                if row.unsafe_episode { " UNSAFE" } else { "" }
            );
        }
    };
    match run_all(&cfg, threads, &progress) {
        Ok(reports) => {
            for r in &reports {
                let last = r.episodes.last();
                println!(
                    "seed {}: {} episodes, {} unsafe, final return {:.3}, eval deployed {:.3} proposed {:.3}, dir {}",
                    r.seed,
                    r.episodes.len(),
                    r.unsafe_episodes(),
                    last.map_or(f64::NAN, |e| e.ret),
                    r.evaluation.deployed_return,
                    r.evaluation.proposed_return,
                    r.dir.display()
                );
            }
            exit::OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit::RUNTIME
        }
    }
}

fn audit(steps: PathBuf, config: String) -> i32 {
    let cfg = match load_config(&config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let rows = match read_audit_steps(&steps) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit::RUNTIME;
        }
    };
    let barriers = rows.first().map_or(0, |r| r.step.h.len());
    let etas: Vec<f64> = if cfg.barrier.custom.is_empty() {
        vec![cfg.barrier.eta; barriers]
    } else {
        cfg.barrier.custom.iter().map(|b| b.eta).collect()
    };
    if etas.len() != barriers {
        eprintln!(
            "error: {} has {barriers} barrier columns but the config defines {}",
            steps.display(),
            etas.len()
        );
        return exit::CONFIG;
    }
    let audit_steps: Vec<_> = rows.iter().map(|r| r.step.clone()).collect();
    let report = invariance_audit(&audit_steps, &etas);
    let left = report.in_safe_set.iter().filter(|s| !**s).count();
    println!(
        "steps {} violations {} steps_outside_safe_set {} max_excursion {} max_eps {} excursion_bound {}",
        report.steps,
        report.violations.len(),
        left,
        report.max_excursion,
        report.max_eps,
        report.excursion_bound
    );
    for v in report.violations.iter().take(20) {
        let row = &rows[v.step];
        println!(
            "violation episode {} t {} barrier {} deficit {:e}",
            row.episode, row.t, v.barrier, v.deficit
        );
    }
    if report.is_clean() {
        exit::OK
    } else {
        exit::CHECK_FAILED
    }
}

fn selftest_cmd(seed: u64) -> i32 {
    let reports = selftest::run_all(seed);
    let mut ok = true;
    for r in &reports {
        println!(
            "{} {}: {} cases, {} failures, worst {:e} (tolerance {:e})",
            if r.passed() { "PASS" } else { "FAIL" },
            r.name,
            r.cases,
            r.failures,
            r.worst,
            r.tolerance
        );
        if let Some(f) = &r.first_failure {
            println!("  first failure: {f}");
        }
        ok &= r.passed();
    }
    if ok {
        exit::OK
    } else {
        exit::CHECK_FAILED
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let code = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            verbose,
            threads,
        } => run(config, seed, out, verbose, threads),
        Command::Audit { steps, config } => audit(steps, config),
        Command::Selftest { seed } => selftest_cmd(seed),
        Command::Aggregate { inputs, out } => match aggregate(&inputs, &out) {
            Ok(n) => {
                println!("wrote {n} episode rows to {}", out.display());
                exit::OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit::RUNTIME
            }
        },
    };
    ExitCode::from(code as u8)
}
