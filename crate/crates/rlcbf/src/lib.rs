//! Experiment runner for [`rlcbf_core`]: TOML configs, CSV metrics,
//! checkpoints, oracle self-tests and the `rlcbf` command line.

pub mod config;
pub mod csvio;
pub mod experiment;
pub mod selftest;

pub use config::ExperimentConfig;

/// Process exit codes of the `rlcbf` binary.
pub mod exit {
    pub const OK: i32 = 0;
    /// Unknown flag or malformed command line.
    pub const USAGE: i32 = 1;
    pub const CONFIG: i32 = 2;
    /// Missing input file, IO failure or a failed training run.
    pub const RUNTIME: i32 = 3;
    /// A self-test suite or barrier audit found a violation.
    pub const CHECK_FAILED: i32 = 4;
}
