//! CSV files written and read by the runner.
//!
//! Episode file (`episodes.csv`), one row per episode:
//!
//! ```text
//! episode,return,safety_metric,max_eps,mean_ucbf_norm,unsafe
//! ```
//!
//! `safety_metric` is `max |theta|` for the pendulum and the minimum headway
//! for the car chain; `unsafe` is 0 or 1.
//!
//! Step file (`steps.csv`), one row per step, vector columns expanded with a
//! zero-based suffix (`n` state entries, `m` action entries, `k` barriers):
//!
//! ```text
//! episode,t,state_0..n,u_rl_0..m,u_bar_0..m,u_cbf_0..m,action_0..m,eps,reward,
//! h_0..k,h_next_0..k,mu_0..n,sigma_0..n,residual_0..n,kkt_residual
//! ```
//!
//! `mu` and `sigma` are empty in baseline runs.
//!
//! Aggregate file, one row per episode across seeds:
//!
//! ```text
//! episode,seeds,return_mean,return_min,return_max,safety_metric_mean,...,unsafe_count
//! ```

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rlcbf_core::cbf::AuditStep;
use rlcbf_core::driver::{EpisodeLog, EpisodeSummary};

pub const EPISODE_HEADER: [&str; 6] = [
    "episode",
    "return",
    "safety_metric",
    "max_eps",
    "mean_ucbf_norm",
    "unsafe",
];

/// Metric columns summarised by [`aggregate`].
const METRICS: [&str; 4] = ["return", "safety_metric", "max_eps", "mean_ucbf_norm"];

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {detail}")]
    Schema { path: PathBuf, detail: String },
}

impl CsvError {
    fn schema(path: &Path, detail: impl Into<String>) -> Self {
        CsvError::Schema {
            path: path.to_path_buf(),
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRow {
    pub episode: usize,
    pub ret: f64,
    pub safety_metric: f64,
    pub max_eps: f64,
    pub mean_ucbf_norm: f64,
    pub unsafe_episode: bool,
}

impl From<&EpisodeSummary> for EpisodeRow {
    fn from(s: &EpisodeSummary) -> Self {
        EpisodeRow {
            episode: s.episode,
            ret: s.ret,
            safety_metric: s.safety_metric,
            max_eps: s.max_eps,
            mean_ucbf_norm: s.mean_ucbf_norm,
            unsafe_episode: s.unsafe_episode,
        }
    }
}

impl EpisodeRow {
    fn record(&self) -> [String; 6] {
        [
            self.episode.to_string(),
            self.ret.to_string(),
            self.safety_metric.to_string(),
            self.max_eps.to_string(),
            self.mean_ucbf_norm.to_string(),
            u8::from(self.unsafe_episode).to_string(),
        ]
    }

    fn metric(&self, i: usize) -> f64 {
        [
            self.ret,
            self.safety_metric,
            self.max_eps,
            self.mean_ucbf_norm,
        ][i]
    }
}

fn open_writer(path: &Path) -> Result<csv::Writer<File>, CsvError> {
    let file = File::create(path).map_err(|source| CsvError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::Writer::from_writer(file))
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>, CsvError> {
    let file = File::open(path).map_err(|source| CsvError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::Reader::from_reader(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CsvError + '_ {
    move |source| CsvError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Streams episode rows to disk as they are produced.
pub struct EpisodeWriter {
    path: PathBuf,
    inner: csv::Writer<File>,
}

impl EpisodeWriter {
    pub fn create(path: &Path) -> Result<Self, CsvError> {
        let mut inner = open_writer(path)?;
        inner.write_record(EPISODE_HEADER).map_err(csv_err(path))?;
        Ok(EpisodeWriter {
            path: path.to_path_buf(),
            inner,
        })
    }

    pub fn write(&mut self, row: &EpisodeRow) -> Result<(), CsvError> {
        self.inner
            .write_record(row.record())
            .map_err(csv_err(&self.path))?;
        self.inner.flush().map_err(|source| CsvError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

pub fn write_episodes(path: &Path, rows: &[EpisodeRow]) -> Result<(), CsvError> {
    let mut w = EpisodeWriter::create(path)?;
    rows.iter().try_for_each(|r| w.write(r))
}

pub fn read_episodes(path: &Path) -> Result<Vec<EpisodeRow>, CsvError> {
    let mut rdr = open_reader(path)?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(EPISODE_HEADER.iter().copied()) {
        return Err(CsvError::schema(
            path,
            format!(
                "expected columns {}, found {}",
                EPISODE_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let field = |i: usize| -> Result<f64, CsvError> {
            rec[i].parse::<f64>().map_err(|e| {
                CsvError::schema(
                    path,
                    format!("row {}: column {}: {e}", line + 2, EPISODE_HEADER[i]),
                )
            })
        };
        let episode = rec[0]
            .parse::<usize>()
            .map_err(|e| CsvError::schema(path, format!("row {}: episode: {e}", line + 2)))?;
        let unsafe_episode = match &rec[5] {
            "0" => false,
            "1" => true,
            other => {
                return Err(CsvError::schema(
                    path,
                    format!("row {}: unsafe must be 0 or 1, got {other}", line + 2),
                ))
            }
        };
        rows.push(EpisodeRow {
            episode,
            ret: field(1)?,
            safety_metric: field(2)?,
            max_eps: field(3)?,
            mean_ucbf_norm: field(4)?,
            unsafe_episode,
        });
    }
    Ok(rows)
}

/// Column names of the step file for the given dimensions.
pub fn step_header(state_dim: usize, action_dim: usize, barriers: usize) -> Vec<String> {
    fn vector(name: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{name}_{i}")).collect()
    }
    let mut h = vec!["episode".to_string(), "t".to_string()];
    h.extend(vector("state", state_dim));
    for name in ["u_rl", "u_bar", "u_cbf", "action"] {
        h.extend(vector(name, action_dim));
    }
    h.push("eps".into());
    h.push("reward".into());
    h.extend(vector("h", barriers));
    h.extend(vector("h_next", barriers));
    for name in ["mu", "sigma", "residual"] {
        h.extend(vector(name, state_dim));
    }
    h.push("kkt_residual".into());
    h
}

pub struct StepWriter {
    path: PathBuf,
    inner: csv::Writer<File>,
    dims: (usize, usize, usize),
}

impl StepWriter {
    pub fn create(
        path: &Path,
        state_dim: usize,
        action_dim: usize,
        barriers: usize,
    ) -> Result<Self, CsvError> {
        let mut inner = open_writer(path)?;
        inner
            .write_record(step_header(state_dim, action_dim, barriers))
            .map_err(csv_err(path))?;
        Ok(StepWriter {
            path: path.to_path_buf(),
            inner,
            dims: (state_dim, action_dim, barriers),
        })
    }

    pub fn write_episode(&mut self, log: &EpisodeLog) -> Result<(), CsvError> {
        let (n, _, _) = self.dims;
        let nums = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>();
        for s in &log.steps {
            let mut rec = vec![log.episode.to_string(), s.t.to_string()];
            rec.extend(nums(&s.state));
            for v in [&s.u_rl, &s.u_bar, &s.u_cbf, &s.action] {
                rec.extend(nums(v));
            }
            rec.push(s.eps.to_string());
            rec.push(s.reward.to_string());
            rec.extend(nums(&s.h));
            rec.extend(nums(&s.h_next));
            for v in [&s.mu, &s.sigma] {
                if v.is_empty() {
                    rec.extend(std::iter::repeat_n(String::new(), n));
                } else {
                    rec.extend(nums(v));
                }
            }
            rec.extend(nums(&s.residual));
            rec.push(s.kkt_residual.to_string());
            self.inner.write_record(&rec).map_err(csv_err(&self.path))?;
        }
        self.inner.flush().map_err(|source| CsvError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

/// One step of a step file, reduced to what the barrier audit needs.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub episode: usize,
    pub t: usize,
    pub step: AuditStep,
}

/// Reads the `episode`, `t`, `eps`, `h_*` and `h_next_*` columns of a step file.
pub fn read_audit_steps(path: &Path) -> Result<Vec<AuditRow>, CsvError> {
    let mut rdr = open_reader(path)?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let need = |name: &str| {
        col(name).ok_or_else(|| CsvError::schema(path, format!("missing column {name}")))
    };
    let (ep, t, eps) = (need("episode")?, need("t")?, need("eps")?);
    let h_cols: Vec<usize> = (0..).map_while(|i| col(&format!("h_{i}"))).collect();
    let next_cols: Vec<usize> = (0..).map_while(|i| col(&format!("h_next_{i}"))).collect();
    if h_cols.is_empty() || h_cols.len() != next_cols.len() {
        return Err(CsvError::schema(
            path,
            "h_i and h_next_i columns missing or unmatched",
        ));
    }
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let num = |i: usize| -> Result<f64, CsvError> {
            rec[i].parse::<f64>().map_err(|e| {
                CsvError::schema(
                    path,
                    format!("row {}: column {}: {e}", line + 2, &header[i]),
                )
            })
        };
        let int = |i: usize| -> Result<usize, CsvError> {
            rec[i].parse::<usize>().map_err(|e| {
                CsvError::schema(
                    path,
                    format!("row {}: column {}: {e}", line + 2, &header[i]),
                )
            })
        };
        out.push(AuditRow {
            episode: int(ep)?,
            t: int(t)?,
            step: AuditStep {
                h: h_cols.iter().map(|&i| num(i)).collect::<Result<_, _>>()?,
                h_next: next_cols
                    .iter()
                    .map(|&i| num(i))
                    .collect::<Result<_, _>>()?,
                eps: num(eps)?,
            },
        });
    }
    Ok(out)
}

/// Per-episode mean, min and max of every metric across seed files, plus
/// the number of seeds whose episode was unsafe.
pub fn aggregate(inputs: &[PathBuf], output: &Path) -> Result<usize, CsvError> {
    let runs: Vec<Vec<EpisodeRow>> = inputs
        .iter()
        .map(|p| read_episodes(p))
        .collect::<Result<_, _>>()?;
    let Some(first) = runs.first() else {
        return Err(CsvError::schema(output, "no input files"));
    };
    for (run, path) in runs.iter().zip(inputs) {
        if run.len() != first.len() {
            return Err(CsvError::schema(
                path,
                format!(
                    "has {} episodes, {} has {}",
                    run.len(),
                    inputs[0].display(),
                    first.len()
                ),
            ));
        }
        if run.iter().zip(first).any(|(a, b)| a.episode != b.episode) {
            return Err(CsvError::schema(
                path,
                "episode numbers differ from the first input",
            ));
        }
    }
    let mut header = vec!["episode".to_string(), "seeds".to_string()];
    for m in METRICS {
        for stat in ["mean", "min", "max"] {
            header.push(format!("{m}_{stat}"));
        }
    }
    header.push("unsafe_count".into());
    let mut w = open_writer(output)?;
    w.write_record(&header).map_err(csv_err(output))?;
    for (i, row) in first.iter().enumerate() {
        let mut rec = vec![row.episode.to_string(), runs.len().to_string()];
        for m in 0..METRICS.len() {
            let vals: Vec<f64> = runs.iter().map(|r| r[i].metric(m)).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            rec.extend([mean, min, max].map(|v| v.to_string()));
        }
        rec.push(
            runs.iter()
                .filter(|r| r[i].unsafe_episode)
                .count()
                .to_string(),
        );
        w.write_record(&rec).map_err(csv_err(output))?;
    }
    w.flush().map_err(|source| CsvError::Io {
        path: output.to_path_buf(),
        source,
    })?;
    Ok(first.len())
}

/// Writes `text` to `path`, mapping the error like the CSV helpers.
pub fn write_text(path: &Path, text: &str) -> Result<(), CsvError> {
    File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|source| CsvError::Io {
            path: path.to_path_buf(),
            source,
        })
}
