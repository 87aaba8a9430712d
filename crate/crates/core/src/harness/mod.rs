//! Experiment orchestration: config loading, the baseline-vs-MARS A/B runs,
//! parameter sweeps and report generation.
//!
//! Output layout of one run directory:
//!
//! ```text
//! <output_dir>/<name>/
//!   config.toml    resolved config
//!   record.json    RunRecord
//!   metrics.csv    workload,pipeline,seed,metric,window_size,value
//!   timing.txt     wall-clock seconds (the only non-reproducible file)
//!   traces/seed<N>/{merged_requests,baseline_commands,mars_commands}.csv
//! ```

mod config;
mod report;
mod run;
mod svg;
mod sweep;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{ExperimentConfig, MemoryMapConfig, Tap, WorkloadConfig, DEFAULT_WINDOWS, OUTPUT_ROOT_ENV};
pub use report::{report, ReportRow, ReportSummary};
pub use run::{
    execute, persist, run_experiment, stream_digest, Experiment, RunRecord, SeedArtifacts, SeedRecord, TapLocality,
    METRICS_HEADER,
};
pub use sweep::{run_sweep, sweep_configs, SweepParam};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {msg}")]
    Invalid { field: String, msg: String },
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("unknown sweep parameter {0:?} (expected window_size, leaves, Q, pending_queue_depth or sets_ways)")]
    UnknownParameter(String),
    #[error("bad value {value:?} for sweep parameter {param}")]
    BadValue { param: String, value: String },
    #[error("no run records found under {0}")]
    NoRecords(PathBuf),
    #[error("{0} exists and is not a previous run directory; refusing to overwrite")]
    OutputExists(PathBuf),
}

impl HarnessError {
    pub fn invalid(field: &str, msg: impl ToString) -> Self {
        HarnessError::Invalid { field: field.to_string(), msg: msg.to_string() }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    /// Short class name used by the command line.
    pub fn class(&self) -> &'static str {
        match self {
            HarnessError::Parse(_) => "ConfigParseError",
            HarnessError::Invalid { .. } => "ConfigValidationError",
            HarnessError::Simulation(_) => "SimulationError",
            HarnessError::Io { .. } | HarnessError::OutputExists(_) => "IoError",
            HarnessError::UnknownParameter(_) | HarnessError::BadValue { .. } => "SweepError",
            HarnessError::NoRecords(_) => "ReportError",
        }
    }
}
