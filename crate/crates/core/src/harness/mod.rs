//! Experiment driver: configs, dataset acquisition, the metered run loop,
//! the run log and the reports built from it.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::anonymity::AnonymityError;
use crate::data::DataError;
use crate::energy::EnergyError;
use crate::learners::LearnError;
use crate::stats::StatsError;
use crate::synthesis::SynthesisError;

pub mod config;
pub mod datasets;
pub mod fetch;
pub mod log;
pub mod report;
pub mod run;

pub use config::{
    derive_seed, repetition_seed, AnonymityConfig, ClockKind, ExperimentConfig, MeterConfig, MeterKind, Treatment,
};
pub use datasets::{DatasetId, RemoteFile};
pub use fetch::{fetch_dataset, FetchOutcome, HttpTransport, Transport};
pub use log::{read_log, LogWriter, Phase, RunRecord, Status};
pub use report::{build_report, render, Report, ReportFormat};
pub use run::{run_experiment, Inputs, RunOutcome};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset file {} not found; run `petbench fetch` first", .0.display())]
    MissingData(PathBuf),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Anonymity(#[from] AnonymityError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("log {} already exists; pass --force to overwrite", .0.display())]
    LogExists(PathBuf),
    #[error("malformed run log: {0}")]
    MalformedLog(String),
    #[error("run log has no usable records")]
    EmptyLog,
    #[error("no benchmark records for {dataset}/{model}")]
    MissingBenchmark { dataset: String, model: String },
    #[error("checksum mismatch for {file}: expected {expected}, found {found}")]
    DigestMismatch { file: String, expected: String, found: String },
    #[error("download failed: {0}")]
    Network(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_owned(), source }
    }
}
