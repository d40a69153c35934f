use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::Treatment;
use super::HarnessError;
use crate::energy::BackendTag;
use crate::learners::ModelKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Prepare,
    Treat,
    Train,
    Evaluate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Error,
}

/// One metered phase of one grid cell and repetition. Prepare and treat
/// phases run once per treatment and repetition and carry no model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub dataset: String,
    pub treatment: Treatment,
    pub model: Option<ModelKind>,
    pub repetition: usize,
    pub seed: u64,
    pub phase: Phase,
    pub status: Status,
    pub error: Option<String>,
    pub backend: BackendTag,
    /// Meter clock at the start and end of the phase, in seconds.
    pub started_s: f64,
    pub ended_s: f64,
    pub duration_s: f64,
    pub joules: f64,
    pub joules_adjusted: Option<f64>,
    /// Evaluate phase only.
    pub accuracy: Option<f64>,
    pub log_loss: Option<f64>,
    /// Rows and encoded features the phase worked on.
    pub rows: Option<usize>,
    pub features: Option<usize>,
    /// Treat phase of k-anonymity: suppressed cell fraction and smallest class.
    pub suppression: Option<f64>,
    pub achieved_k: Option<usize>,
    /// Treat phase of synthesis: share of synthetic rows copied from the source.
    pub exact_match_rate: Option<f64>,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

/// Append-only JSON-lines writer. Each record is flushed as it is written.
pub struct LogWriter {
    file: File,
    path: PathBuf,
}

impl LogWriter {
    /// Create `path`, refusing to replace an existing log unless `force`.
    pub fn create(path: &Path, force: bool) -> Result<Self, HarnessError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
        let mut opts = OpenOptions::new();
        opts.write(true);
        if force {
            opts.create(true).truncate(true);
        } else {
            opts.create_new(true);
        }
        let file = opts.open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::AlreadyExists => HarnessError::LogExists(path.to_owned()),
            _ => HarnessError::io(path, e),
        })?;
        Ok(Self { file, path: path.to_owned() })
    }

    pub fn append(&mut self, record: &RunRecord) -> Result<(), HarnessError> {
        let mut line = serde_json::to_string(record).expect("record serializes");
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(|e| HarnessError::io(&self.path, e))?;
        self.file.flush().map_err(|e| HarnessError::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub fn read_log(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| HarnessError::MalformedLog(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}
