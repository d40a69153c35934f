use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::datasets::DatasetId;
use super::HarnessError;
use crate::data::{CsvOptions, SplitSpec};
use crate::energy::REFERENCE_IDLE_WATTS;
use crate::learners::{LearnerConfig, ModelKind};

/// What is done to the training data before the models see it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Treatment {
    Benchmark,
    KAnon(usize),
    /// Copula synthesis; the seed is mixed with each repetition's seed.
    Synthetic(u64),
}

impl Treatment {
    /// Benchmark, k = 3, 10, 27, synthetic.
    pub fn default_grid() -> Vec<Treatment> {
        vec![
            Treatment::Benchmark,
            Treatment::KAnon(3),
            Treatment::KAnon(10),
            Treatment::KAnon(27),
            Treatment::Synthetic(0),
        ]
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Treatment::Benchmark => f.write_str("benchmark"),
            Treatment::KAnon(k) => write!(f, "k={k}"),
            Treatment::Synthetic(0) => f.write_str("synthetic"),
            Treatment::Synthetic(s) => write!(f, "synthetic:{s}"),
        }
    }
}

impl FromStr for Treatment {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::Config(format!("unknown treatment `{s}` (expected benchmark, k=<n> or synthetic[:<seed>])"));
        let t = s.trim().to_ascii_lowercase();
        if t == "benchmark" {
            return Ok(Treatment::Benchmark);
        }
        if t == "synthetic" {
            return Ok(Treatment::Synthetic(0));
        }
        if let Some(seed) = t.strip_prefix("synthetic:") {
            return seed.parse().map(Treatment::Synthetic).map_err(|_| bad());
        }
        if let Some(k) = t.strip_prefix("k=").or_else(|| t.strip_prefix("kanon:")) {
            return match k.parse() {
                Ok(0) | Err(_) => Err(bad()),
                Ok(k) => Ok(Treatment::KAnon(k)),
            };
        }
        Err(bad())
    }
}

impl Serialize for Treatment {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Treatment {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeterKind {
    Sysfs,
    Simulated,
}

impl FromStr for MeterKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sysfs" => Ok(MeterKind::Sysfs),
            "simulated" => Ok(MeterKind::Simulated),
            other => Err(HarnessError::Config(format!("unknown meter `{other}` (expected sysfs or simulated)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    /// Time advances by a fixed cost per counted operation; runs are
    /// bit-reproducible.
    Virtual,
    /// Real elapsed time.
    Wall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeterConfig {
    pub backend: MeterKind,
    /// Simulated draw while working.
    pub watts: f64,
    /// Simulated draw while idle.
    pub idle_watts: f64,
    /// Clock for the simulated backend. The sysfs backend always uses wall time.
    pub clock: ClockKind,
    /// Virtual seconds charged per counted operation.
    pub seconds_per_op: f64,
    /// Length of the idle baseline measurement; 0 skips it.
    pub idle_seconds: f64,
    /// Powercap root; `PET_RAPL_ROOT` or the sysfs default when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rapl_root: Option<PathBuf>,
}

impl Default for MeterConfig {
    fn default() -> Self {
        Self {
            backend: MeterKind::Simulated,
            watts: 25.0,
            idle_watts: REFERENCE_IDLE_WATTS,
            clock: ClockKind::Virtual,
            seconds_per_op: 1e-9,
            idle_seconds: 10.0,
            rapl_root: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnonymityConfig {
    pub max_record_suppression: f64,
    pub k_plus_one: bool,
}

impl Default for AnonymityConfig {
    fn default() -> Self {
        Self { max_record_suppression: 1.0, k_plus_one: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetId,
    pub treatments: Vec<Treatment>,
    pub models: Vec<ModelKind>,
    pub repetitions: usize,
    pub master_seed: u64,
    pub meter: MeterConfig,
    pub split: SplitSpec,
    /// Directory holding `<dataset>/<file>` as written by `fetch`.
    pub data_dir: PathBuf,
    /// Explicit data file, overriding `data_dir`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<CsvOptions>,
    /// Schema file; the bundled schema when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    /// Hierarchy file; the bundled hierarchies when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hierarchies: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub learners: LearnerConfig,
    pub anonymity: AnonymityConfig,
    /// Significance level for the U tests.
    pub alpha: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetId::CensusIncome,
            treatments: Treatment::default_grid(),
            models: ModelKind::ALL.to_vec(),
            repetitions: 10,
            master_seed: 0,
            meter: MeterConfig::default(),
            split: SplitSpec::default(),
            data_dir: PathBuf::from("data"),
            data_path: None,
            csv: None,
            schema: None,
            hierarchies: None,
            output_dir: PathBuf::from("runs"),
            learners: LearnerConfig::default(),
            anonymity: AnonymityConfig::default(),
            alpha: 0.05,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let err = |m: &str| Err(HarnessError::Config(m.to_owned()));
        if self.repetitions == 0 {
            return err("repetitions must be at least 1");
        }
        if !self.treatments.contains(&Treatment::Benchmark) {
            return err("treatments must include benchmark");
        }
        if self.models.is_empty() {
            return err("models must not be empty");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return err("alpha must be in (0, 1)");
        }
        if self.meter.watts < 0.0 || self.meter.idle_watts < 0.0 || !(self.meter.seconds_per_op > 0.0) {
            return err("meter watts must be >= 0 and seconds_per_op > 0");
        }
        let mut seen = std::collections::HashSet::new();
        if !self.treatments.iter().all(|t| seen.insert(t.label())) {
            return err("treatments must be distinct");
        }
        Ok(())
    }

    /// First 16 hex digits of the sha256 of the serialized config. The
    /// output directory is left out so a rerun elsewhere keeps its identity.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_owned()
    }

    pub fn data_file(&self) -> PathBuf {
        self.data_path.clone().unwrap_or_else(|| self.dataset.default_path(&self.data_dir))
    }

    pub fn log_path(&self) -> PathBuf {
        self.output_dir.join(format!("run-{}.jsonl", self.hash()))
    }
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// One SplitMix64 output for `x`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of repetition `rep`: the `rep`-th element of the SplitMix64 stream
/// started at the master seed.
pub fn repetition_seed(master: u64, rep: usize) -> u64 {
    splitmix64(master.wrapping_add(GOLDEN.wrapping_mul(rep as u64)))
}

/// Derive an independent seed for a named sub-stream.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn treatment_labels_round_trip() {
        for t in [Treatment::Benchmark, Treatment::KAnon(27), Treatment::Synthetic(0), Treatment::Synthetic(9)] {
            assert_eq!(t.label().parse::<Treatment>().unwrap(), t);
        }
        assert!("k=0".parse::<Treatment>().is_err());
        assert!("mondrian".parse::<Treatment>().is_err());
    }

    #[test]
    fn config_json_round_trip_and_hash() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let other = ExperimentConfig { master_seed: 1, ..cfg.clone() };
        assert_ne!(other.hash(), cfg.hash());
        // partial configs fill in defaults
        let partial = ExperimentConfig::from_json(r#"{"dataset": "student_performance", "repetitions": 2}"#).unwrap();
        assert_eq!(partial.repetitions, 2);
        assert_eq!(partial.models.len(), 3);
    }

    #[test]
    fn invalid_configs() {
        assert!(ExperimentConfig::from_json(r#"{"repetitions": 0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"treatments": ["k=3"]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"treatments": ["benchmark", "k=3", "k=3"]}"#).is_err());
    }

    #[test]
    fn repetition_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..100).map(|r| repetition_seed(7, r)).collect();
        assert_eq!(seeds.len(), 100);
        assert_eq!(repetition_seed(7, 3), repetition_seed(7, 3));
    }
}
