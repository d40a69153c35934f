//! The two benchmark datasets: where they come from, how to parse them, and
//! their default schemas and generalization hierarchies.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::anonymity::Hierarchies;
use crate::data::{AttributeSchema, CsvDialect, CsvOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetId {
    CensusIncome,
    StudentPerformance,
}

/// Where a dataset file is fetched from and what it must hash to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RemoteFile {
    pub url: &'static str,
    /// Name of the file stored under `<dest>/<dataset>/`.
    pub file_name: &'static str,
    /// For archives: the member to extract (searched in nested zips too).
    pub archive_member: Option<&'static str>,
    /// Hex sha256 of the stored file, when pinned.
    pub sha256: Option<&'static str>,
}

impl DatasetId {
    pub const ALL: [DatasetId; 2] = [DatasetId::CensusIncome, DatasetId::StudentPerformance];

    pub fn name(self) -> &'static str {
        match self {
            DatasetId::CensusIncome => "census_income",
            DatasetId::StudentPerformance => "student_performance",
        }
    }

    pub fn remote(self) -> RemoteFile {
        match self {
            DatasetId::CensusIncome => RemoteFile {
                url: "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/adult.data",
                file_name: "adult.data",
                archive_member: None,
                sha256: Some("5b00264637dbfec36bdeaab5676b0b309ff9eb788d63554ca0a249491c86603d"),
            },
            DatasetId::StudentPerformance => RemoteFile {
                url: "https://archive.ics.uci.edu/static/public/320/student+performance.zip",
                file_name: "student-mat.csv",
                archive_member: Some("student-mat.csv"),
                sha256: None,
            },
        }
    }

    pub fn csv_options(self) -> CsvOptions {
        match self {
            DatasetId::CensusIncome => CsvOptions::new(CsvDialect::Comma, false),
            DatasetId::StudentPerformance => CsvOptions::new(CsvDialect::Semicolon, true),
        }
    }

    /// `<data_dir>/<dataset>/<file>`.
    pub fn default_path(self, data_dir: &Path) -> PathBuf {
        data_dir.join(self.name()).join(self.remote().file_name)
    }

    pub fn default_schema(self) -> AttributeSchema {
        let text = match self {
            DatasetId::CensusIncome => include_str!("../../assets/census_income.schema.json"),
            DatasetId::StudentPerformance => include_str!("../../assets/student_performance.schema.json"),
        };
        AttributeSchema::from_json(text).expect("bundled schema is valid")
    }

    pub fn default_hierarchies(self) -> Hierarchies {
        let text = match self {
            DatasetId::CensusIncome => include_str!("../../assets/census_income.hierarchies.json"),
            DatasetId::StudentPerformance => include_str!("../../assets/student_performance.hierarchies.json"),
        };
        Hierarchies::from_json(text).expect("bundled hierarchies are valid")
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetId {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "census_income" | "census" | "adult" => Ok(DatasetId::CensusIncome),
            "student_performance" | "student" => Ok(DatasetId::StudentPerformance),
            other => Err(HarnessError::Config(format!(
                "unknown dataset `{other}` (expected census_income or student_performance)"
            ))),
        }
    }
}
