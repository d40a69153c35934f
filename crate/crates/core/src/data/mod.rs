//! Tabular data: schema with privacy roles, CSV loading, label extraction,
//! one-hot / min-max encoding and seeded train/test splits.

mod encode;
mod load;
mod schema;
mod split;
mod table;

use std::path::Path;

use thiserror::Error;

pub use encode::{binarize_target, encode, EncodedMatrix, Encoder, FeatureBlock, Matrix};
pub use load::{load_csv, write_csv, CsvDialect, CsvOptions};
pub use schema::{AttributeRole, AttributeSchema, ColumnKind, ColumnSpec, TargetRule};
pub use split::{split, split_indices, SplitSpec};
pub use table::{CategoricalColumn, Cell, Column, ColumnData, DataTable};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow { line: u64, expected: usize, found: usize },
    #[error("line {line}, column `{column}`: cannot parse `{value}` as a number")]
    ParseError { line: u64, column: String, value: String },
    #[error("no column is flagged as the target")]
    MissingTarget,
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{column}` has {found} rows, expected {expected}")]
    ColumnLength { column: String, expected: usize, found: usize },
    #[error("column `{column}` row {row} is not finite")]
    NonFinite { column: String, row: usize },
    #[error("column `{column}` is {found}, expected {expected}")]
    KindMismatch { column: String, expected: &'static str, found: &'static str },
    #[error("target value missing at row {0}")]
    MissingLabel(usize),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("csv: {0}")]
    Csv(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.display().to_string(), source }
    }
}
