//! k-anonymity by full-domain generalization over per-attribute hierarchies,
//! with record suppression for whatever generalization cannot fix.

mod anonymize;
mod hierarchy;

use thiserror::Error;

pub use anonymize::{
    anonymize, apply_generalization, partition_classes, suppression_ratio, verify_k, AnonymizationReport,
    AnonymizeOptions, EquivalenceClass, GeneralizationState,
};
pub use hierarchy::{
    build_numeric_hierarchy, build_suffix_hierarchy, is_root_label, Hierarchies, Hierarchy, HierarchySpec, ROOT,
};

use crate::data::DataError;

#[derive(Debug, Error)]
pub enum AnonymityError {
    #[error("invalid bin widths: {0}")]
    InvalidWidths(String),
    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),
    #[error("no hierarchy for quasi-identifier `{0}`")]
    MissingHierarchy(String),
    #[error("k = {k} is invalid for a table of {rows} rows")]
    InvalidK { k: usize, rows: usize },
    #[error(
        "{violating} of {rows} records still violate k after generalization; suppression budget is {budget}"
    )]
    BudgetExceeded { violating: usize, rows: usize, budget: f64 },
    #[error("generalization level {level} out of range for `{attribute}` (top is {top})")]
    LevelOutOfRange { attribute: String, level: usize, top: usize },
    #[error(transparent)]
    Data(#[from] DataError),
}
