use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::table::DataTable;
use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 2.0 / 3.0, seed: 42 }
    }
}

/// Shuffled train/test row indices. `|train| = round(fraction * n)`.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0) {
        return Err(DataError::InvalidSplit(format!(
            "train fraction {} outside (0, 1]",
            spec.train_fraction
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n_train = ((spec.train_fraction * n as f64).round() as usize).min(n);
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

pub fn split(table: &DataTable, spec: &SplitSpec) -> Result<(DataTable, DataTable), DataError> {
    let (train, test) = split_indices(table.n_rows(), spec)?;
    Ok((table.select_rows(&train), table.select_rows(&test)))
}
