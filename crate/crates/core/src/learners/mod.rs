//! k-nearest neighbours, logistic regression and a one-hidden-layer network,
//! written against [`Matrix`] and generic over [`Scalar`].

mod knn;
mod logreg;
mod metrics;
mod nn;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use knn::{KnnModel, DEFAULT_NEIGHBOURS};
pub use logreg::{train_logreg, LogRegModel};
pub use metrics::{accuracy, check_labels, log_loss_from_logits, EvalResult};
pub use nn::{train_nn, NnModel, DEFAULT_HIDDEN_WIDTH};

use crate::data::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("labels must be 0 or 1, found {0}")]
    NonBinaryLabels(u8),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// `None` trains on the full set each step.
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// L2 coefficient on weights (not biases).
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::logreg_default()
    }
}

impl TrainConfig {
    pub fn logreg_default() -> Self {
        Self { learning_rate: 1.0, epochs: 100, batch_size: Some(128), seed: 0, l2: 0.0 }
    }

    pub fn nn_default() -> Self {
        Self { learning_rate: 0.01, epochs: 50, batch_size: Some(32), seed: 0, l2: 0.0 }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LearnError::InvalidConfig(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(LearnError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(LearnError::InvalidConfig("batch size must be at least 1".into()));
        }
        if !(self.l2 >= 0.0) {
            return Err(LearnError::InvalidConfig(format!("l2 {} must be >= 0", self.l2)));
        }
        Ok(())
    }

    /// Shuffling stream, kept apart from the one used for weight init.
    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_ba7c_4e5d_0001)
    }
}

fn batches(n: usize, batch_size: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    match batch_size {
        Some(b) if b < n => {
            idx.shuffle(rng);
            idx.chunks(b).map(<[usize]>::to_vec).collect()
        }
        _ => vec![idx],
    }
}

fn check_xy<T: Scalar>(x: &Matrix<T>, y: &[u8]) -> Result<(), LearnError> {
    if x.rows() == 0 {
        return Err(LearnError::EmptyInput);
    }
    if x.rows() != y.len() {
        return Err(LearnError::LengthMismatch { left: x.rows(), right: y.len() });
    }
    check_labels(y)
}

fn check_width(expected: usize, found: usize) -> Result<(), LearnError> {
    if expected != found {
        return Err(LearnError::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// 1 iff p >= 0.5.
fn threshold<T: Scalar>(p: &[T]) -> Vec<u8> {
    let half = T::from_f64_lossy(0.5);
    p.iter().map(|&v| u8::from(v >= half)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Knn,
    #[serde(rename = "logreg")]
    LogReg,
    Nn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Knn, ModelKind::LogReg, ModelKind::Nn];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Knn => "knn",
            ModelKind::LogReg => "logreg",
            ModelKind::Nn => "nn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "knn" => Ok(ModelKind::Knn),
            "logreg" => Ok(ModelKind::LogReg),
            "nn" => Ok(ModelKind::Nn),
            other => Err(format!("unknown model `{other}` (expected knn, logreg or nn)")),
        }
    }
}

/// Hyperparameters for all three learners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub knn_neighbours: usize,
    pub logreg: TrainConfig,
    pub nn: TrainConfig,
    pub nn_hidden_width: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            knn_neighbours: DEFAULT_NEIGHBOURS,
            logreg: TrainConfig::logreg_default(),
            nn: TrainConfig::nn_default(),
            nn_hidden_width: DEFAULT_HIDDEN_WIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar")]
pub enum TrainedModel<T> {
    Knn(KnnModel<T>),
    LogReg(LogRegModel<T>),
    Nn(NnModel<T>),
}

impl<T: Scalar> TrainedModel<T> {
    /// Train `kind` on `(x, y)`. `seed` replaces the configured seed of the
    /// gradient-trained models.
    pub fn fit(kind: ModelKind, x: &Matrix<T>, y: &[u8], cfg: &LearnerConfig, seed: u64) -> Result<Self, LearnError> {
        Ok(match kind {
            ModelKind::Knn => {
                TrainedModel::Knn(KnnModel::fit(x.clone(), y.to_vec(), cfg.knn_neighbours.min(x.rows()))?)
            }
            ModelKind::LogReg => TrainedModel::LogReg(train_logreg(x, y, &TrainConfig { seed, ..cfg.logreg })?),
            ModelKind::Nn => TrainedModel::Nn(train_nn(x, y, &TrainConfig { seed, ..cfg.nn }, cfg.nn_hidden_width)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Knn(_) => ModelKind::Knn,
            TrainedModel::LogReg(_) => ModelKind::LogReg,
            TrainedModel::Nn(_) => ModelKind::Nn,
        }
    }

    pub fn predict(&self, x: &Matrix<T>) -> Result<Vec<u8>, LearnError> {
        match self {
            TrainedModel::Knn(m) => m.predict(x),
            TrainedModel::LogReg(m) => m.predict(x),
            TrainedModel::Nn(m) => m.predict(x),
        }
    }

    pub fn logits(&self, x: &Matrix<T>) -> Option<Result<Vec<T>, LearnError>> {
        match self {
            TrainedModel::Knn(_) => None,
            TrainedModel::LogReg(m) => Some(m.logits(x)),
            TrainedModel::Nn(m) => Some(m.logits(x)),
        }
    }

    /// Accuracy on `(x, y)`, plus mean log loss where the model has one.
    pub fn evaluate(&self, x: &Matrix<T>, y: &[u8]) -> Result<EvalResult, LearnError> {
        let mut r = accuracy(&self.predict(x)?, y)?;
        if let Some(logits) = self.logits(x) {
            r.log_loss = Some(log_loss_from_logits(&logits?, y).as_f64());
        }
        Ok(r)
    }
}
