pub mod data;
pub mod scalar;
pub mod anonymity;
pub mod stats;
pub mod energy;
pub mod learners;
pub mod synthesis;
pub mod harness;
pub mod tradeoff;

pub use harness::HarnessError as Error;

pub type Matrix32 = data::Matrix<f32>;
pub type Matrix64 = data::Matrix<f64>;
pub type TrainedModel32 = learners::TrainedModel<f32>;
pub type TrainedModel64 = learners::TrainedModel<f64>;
