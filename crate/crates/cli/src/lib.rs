//! Training harness for the two-stream action-recognition models: the model
//! ladder, training and evaluation loops, feature extraction, fusion,
//! gradient checks and the ladder experiment.

pub mod artifacts;
pub mod config;
pub mod gradcheck;
pub mod ladder;
pub mod model;
pub mod pipeline;
pub mod train;

pub use config::RunConfig;
pub use model::{build_model, Model, ModelSpec, Variant};
pub use train::{evaluate, train, RunResult, TrainConfig};
