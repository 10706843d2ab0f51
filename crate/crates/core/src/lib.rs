//! TaskDrop: continual learning over a task stream with a shared GRU
//! encoder whose outputs are gated by fixed per-task random unit masks.

pub mod encoder;
pub mod error;
pub mod experiment;
pub mod masking;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod taskgen;
pub mod trainer;

pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, ExperimentOutput, RunRecord, SummaryRow};
pub use masking::{MaskRegistry, TaskId, TaskMask};
pub use model::{Model, ModelConfig, ModelVariant};
pub use taskgen::{Dataset, FamilySpec, Preset, TaskFamily};
pub use trainer::{AccuracyMatrix, TaskStream, TrainConfig};
