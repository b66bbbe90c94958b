//! Two-frame transformer saliency network for 360° video, its training
//! loop and a synthetic center-biased dataset.

pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod experiment;
mod layers;
pub mod network;
pub mod synthetic;
pub mod train;

pub use config::{Augment, ModelConfig, TrainConfig};
pub use encoder::{adapt_input_embedding, FeaturePyramid};
pub use error::{Error, Result};
pub use data::{FrameSource, TrainingSet};
pub use network::{model_forward, Mode, SalModel};
pub use synthetic::{SyntheticConfig, SyntheticDataset};
pub use train::{evaluate, EvalData, StepReport, Trainer};
