//! Natural-robustness evaluation toolkit.
//!
//! Measures how often an image classifier stays correct on a transformed input given that it
//! was correct on the clean input, for both synthetic distortions and the natural changes
//! between neighboring video frames.

pub mod adversarial;
pub mod dataset;
pub mod distortions;
pub mod error;
pub mod image;
pub mod jpeg;
pub mod metrics;
pub mod pipeline;
pub mod predictor;
pub mod preprocess;
pub mod rng;
pub mod trainer;

pub use distortions::{Direction, DistortionSpec, Family, SeverityTable};
pub use error::{Error, Result};
pub use image::{Image, PixelHsv, ResizeMode};
pub use preprocess::EvalGeometry;
pub use trainer::{MlpModel, Technique, TrainConfig};
pub use predictor::{PredictionRecord, PredictionTable, TransformRef};
