//! Prediction sources and the prediction table.
//!
//! Predictions come from a CSV produced elsewhere, from an external model service, or from the
//! built-in reference classifier.

mod service;
mod table;

pub use service::{query_service, query_service_png, Endpoint, ServiceOptions};
pub use table::{Prediction, PredictionRecord, PredictionTable, RecordKey, TransformRef, CSV_COLUMNS};

use crate::error::Result;
use crate::image::Image;
use crate::preprocess::featurize;
use crate::trainer::MlpModel;

/// Logits of the reference model on `img` (any size; it is box-resized to the feature grid).
pub fn predict_builtin(model: &MlpModel, img: &Image) -> Result<Vec<f64>> {
    model.forward(&featurize(img))
}
