//! Robustness metrics and the analyses built on them.

mod correlation;
mod robustness;

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

pub use correlation::{correlation_matrix, pearson_r, CorrelationCell, CorrelationMatrix, Pearson};
pub use robustness::{
    average_over_severity, clean_accuracy, conditional_robustness, families_present, family_average, family_results,
    paired_accuracy, relative_drop, robustness_vs_offset, summarize_draws, DrawSummary, OffsetCurve, PooledResult,
    RobustnessResult,
};

use crate::dataset::FrameManifest;
use crate::distortions::Family;
use crate::error::Result;
use crate::predictor::PredictionTable;

/// Name of the natural-robustness entry in per-model vectors (mean of the five `|Δt|` bins).
pub const NATURAL: &str = "natural";

/// Per-model scalars used for cross-model comparisons.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub model_id: String,
    pub clean_accuracy: f64,
    /// Mean over the ten signed offsets.
    pub natural_signed_mean: f64,
    /// Mean over the five pooled `|Δt|` bins.
    pub natural_pooled_mean: f64,
    /// Severity-averaged robustness per distortion family present in the table.
    pub family_averages: BTreeMap<Family, f64>,
}

impl ModelSummary {
    /// Transform name → robustness scalar, natural robustness under [`NATURAL`].
    pub fn robustness_vector(&self) -> BTreeMap<String, f64> {
        let mut v: BTreeMap<String, f64> =
            self.family_averages.iter().map(|(f, r)| (f.name().to_string(), *r)).collect();
        v.insert(NATURAL.to_string(), self.natural_pooled_mean);
        v
    }
}

pub fn model_summary(table: &PredictionTable, manifest: &FrameManifest, model_id: &str) -> Result<ModelSummary> {
    let curve = robustness_vs_offset(table, manifest, model_id)?;
    let family_averages = families_present(table, model_id)
        .into_iter()
        .map(|f| Ok((f, family_average(table, manifest, f, model_id)?)))
        .collect::<Result<_>>()?;
    Ok(ModelSummary {
        model_id: model_id.into(),
        clean_accuracy: clean_accuracy(table, manifest, model_id)?,
        natural_signed_mean: curve.signed_mean(),
        natural_pooled_mean: curve.pooled_mean(),
        family_averages,
    })
}

pub fn write_results_csv<'a>(results: impl IntoIterator<Item = &'a RobustnessResult>, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model_id", "transform_family", "severity", "seed", "numerator", "denominator", "r_value"])?;
    for r in results {
        w.write_record([
            r.model_id.clone(),
            r.transform.family_name().to_string(),
            r.transform.severity().to_string(),
            r.transform.seed().map(|s| s.to_string()).unwrap_or_default(),
            r.numerator.to_string(),
            r.denominator.to_string(),
            r.r_value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pooled_csv<'a>(results: impl IntoIterator<Item = &'a PooledResult>, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per cell; undefined cells have an empty `pearson_r`.
pub fn write_correlation_csv(matrix: &CorrelationMatrix, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in &matrix.cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}
