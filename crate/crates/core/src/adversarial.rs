//! L∞ distances between temporally adjacent frames, compared against an adversarial ε-ball.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{FrameManifest, FramePair, Offset};
use crate::error::{Error, Result};
use crate::image::{linf_distance, Image};
use crate::predictor::{PredictionTable, RecordKey, TransformRef};
use crate::preprocess::{eval_image, EvalGeometry};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// After the canonical evaluation resize and crop.
    #[default]
    Canonical,
    /// On the frames as stored; both frames must have the same size.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Ball radius in 8-bit units.
    pub epsilon: f64,
    /// Offset magnitude; pairs at both `+offset` and `-offset` are used.
    pub offset: i32,
    /// Keep at most this many pairs, in manifest order.
    pub sample_size: Option<usize>,
    pub mode: DistanceMode,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { epsilon: 16.0, offset: 1, sample_size: None, mode: DistanceMode::Canonical }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config("epsilon must be finite and >= 0".into()));
        }
        Offset::new(self.offset)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSample {
    pub pair: FramePair,
    pub linf: u8,
    /// `None` until [`mark_brittle`] runs.
    pub brittle: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceRun {
    pub samples: Vec<DistanceSample>,
    /// Pairs that could not be decoded: `(shot_id, offset, reason)`.
    pub skipped: Vec<(String, Offset, String)>,
}

/// Pairs at `±offset`, interleaved per anchor (`+k` then `-k`), capped at `sample_size`.
pub fn analysis_pairs(manifest: &FrameManifest, config: &AnalysisConfig) -> Result<Vec<FramePair>> {
    config.validate()?;
    let k = config.offset.abs();
    let plus = manifest.pairs_at_offset(k)?;
    let minus = manifest.pairs_at_offset(-k)?;
    let mut pairs: Vec<FramePair> = Vec::with_capacity(plus.len() + minus.len());
    for e in &manifest.entries {
        pairs.extend(plus.iter().filter(|p| p.shot_id == e.shot_id).cloned());
        pairs.extend(minus.iter().filter(|p| p.shot_id == e.shot_id).cloned());
    }
    if let Some(n) = config.sample_size {
        pairs.truncate(n);
    }
    Ok(pairs)
}

fn pair_linf(pair: &FramePair, mode: DistanceMode, geom: &EvalGeometry) -> Result<u8> {
    let a = Image::load(&pair.anchor_path)?;
    let b = Image::load(&pair.other_path)?;
    match mode {
        DistanceMode::Raw => linf_distance(&a, &b),
        DistanceMode::Canonical => linf_distance(&eval_image(&a, geom)?, &eval_image(&b, geom)?),
    }
}

/// L∞ distance of every pair; undecodable pairs are skipped and reported. Output order follows
/// `pairs` regardless of parallelism.
pub fn pair_distances(pairs: &[FramePair], mode: DistanceMode, geom: &EvalGeometry) -> DistanceRun {
    let results: Vec<(usize, Result<u8>)> = pairs.par_iter().enumerate().map(|(i, p)| (i, pair_linf(p, mode, geom))).collect();
    let mut run = DistanceRun { samples: Vec::new(), skipped: Vec::new() };
    for (i, r) in results {
        let pair = &pairs[i];
        match r {
            Ok(linf) => run.samples.push(DistanceSample { pair: pair.clone(), linf, brittle: None }),
            Err(e) => run.skipped.push((pair.shot_id.clone(), pair.offset, e.to_string())),
        }
    }
    run
}

/// Marks each sample brittle when the anchor is classified correctly and its neighbor is not.
pub fn mark_brittle(samples: &[DistanceSample], table: &PredictionTable, model_id: &str) -> Result<Vec<DistanceSample>> {
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let shot = &s.pair.shot_id;
        let anchor = table.get(model_id, shot, TransformRef::Identity);
        let other = table.get(model_id, shot, TransformRef::Natural(s.pair.offset));
        for (p, t) in [(anchor, TransformRef::Identity), (other, TransformRef::Natural(s.pair.offset))] {
            if p.is_none() {
                missing.push(RecordKey { model_id: model_id.into(), shot_id: shot.clone(), transform: t }.to_string());
            }
        }
        if let (Some(a), Some(o)) = (anchor, other) {
            let brittle = a.label == s.pair.label && o.label != s.pair.label;
            out.push(DistanceSample { brittle: Some(brittle), ..s.clone() });
        }
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::MissingPredictions(missing));
    }
    Ok(out)
}

/// Right-continuous empirical CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct Cdf {
    sorted: Vec<f64>,
}

impl Cdf {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("cdf values"));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Config("cdf values must not be NaN".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    /// Fraction of values `≤ threshold`.
    pub fn at(&self, threshold: f64) -> f64 {
        self.sorted.partition_point(|v| *v <= threshold) as f64 / self.sorted.len() as f64
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// `(threshold, fraction)` for each threshold.
    pub fn table(&self, thresholds: impl IntoIterator<Item = f64>) -> Vec<(f64, f64)> {
        thresholds.into_iter().map(|t| (t, self.at(t))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceSummary {
    pub epsilon: f64,
    pub n_pairs: usize,
    pub mean: f64,
    /// Population standard deviation (divides by `n`).
    pub std: f64,
    pub std_convention: &'static str,
    pub fraction_within_epsilon: f64,
    pub n_brittle: usize,
    /// Fraction of brittle pairs within ε; `None` when no pair is brittle or flags are absent.
    pub brittle_fraction_within_epsilon: Option<f64>,
    pub n_skipped: usize,
}

pub fn summarize(samples: &[DistanceSample], epsilon: f64, n_skipped: usize) -> Result<DistanceSummary> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("distance samples"));
    }
    let values: Vec<f64> = samples.iter().map(|s| f64::from(s.linf)).collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let brittle: Vec<f64> = samples.iter().filter(|s| s.brittle == Some(true)).map(|s| f64::from(s.linf)).collect();
    Ok(DistanceSummary {
        epsilon,
        n_pairs: samples.len(),
        mean,
        std,
        std_convention: "population",
        fraction_within_epsilon: Cdf::new(&values)?.at(epsilon),
        n_brittle: brittle.len(),
        brittle_fraction_within_epsilon: Cdf::new(&brittle).ok().map(|c| c.at(epsilon)),
        n_skipped,
    })
}

pub fn write_samples_csv(samples: &[DistanceSample], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["shot_id", "offset", "delta_ms", "label", "linf", "brittle"])?;
    for s in samples {
        w.write_record([
            s.pair.shot_id.clone(),
            s.pair.offset.to_string(),
            s.pair.delta_ms.to_string(),
            s.pair.label.to_string(),
            s.linf.to_string(),
            s.brittle.map(|b| b.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// CDF at every integer threshold 0..=255, for all pairs and for brittle pairs.
pub fn write_cdf_csv(samples: &[DistanceSample], out: impl Write) -> Result<()> {
    let all = Cdf::new(&samples.iter().map(|s| f64::from(s.linf)).collect::<Vec<_>>())?;
    let brittle: Vec<f64> = samples.iter().filter(|s| s.brittle == Some(true)).map(|s| f64::from(s.linf)).collect();
    let brittle = Cdf::new(&brittle).ok();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "fraction_all", "fraction_brittle"])?;
    for t in 0..=255u32 {
        let t = f64::from(t);
        w.write_record([
            t.to_string(),
            all.at(t).to_string(),
            brittle.as_ref().map(|c| c.at(t).to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
