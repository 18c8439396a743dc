//! Manifest-level glue: training samples for the reference model and prediction tables over
//! anchors × (natural neighbors ∪ distortion grid).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{FrameManifest, ManifestEntry, Offset, Split};
use crate::distortions::{self, DistortionSpec, Family, SeverityTable};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::predictor::{
    query_service_png, Endpoint, PredictionRecord, PredictionTable, ServiceOptions, TransformRef,
};
use crate::preprocess::{canonical_frame, center_crop, eval_image, featurize, random_crop, EvalGeometry};
use crate::rng;
use crate::trainer::{MlpModel, Sample};

/// What to predict for each evaluated anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalPlan {
    pub geometry: EvalGeometry,
    pub severity_table: SeverityTable,
    /// Neighbor offsets; missing neighbors are skipped.
    pub offsets: Vec<i32>,
    pub families: Vec<Family>,
    pub severities: Vec<u8>,
    /// Independent draws per stochastic distortion; draw `j` uses seed `master_seed + j`.
    pub draws: usize,
    pub master_seed: u64,
    pub splits: Vec<Split>,
}

impl Default for EvalPlan {
    fn default() -> Self {
        Self {
            geometry: EvalGeometry::default(),
            severity_table: SeverityTable::default(),
            offsets: Offset::all().map(Offset::get).collect(),
            families: Family::ALL.to_vec(),
            severities: vec![1, 2, 3, 4, 5],
            draws: 1,
            master_seed: 0,
            splits: vec![Split::Val, Split::Test],
        }
    }
}

impl EvalPlan {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.severity_table.validate()?;
        for &k in &self.offsets {
            Offset::new(k)?;
        }
        for &s in &self.severities {
            if s == 0 || s > distortions::MAX_SEVERITY {
                return Err(Error::InvalidSeverity(s));
            }
        }
        if self.draws == 0 {
            return Err(Error::Config("draws must be at least 1".into()));
        }
        if self.geometry.margin() < self.severity_table.max_translation() {
            return Err(Error::Config(format!(
                "evaluation margin {} is smaller than the largest translation {}",
                self.geometry.margin(),
                self.severity_table.max_translation()
            )));
        }
        Ok(())
    }

    /// Draw seeds for `family`: one per draw if stochastic, else a single `None`.
    pub fn draw_seeds(&self, family: Family) -> Vec<Option<u64>> {
        if family.is_stochastic() {
            (0..self.draws as u64).map(|j| Some(self.master_seed.wrapping_add(j))).collect()
        } else {
            vec![None]
        }
    }

    /// Transforms evaluated for an anchor whose neighbors are all present.
    pub fn transforms(&self) -> Vec<TransformRef> {
        let mut out = vec![TransformRef::Identity];
        out.extend(self.offsets.iter().map(|&k| TransformRef::Natural(Offset::new(k).expect("validated"))));
        for &family in &self.families {
            for &severity in &self.severities {
                for seed in self.draw_seeds(family) {
                    out.push(TransformRef::Distortion { family, severity, seed });
                }
            }
        }
        out
    }

    pub fn evaluated<'a>(&self, manifest: &'a FrameManifest) -> Vec<&'a ManifestEntry> {
        manifest.entries.iter().filter(|e| self.splits.contains(&e.split)).collect()
    }
}

/// Evaluation images for one anchor, in [`EvalPlan::transforms`] order (absent neighbors skipped).
pub fn eval_items(manifest: &FrameManifest, entry: &ManifestEntry, plan: &EvalPlan) -> Result<Vec<(TransformRef, Image)>> {
    let geom = &plan.geometry;
    let anchor = Image::load(manifest.resolve(&entry.anchor_path))?;
    let frame = canonical_frame(&anchor, geom)?;
    let mut out = Vec::new();
    for t in plan.transforms() {
        let img = match t {
            TransformRef::Identity => center_crop(&frame, geom.crop)?,
            TransformRef::Natural(o) => match entry.neighbor_paths.get(&o) {
                Some(p) => eval_image(&Image::load(manifest.resolve(p))?, geom)?,
                None => continue,
            },
            TransformRef::Distortion { family, severity, seed } => {
                let spec = match seed {
                    Some(s) => DistortionSpec::keyed(family, severity, s, &entry.shot_id),
                    None => DistortionSpec::new(family, severity),
                };
                distortions::apply(&spec, &frame, &plan.severity_table, geom.crop)?
            }
        };
        out.push((t, img));
    }
    Ok(out)
}

/// Predicts every planned transform of every evaluated anchor with each reference model.
/// Anchors are processed in parallel; the table is independent of worker count.
pub fn predict_builtin_manifest(
    manifest: &FrameManifest,
    plan: &EvalPlan,
    models: &[(String, MlpModel)],
) -> Result<PredictionTable> {
    plan.validate()?;
    let per_anchor: Vec<Vec<PredictionRecord>> = plan
        .evaluated(manifest)
        .par_iter()
        .map(|entry| -> Result<Vec<PredictionRecord>> {
            let mut recs = Vec::new();
            for (t, img) in eval_items(manifest, entry, plan)? {
                let x = featurize(&img);
                for (id, model) in models {
                    recs.push(PredictionRecord::from_logits(id, &entry.shot_id, t, model.forward(&x)?));
                }
            }
            Ok(recs)
        })
        .collect::<Result<_>>()?;
    PredictionTable::from_records(per_anchor.into_iter().flatten(), Some(manifest.num_classes))
}

/// Result of a service-backed prediction run that may stop part-way.
#[derive(Debug)]
pub struct ServiceRun {
    /// Every prediction obtained before any failure.
    pub table: PredictionTable,
    /// Anchors with no predictions because of `error`.
    pub missing_shots: Vec<String>,
    pub error: Option<Error>,
}

/// Anchors sent per service round trip.
const SERVICE_CHUNK: usize = 8;

pub fn predict_service_manifest(
    manifest: &FrameManifest,
    plan: &EvalPlan,
    model_id: &str,
    endpoint: &Endpoint,
    opts: &ServiceOptions,
) -> Result<ServiceRun> {
    plan.validate()?;
    let opts = ServiceOptions { num_classes: opts.num_classes.or(Some(manifest.num_classes)), ..opts.clone() };
    let entries = plan.evaluated(manifest);
    let mut table = PredictionTable::new(Some(manifest.num_classes));
    for (c, chunk) in entries.chunks(SERVICE_CHUNK).enumerate() {
        let items: Vec<(String, TransformRef, Vec<u8>)> = chunk
            .par_iter()
            .map(|entry| -> Result<Vec<_>> {
                eval_items(manifest, entry, plan)?
                    .into_iter()
                    .map(|(t, img)| Ok((entry.shot_id.clone(), t, img.encode_png()?)))
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let pngs: Vec<Vec<u8>> = items.iter().map(|(_, _, p)| p.clone()).collect();
        match query_service_png(endpoint, &pngs, &opts) {
            Ok(logits) => {
                for ((shot, t, _), l) in items.into_iter().zip(logits) {
                    table.insert(PredictionRecord::from_logits(model_id, &shot, t, l))?;
                }
            }
            Err(e) => {
                let missing = entries[c * SERVICE_CHUNK..].iter().map(|e| e.shot_id.clone()).collect();
                return Ok(ServiceRun { table, missing_shots: missing, error: Some(e) });
            }
        }
    }
    Ok(ServiceRun { table, missing_shots: Vec::new(), error: None })
}

/// Training samples from anchors of `splits`: per anchor, the centered evaluation crop plus
/// `extra_crops` uniformly placed crops of the canonical frame (crop-and-resize augmentation only).
pub fn training_samples(
    manifest: &FrameManifest,
    splits: &[Split],
    geometry: &EvalGeometry,
    extra_crops: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    let per: Vec<Vec<Sample>> = manifest
        .entries
        .par_iter()
        .filter(|e| splits.contains(&e.split))
        .map(|e| -> Result<Vec<Sample>> {
            let frame = canonical_frame(&Image::load(manifest.resolve(&e.anchor_path))?, geometry)?;
            let mut rng = rng::substream(seed, &format!("crop/{}", e.shot_id));
            let mut out = vec![Sample { features: featurize(&center_crop(&frame, geometry.crop)?), label: e.label }];
            for _ in 0..extra_crops {
                let img = random_crop(&frame, geometry.crop, &mut rng)?;
                out.push(Sample { features: featurize(&img), label: e.label });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}
