//! Conditional robustness `P(f(d(x)) = y | f(x) = y)` and quantities derived from it.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::dataset::{FrameManifest, Offset, MAX_OFFSET};
use crate::distortions::{Family, MAX_SEVERITY};
use crate::error::{Error, Result};
use crate::predictor::{PredictionTable, RecordKey, TransformRef};

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessResult {
    pub model_id: String,
    pub transform: TransformRef,
    /// Pairs with both the anchor and the transformed frame correct.
    pub numerator: u64,
    /// Pairs with the anchor correct.
    pub denominator: u64,
    pub r_value: f64,
}

/// Robustness pooled over `±magnitude` (counts summed before dividing).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledResult {
    pub model_id: String,
    pub magnitude: u8,
    pub delta_ms: f64,
    pub numerator: u64,
    pub denominator: u64,
    pub r_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffsetCurve {
    pub signed: BTreeMap<Offset, RobustnessResult>,
    pub pooled: BTreeMap<u8, PooledResult>,
}

impl OffsetCurve {
    pub fn signed_mean(&self) -> f64 {
        self.signed.values().map(|r| r.r_value).sum::<f64>() / self.signed.len() as f64
    }

    pub fn pooled_mean(&self) -> f64 {
        self.pooled.values().map(|r| r.r_value).sum::<f64>() / self.pooled.len() as f64
    }
}

/// Correctness of anchor and transformed predictions over the anchors the table covers.
struct Outcomes {
    pairs: Vec<(bool, bool)>,
}

/// Anchors of `manifest` that have a prediction for `model_id` under either the identity or
/// `transform`; both must be present unless the transform is a neighbor the anchor lacks.
fn outcomes(table: &PredictionTable, manifest: &FrameManifest, transform: TransformRef, model_id: &str) -> Result<Outcomes> {
    let mut pairs = Vec::new();
    let mut missing = Vec::new();
    for e in &manifest.entries {
        if let TransformRef::Natural(o) = transform {
            if !e.neighbor_paths.contains_key(&o) {
                continue;
            }
        }
        let clean = table.get(model_id, &e.shot_id, TransformRef::Identity);
        let moved = table.get(model_id, &e.shot_id, transform);
        match (clean, moved) {
            (Some(c), Some(m)) => pairs.push((c.label == e.label, m.label == e.label)),
            (None, None) => {}
            (None, Some(_)) => missing.push(key(model_id, &e.shot_id, TransformRef::Identity)),
            (Some(_), None) => missing.push(key(model_id, &e.shot_id, transform)),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingPredictions(missing));
    }
    if pairs.is_empty() {
        return Err(Error::MissingPredictions(vec![format!("{model_id}:*:{transform}")]));
    }
    Ok(Outcomes { pairs })
}

fn key(model_id: &str, shot_id: &str, transform: TransformRef) -> String {
    RecordKey { model_id: model_id.into(), shot_id: shot_id.into(), transform }.to_string()
}

/// `#(anchor correct ∧ transformed correct) / #(anchor correct)` for one model and transform.
pub fn conditional_robustness(
    table: &PredictionTable,
    manifest: &FrameManifest,
    transform: TransformRef,
    model_id: &str,
) -> Result<RobustnessResult> {
    let o = outcomes(table, manifest, transform, model_id)?;
    let denominator = o.pairs.iter().filter(|p| p.0).count() as u64;
    let numerator = o.pairs.iter().filter(|p| p.0 && p.1).count() as u64;
    if denominator == 0 {
        return Err(Error::UndefinedConditional(format!(
            "{model_id} classifies none of the {} anchors for {transform} correctly",
            o.pairs.len()
        )));
    }
    Ok(RobustnessResult {
        model_id: model_id.into(),
        transform,
        numerator,
        denominator,
        r_value: numerator as f64 / denominator as f64,
    })
}

/// Clean and transformed accuracy over the same anchors.
pub fn paired_accuracy(
    table: &PredictionTable,
    manifest: &FrameManifest,
    transform: TransformRef,
    model_id: &str,
) -> Result<(f64, f64)> {
    let o = outcomes(table, manifest, transform, model_id)?;
    let n = o.pairs.len() as f64;
    let clean = o.pairs.iter().filter(|p| p.0).count() as f64 / n;
    let moved = o.pairs.iter().filter(|p| p.1).count() as f64 / n;
    Ok((clean, moved))
}

/// `accuracy(clean) − accuracy(transformed)`.
pub fn relative_drop(clean_accuracy: f64, transformed_accuracy: f64) -> f64 {
    clean_accuracy - transformed_accuracy
}

/// Clean accuracy of `model_id` over every anchor with an identity prediction.
pub fn clean_accuracy(table: &PredictionTable, manifest: &FrameManifest, model_id: &str) -> Result<f64> {
    let mut n = 0usize;
    let mut correct = 0usize;
    for e in &manifest.entries {
        if let Some(p) = table.get(model_id, &e.shot_id, TransformRef::Identity) {
            n += 1;
            correct += usize::from(p.label == e.label);
        }
    }
    if n == 0 {
        return Err(Error::MissingPredictions(vec![format!("{model_id}:*:identity")]));
    }
    Ok(correct as f64 / n as f64)
}

/// Natural robustness at every signed offset, plus the `|Δt|` pooling.
pub fn robustness_vs_offset(table: &PredictionTable, manifest: &FrameManifest, model_id: &str) -> Result<OffsetCurve> {
    let mut signed = BTreeMap::new();
    for o in Offset::all() {
        signed.insert(o, conditional_robustness(table, manifest, TransformRef::Natural(o), model_id)?);
    }
    let pooled = (1..=MAX_OFFSET as u8)
        .map(|m| {
            let k = i32::from(m);
            let pos = &signed[&Offset::new(k).expect("in range")];
            let neg = &signed[&Offset::new(-k).expect("in range")];
            let numerator = pos.numerator + neg.numerator;
            let denominator = pos.denominator + neg.denominator;
            let r = PooledResult {
                model_id: model_id.into(),
                magnitude: m,
                delta_ms: pos.transform_delta_ms(),
                numerator,
                denominator,
                r_value: numerator as f64 / denominator as f64,
            };
            (m, r)
        })
        .collect();
    Ok(OffsetCurve { signed, pooled })
}

impl RobustnessResult {
    fn transform_delta_ms(&self) -> f64 {
        match self.transform {
            TransformRef::Natural(o) => o.delta_ms().abs(),
            _ => 0.0,
        }
    }
}

/// Unweighted mean of the five severities of one family for one model.
pub fn average_over_severity(results: &[RobustnessResult]) -> Result<f64> {
    if results.len() != MAX_SEVERITY as usize {
        return Err(Error::WrongArity { expected: MAX_SEVERITY as usize, got: results.len() });
    }
    let mut families = BTreeSet::new();
    let mut severities = BTreeSet::new();
    for r in results {
        match r.transform {
            TransformRef::Distortion { family, severity, .. } => {
                families.insert(family);
                severities.insert(severity);
            }
            other => return Err(Error::SchemaViolation(format!("{other} is not a distortion"))),
        }
    }
    let models: BTreeSet<&str> = results.iter().map(|r| r.model_id.as_str()).collect();
    if families.len() != 1 || models.len() != 1 || severities.len() != results.len() {
        return Err(Error::SchemaViolation(
            "severity average needs five distinct severities of one family and one model".into(),
        ));
    }
    Ok(results.iter().map(|r| r.r_value).sum::<f64>() / results.len() as f64)
}

/// Robustness to one distortion severity averaged over its draws, with the spread across draws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrawSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub draws: usize,
}

pub fn summarize_draws(results: &[RobustnessResult]) -> Result<DrawSummary> {
    if results.is_empty() {
        return Err(Error::EmptyInput("draw results"));
    }
    let vals: Vec<f64> = results.iter().map(|r| r.r_value).collect();
    Ok(DrawSummary {
        mean: vals.iter().sum::<f64>() / vals.len() as f64,
        min: vals.iter().copied().fold(f64::INFINITY, f64::min),
        max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        draws: vals.len(),
    })
}

/// Per-severity results for one family, each averaged over every draw seed in the table.
pub fn family_results(
    table: &PredictionTable,
    manifest: &FrameManifest,
    family: Family,
    model_id: &str,
) -> Result<Vec<(u8, Vec<RobustnessResult>)>> {
    let transforms = table.transforms(model_id);
    (1..=MAX_SEVERITY)
        .map(|severity| {
            let draws: Vec<TransformRef> = transforms
                .iter()
                .copied()
                .filter(|t| matches!(t, TransformRef::Distortion { family: f, severity: s, .. } if *f == family && *s == severity))
                .collect();
            if draws.is_empty() {
                return Err(Error::MissingPredictions(vec![format!("{model_id}:*:{family}/{severity}")]));
            }
            let rs = draws
                .into_iter()
                .map(|t| conditional_robustness(table, manifest, t, model_id))
                .collect::<Result<Vec<_>>>()?;
            Ok((severity, rs))
        })
        .collect()
}

/// Severity-averaged robustness of one family; stochastic families first average their draws.
pub fn family_average(table: &PredictionTable, manifest: &FrameManifest, family: Family, model_id: &str) -> Result<f64> {
    let per = family_results(table, manifest, family, model_id)?;
    let means: Vec<RobustnessResult> = per
        .into_iter()
        .map(|(severity, rs)| -> Result<RobustnessResult> {
            let s = summarize_draws(&rs)?;
            Ok(RobustnessResult {
                model_id: model_id.into(),
                transform: TransformRef::Distortion { family, severity, seed: None },
                numerator: rs.iter().map(|r| r.numerator).sum(),
                denominator: rs.iter().map(|r| r.denominator).sum(),
                r_value: s.mean,
            })
        })
        .collect::<Result<_>>()?;
    average_over_severity(&means)
}

/// Families for which `model_id` has predictions in the table.
pub fn families_present(table: &PredictionTable, model_id: &str) -> BTreeSet<Family> {
    table
        .transforms(model_id)
        .into_iter()
        .filter_map(|t| match t {
            TransformRef::Distortion { family, .. } => Some(family),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ManifestEntry, Split};
    use crate::predictor::PredictionRecord;
    use std::path::PathBuf;

    pub(crate) fn manifest(labels: &[usize], k: usize) -> FrameManifest {
        let entries = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| ManifestEntry {
                video_id: format!("v{i}"),
                shot_id: format!("s{i}"),
                split: Split::Test,
                label,
                anchor_path: PathBuf::from(format!("s{i}.png")),
                neighbor_paths: Offset::all().map(|o| (o, PathBuf::from(format!("s{i}{o}.png")))).collect(),
            })
            .collect();
        FrameManifest::new(entries, k, "/").unwrap()
    }

    fn blur(sev: u8) -> TransformRef {
        TransformRef::Distortion { family: Family::GaussianBlur, severity: sev, seed: None }
    }

    #[test]
    fn direct_count() {
        let m = manifest(&[0; 10], 2);
        let mut recs = Vec::new();
        for i in 0..10 {
            let shot = format!("s{i}");
            recs.push(PredictionRecord::from_label("m", &shot, TransformRef::Identity, usize::from(i >= 8)));
            recs.push(PredictionRecord::from_label("m", &shot, blur(1), usize::from(i >= 6)));
        }
        let t = PredictionTable::from_records(recs, Some(2)).unwrap();
        let r = conditional_robustness(&t, &m, blur(1), "m").unwrap();
        assert_eq!((r.numerator, r.denominator), (6, 8));
        assert_eq!(r.r_value, 0.75);
        let (clean, moved) = paired_accuracy(&t, &m, blur(1), "m").unwrap();
        assert!((relative_drop(clean, moved) - 0.2).abs() < 1e-15);
        assert_eq!(conditional_robustness(&t, &m, TransformRef::Identity, "m").unwrap().r_value, 1.0);
    }

    #[test]
    fn undefined_and_missing() {
        let m = manifest(&[0, 0], 2);
        let recs = ["s0", "s1"]
            .iter()
            .flat_map(|s| [PredictionRecord::from_label("m", s, TransformRef::Identity, 1), PredictionRecord::from_label("m", s, blur(2), 1)]);
        let t = PredictionTable::from_records(recs, Some(2)).unwrap();
        assert!(matches!(conditional_robustness(&t, &m, blur(2), "m"), Err(Error::UndefinedConditional(_))));
        match conditional_robustness(&t, &m, blur(3), "m") {
            Err(Error::MissingPredictions(keys)) => assert_eq!(keys.len(), 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(conditional_robustness(&t, &m, blur(2), "other"), Err(Error::MissingPredictions(_))));
    }

    #[test]
    fn relative_drop_example() {
        assert!((relative_drop(0.9, 0.8) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn hand_built_offset_curve() {
        // three anchors of class 1; predictions chosen per offset
        let m = manifest(&[1, 1, 1], 2);
        let mut recs = Vec::new();
        for (i, shot) in ["s0", "s1", "s2"].iter().enumerate() {
            recs.push(PredictionRecord::from_label("m", shot, TransformRef::Identity, usize::from(i != 2)));
            for o in Offset::all() {
                // s0 stays correct up to |k| = 2, s1 only for positive offsets
                let correct = match i {
                    0 => o.magnitude() <= 2,
                    1 => o.get() > 0,
                    _ => true,
                };
                recs.push(PredictionRecord::from_label("m", shot, TransformRef::Natural(o), usize::from(correct)));
            }
        }
        let t = PredictionTable::from_records(recs, Some(2)).unwrap();
        let c = robustness_vs_offset(&t, &m, "m").unwrap();
        let at = |k: i32| c.signed[&Offset::new(k).unwrap()].r_value;
        assert_eq!(at(1), 1.0);
        assert_eq!(at(-1), 0.5);
        assert_eq!(at(3), 0.5);
        assert_eq!(at(-3), 0.0);
        assert_eq!((c.pooled[&2].numerator, c.pooled[&2].denominator), (3, 4));
        assert_eq!((c.pooled[&5].numerator, c.pooled[&5].denominator), (1, 4));
        for m in 1..=5u8 {
            let k = i32::from(m);
            let p = &c.pooled[&m];
            let s = [&c.signed[&Offset::new(k).unwrap()], &c.signed[&Offset::new(-k).unwrap()]];
            assert_eq!(p.numerator, s[0].numerator + s[1].numerator);
            assert_eq!(p.denominator, s[0].denominator + s[1].denominator);
        }
    }

    fn result(sev: u8, r: f64) -> RobustnessResult {
        RobustnessResult { model_id: "m".into(), transform: blur(sev), numerator: 0, denominator: 1, r_value: r }
    }

    #[test]
    fn severity_average() {
        let rs: Vec<_> = [1.0, 0.9, 0.8, 0.7, 0.6].iter().zip(1..).map(|(&r, s)| result(s, r)).collect();
        assert!((average_over_severity(&rs).unwrap() - 0.8).abs() < 1e-15);
        let ones: Vec<_> = (1..=5).map(|s| result(s, 1.0)).collect();
        assert_eq!(average_over_severity(&ones).unwrap(), 1.0);
        assert!(matches!(average_over_severity(&rs[..4]), Err(Error::WrongArity { expected: 5, got: 4 })));
        let mut dup = rs.clone();
        dup[4] = result(1, 0.5);
        assert!(average_over_severity(&dup).is_err());
    }
}
