//! `report`: robustness tables, cross-model analyses and plots from prediction CSVs.

use std::collections::BTreeMap;
use std::fs;

use natrob_core::dataset::{FrameManifest, Offset};
use natrob_core::metrics::{
    clean_accuracy, conditional_robustness, correlation_matrix, family_results, paired_accuracy, pearson_r,
    relative_drop, robustness_vs_offset, summarize_draws, write_correlation_csv, write_pooled_csv, write_results_csv,
    OffsetCurve, RobustnessResult, NATURAL,
};
use natrob_core::predictor::{PredictionTable, TransformRef};
use natrob_core::trainer::accuracy_gate_flagged;
use natrob_core::{Error, Family, Result};
use serde::Serialize;

use super::{distances, write_distance_outputs, write_json, write_with, CmdResult};
use crate::config::{NaturalPooling, RunConfig};
use crate::plots::{self, Line, ScatterPanel};

pub const HEATMAP_NOTICE: &str = "correlation heatmap omitted: it needs predictions from at least 2 models";

#[derive(Debug, Serialize)]
struct ModelRow {
    model_id: String,
    clean_accuracy: f64,
    natural_signed_mean: Option<f64>,
    natural_pooled_mean: Option<f64>,
    /// Transform → robustness scalar used for cross-model comparisons.
    robustness: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize)]
struct SeverityAverage {
    model_id: String,
    family: Family,
    severity_average: f64,
    draws_per_severity: usize,
    min_draw_mean: f64,
    max_draw_mean: f64,
}

#[derive(Debug, Serialize)]
struct RSquaredRow {
    rank: usize,
    transform: String,
    pearson_r: Option<f64>,
    r_squared: Option<f64>,
    n_models: usize,
}

#[derive(Debug, Serialize)]
struct TechniqueRow {
    technique: String,
    model_id: String,
    clean_accuracy: f64,
    baseline_clean_accuracy: f64,
    delta_pp: f64,
    flagged: bool,
}

#[derive(Debug, Serialize)]
struct Bundle<'a> {
    tool_version: &'static str,
    models: &'a [ModelRow],
    severity_averages: &'a [SeverityAverage],
    accuracy_robustness_r_squared: &'a [RSquaredRow],
    correlation: Option<&'a natrob_core::metrics::CorrelationMatrix>,
    techniques: &'a [TechniqueRow],
    distances: Option<&'a natrob_core::adversarial::DistanceSummary>,
    notices: &'a [String],
}

fn load_predictions(cfg: &RunConfig, manifest: &FrameManifest) -> Result<PredictionTable> {
    let paths = &cfg.report.predictions;
    if paths.is_empty() {
        return Err(Error::Config("report.predictions (or --predictions) lists no CSV files".into()));
    }
    let mut table = PredictionTable::new(Some(manifest.num_classes));
    for p in paths {
        table.merge(PredictionTable::load(p, Some(manifest.num_classes))?)?;
    }
    Ok(table)
}

fn has_all_offsets(table: &PredictionTable, model: &str) -> bool {
    let ts = table.transforms(model);
    Offset::all().all(|o| ts.contains(&TransformRef::Natural(o)))
}

pub fn report(cfg: &RunConfig) -> CmdResult {
    let manifest = cfg.manifest()?;
    let table = load_predictions(cfg, &manifest)?;
    let out = &cfg.output_dir;
    cfg.write_provenance(out, "report")?;
    let models: Vec<String> = table.models().into_iter().map(str::to_string).collect();
    let mut notices = Vec::new();

    let mut results: Vec<RobustnessResult> = Vec::new();
    let mut drops = Vec::new();
    for m in &models {
        for t in table.transforms(m) {
            let r = match conditional_robustness(&table, &manifest, t, m) {
                Err(Error::UndefinedConditional(msg)) => {
                    notices.push(format!("robustness of `{m}` under {t} omitted: {msg}"));
                    continue;
                }
                other => other?,
            };
            let (clean, moved) = paired_accuracy(&table, &manifest, t, m)?;
            drops.push((m.clone(), t, clean, moved, relative_drop(clean, moved), r.r_value));
            results.push(r);
        }
    }
    write_with(&out.join("robustness.csv"), |w| write_results_csv(&results, w))?;
    write_with(&out.join("relative_drop.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["model_id", "transform", "clean_accuracy", "transformed_accuracy", "relative_drop", "r_value"])?;
        for (m, t, c, a, d, r) in &drops {
            csv.write_record([m.clone(), t.to_string(), c.to_string(), a.to_string(), d.to_string(), r.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    })?;

    let mut curves: BTreeMap<String, OffsetCurve> = BTreeMap::new();
    for m in &models {
        if has_all_offsets(&table, m) {
            match robustness_vs_offset(&table, &manifest, m) {
                Ok(c) => {
                    curves.insert(m.clone(), c);
                }
                Err(Error::UndefinedConditional(_)) => {
                    notices.push(format!("offset curve for `{m}` omitted: no anchor is classified correctly"));
                }
                Err(e) => return Err(e.into()),
            }
        } else if table.transforms(m).iter().any(|t| matches!(t, TransformRef::Natural(_))) {
            notices.push(format!("offset curve for `{m}` omitted: it needs predictions at all ten offsets"));
        }
    }
    if !curves.is_empty() {
        write_with(&out.join("offset_pooled.csv"), |w| write_pooled_csv(curves.values().flat_map(|c| c.pooled.values()), w))?;
        let signed: BTreeMap<String, Line> = curves
            .iter()
            .map(|(m, c)| (m.clone(), c.signed.iter().map(|(o, r)| (o.delta_ms(), r.r_value)).collect()))
            .collect();
        let pooled: BTreeMap<String, Line> = curves
            .iter()
            .map(|(m, c)| (m.clone(), c.pooled.values().map(|p| (p.delta_ms, p.r_value)).collect()))
            .collect();
        fs::write(out.join("offset_curve.svg"), plots::offset_curves(&signed, &pooled))?;
    }

    let mut rows = Vec::new();
    let mut averages = Vec::new();
    for m in &models {
        let mut robustness = BTreeMap::new();
        for family in natrob_core::metrics::families_present(&table, m) {
            match family_results(&table, &manifest, family, m) {
                Ok(per) => {
                    let summaries = per.iter().map(|(_, rs)| summarize_draws(rs)).collect::<Result<Vec<_>>>()?;
                    let avg = summaries.iter().map(|s| s.mean).sum::<f64>() / summaries.len() as f64;
                    robustness.insert(family.name().to_string(), avg);
                    averages.push(SeverityAverage {
                        model_id: m.clone(),
                        family,
                        severity_average: avg,
                        draws_per_severity: summaries.iter().map(|s| s.draws).min().unwrap_or(0),
                        min_draw_mean: summaries.iter().map(|s| s.min).fold(f64::INFINITY, f64::min),
                        max_draw_mean: summaries.iter().map(|s| s.max).fold(f64::NEG_INFINITY, f64::max),
                    });
                }
                Err(Error::MissingPredictions(_)) => {
                    notices.push(format!("severity average of {family} for `{m}` omitted: it needs all five severities"));
                }
                Err(Error::UndefinedConditional(_)) => {
                    notices.push(format!("severity average of {family} for `{m}` omitted: robustness is undefined"));
                }
                Err(e) => return Err(e.into()),
            }
        }
        let curve = curves.get(m);
        let (signed, pooled) = (curve.map(OffsetCurve::signed_mean), curve.map(OffsetCurve::pooled_mean));
        let natural = match cfg.metrics.natural_pooling {
            NaturalPooling::Pooled => pooled,
            NaturalPooling::Signed => signed,
        };
        if let Some(v) = natural {
            robustness.insert(NATURAL.to_string(), v);
        }
        rows.push(ModelRow {
            model_id: m.clone(),
            clean_accuracy: clean_accuracy(&table, &manifest, m)?,
            natural_signed_mean: signed,
            natural_pooled_mean: pooled,
            robustness,
        });
    }
    write_with(&out.join("model_summary.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["model_id", "clean_accuracy", "natural_signed_mean", "natural_pooled_mean"])?;
        for r in &rows {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            csv.write_record([
                r.model_id.clone(),
                r.clean_accuracy.to_string(),
                opt(r.natural_signed_mean),
                opt(r.natural_pooled_mean),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    write_with(&out.join("severity_averages.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        for a in &averages {
            csv.serialize(a)?;
        }
        if averages.is_empty() {
            csv.write_record(["model_id", "family", "severity_average", "draws_per_severity", "min_draw_mean", "max_draw_mean"])?;
        }
        csv.flush()?;
        Ok(())
    })?;

    // Accuracy against robustness, one panel per transform, ordered by R².
    let mut per_transform: BTreeMap<String, Vec<(String, f64, f64)>> = BTreeMap::new();
    for r in &rows {
        for (t, v) in &r.robustness {
            per_transform.entry(t.clone()).or_default().push((r.model_id.clone(), r.clean_accuracy, *v));
        }
    }
    let mut panels: Vec<ScatterPanel> = per_transform
        .into_iter()
        .map(|(transform, points)| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|p| (p.1, p.2)).unzip();
            let r_squared = pearson_r(&xs, &ys).ok().map(|p| p.r_squared);
            ScatterPanel { transform, r_squared, points }
        })
        .collect();
    panels.sort_by(|a, b| match (a.r_squared, b.r_squared) {
        (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| a.transform.cmp(&b.transform)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.transform.cmp(&b.transform),
    });
    let r2_rows: Vec<RSquaredRow> = panels
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = p.points.iter().map(|q| (q.1, q.2)).unzip();
            RSquaredRow {
                rank: i + 1,
                transform: p.transform.clone(),
                pearson_r: pearson_r(&xs, &ys).ok().map(|q| q.r),
                r_squared: p.r_squared,
                n_models: p.points.len(),
            }
        })
        .collect();
    write_with(&out.join("accuracy_robustness.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["transform", "model_id", "clean_accuracy", "robustness"])?;
        for p in &panels {
            for (m, a, r) in &p.points {
                csv.write_record([p.transform.clone(), m.clone(), a.to_string(), r.to_string()])?;
            }
        }
        csv.flush()?;
        Ok(())
    })?;
    write_with(&out.join("accuracy_robustness_r2.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        for r in &r2_rows {
            csv.serialize(r)?;
        }
        csv.flush()?;
        Ok(())
    })?;
    if !panels.is_empty() {
        fs::write(out.join("accuracy_robustness.svg"), plots::accuracy_vs_robustness(&panels))?;
    }
    if models.len() < 2 {
        notices.push(format!("{HEATMAP_NOTICE}; found {}", models.len()));
    }

    let matrix = if models.len() >= 2 {
        let per_model: BTreeMap<String, BTreeMap<String, f64>> =
            rows.iter().map(|r| (r.model_id.clone(), r.robustness.clone())).collect();
        let m = correlation_matrix(&per_model)?;
        write_with(&out.join("correlation.csv"), |w| write_correlation_csv(&m, w))?;
        fs::write(out.join("correlation_heatmap.svg"), plots::correlation_heatmap(&m))?;
        Some(m)
    } else {
        None
    };

    let techniques = technique_comparison(cfg, &rows, out)?;

    let brittle_model = cfg.report.brittle_model.clone().or_else(|| (models.len() == 1).then(|| models[0].clone()));
    let dist = if cfg.report.distances {
        let d = distances(cfg, &manifest, brittle_model.as_deref().map(|m| (&table, m)))?;
        write_distance_outputs(out, "distance_", &d)?;
        Some(d.summary)
    } else {
        None
    };

    let bundle = Bundle {
        tool_version: crate::config::TOOL_VERSION,
        models: &rows,
        severity_averages: &averages,
        accuracy_robustness_r_squared: &r2_rows,
        correlation: matrix.as_ref(),
        techniques: &techniques,
        distances: dist.as_ref(),
        notices: &notices,
    };
    write_json(&out.join("report.json"), &bundle)?;
    let mut lines = vec![format!("report for {} model(s) -> {}", models.len(), out.display())];
    lines.extend(notices.iter().map(|n| format!("notice: {n}")));
    Ok(lines)
}

/// Technique-vs-baseline scatter data and the accuracy gate, when a baseline is configured.
fn technique_comparison(cfg: &RunConfig, rows: &[ModelRow], out: &std::path::Path) -> Result<Vec<TechniqueRow>> {
    let Some(baseline) = &cfg.report.baseline else {
        return Ok(Vec::new());
    };
    let find = |id: &str| {
        rows.iter()
            .find(|r| r.model_id == id)
            .ok_or_else(|| Error::MissingPredictions(vec![format!("{id}:*:*")]))
    };
    let base = find(baseline)?;
    let mut series: BTreeMap<String, Vec<(String, f64, f64)>> = BTreeMap::new();
    let mut gate = Vec::new();
    for (technique, model) in &cfg.report.techniques {
        let row = find(model)?;
        let pts = base
            .robustness
            .iter()
            .filter_map(|(t, b)| row.robustness.get(t).map(|v| (t.clone(), *b, *v)))
            .collect();
        series.insert(technique.clone(), pts);
        gate.push(TechniqueRow {
            technique: technique.clone(),
            model_id: model.clone(),
            clean_accuracy: row.clean_accuracy,
            baseline_clean_accuracy: base.clean_accuracy,
            delta_pp: (row.clean_accuracy - base.clean_accuracy) * 100.0,
            flagged: accuracy_gate_flagged(base.clean_accuracy, row.clean_accuracy),
        });
    }
    write_with(&out.join("technique_vs_baseline.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["technique", "transform", "baseline_robustness", "technique_robustness"])?;
        for (tech, pts) in &series {
            for (t, b, v) in pts {
                csv.write_record([tech.clone(), t.clone(), b.to_string(), v.to_string()])?;
            }
        }
        csv.flush()?;
        Ok(())
    })?;
    write_with(&out.join("technique_accuracy.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        for g in &gate {
            csv.serialize(g)?;
        }
        csv.flush()?;
        Ok(())
    })?;
    fs::write(out.join("technique_vs_baseline.svg"), plots::technique_vs_baseline(&series))?;
    Ok(gate)
}
