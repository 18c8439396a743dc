//! Subcommand implementations.

mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use natrob_core::adversarial::{
    analysis_pairs, mark_brittle, pair_distances, summarize, write_cdf_csv, write_samples_csv, Cdf, DistanceSample,
    DistanceSummary,
};
use natrob_core::dataset::{generate_synthetic, FrameManifest, Split};
use natrob_core::distortions::{apply_in_place, DistortionSpec};
use natrob_core::pipeline::{predict_builtin_manifest, predict_service_manifest, training_samples};
use natrob_core::predictor::{Endpoint, PredictionTable};
use natrob_core::preprocess::FEATURE_LEN;
use natrob_core::trainer::{
    accuracy, accuracy_gate_flagged, default_grid, run_grid, train, write_log_csv, MlpModel, Technique, TrainConfig,
};
use natrob_core::{Direction, Error, Family, Image, Result};

use crate::config::{Backend, RunConfig, TrainMode, TOOL_NAME, TOOL_VERSION};
use crate::{plots, DistortArgs, Failure};

pub use report::report;

pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const PARTIAL_PREDICTIONS_FILE: &str = "predictions.partial.csv";
pub const MISSING_FILE: &str = "predictions.missing.json";

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

type CmdResult = std::result::Result<Vec<String>, Failure>;

fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

/// Creates `path` and hands a buffered writer to `f`.
pub(crate) fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

pub(crate) fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, s + "\n")?;
    Ok(())
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Parse(m) => Error::Config(m),
        other => other,
    }
}

pub fn distort(cfg: &RunConfig, args: &DistortArgs) -> CmdResult {
    let family: Family = args.family.parse().map_err(as_config)?;
    let direction = match &args.direction {
        Some(d) if family != Family::Translation => {
            return Err(Error::Config(format!("--direction {d} only applies to translation")).into())
        }
        Some(d) => d.parse::<Direction>().map_err(as_config)?,
        None => Direction::default(),
    };
    if args.severity > natrob_core::distortions::MAX_SEVERITY {
        return Err(Error::InvalidSeverity(args.severity).into());
    }
    let mut stems = BTreeSet::new();
    for input in &args.inputs {
        let stem = file_stem(input)?;
        if !stems.insert(stem.clone()) {
            return Err(Error::Config(format!("two inputs share the file stem `{stem}`")).into());
        }
    }
    let out_dir = &cfg.output_dir;
    cfg.write_provenance(out_dir, "distort")?;
    let mut lines = Vec::new();
    for input in &args.inputs {
        let stem = file_stem(input)?;
        let bytes = read_input(input)?;
        let spec = DistortionSpec::keyed(family, args.severity, cfg.seed, &stem).with_direction(direction);
        let out_path = out_dir.join(format!("{stem}.png"));
        if spec.is_identity() && bytes.starts_with(PNG_MAGIC) {
            fs::write(&out_path, &bytes)?;
        } else {
            let img = Image::decode(&bytes)?;
            apply_in_place(&spec, &img, &cfg.distortions)?.save_png(&out_path)?;
        }
        let parameter = if spec.is_identity() { None } else { Some(cfg.distortions.param(family, args.severity)?) };
        let sidecar = serde_json::json!({
            "tool": TOOL_NAME,
            "version": TOOL_VERSION,
            "input": input.to_string_lossy(),
            "output": out_path.file_name().map(|n| n.to_string_lossy().into_owned()),
            "spec": spec,
            "parameter": parameter,
            "master_seed": cfg.seed,
        });
        write_json(&out_dir.join(format!("{stem}.json")), &sidecar)?;
        lines.push(format!("{} -> {}", input.display(), out_path.display()));
    }
    Ok(lines)
}

fn file_stem(p: &Path) -> Result<String> {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| Error::Config(format!("input `{}` has no file name", p.display())))
}

pub fn gen_synthetic(cfg: &RunConfig) -> CmdResult {
    let out = &cfg.output_dir;
    let manifest = generate_synthetic(&cfg.dataset.synthetic, out)?;
    cfg.write_provenance(out, "gen-synthetic")?;
    let count = |s: Split| manifest.entries.iter().filter(|e| e.split == s).count();
    Ok(vec![format!(
        "wrote {} shots ({} train, {} val, {} test) to {}",
        manifest.entries.len(),
        count(Split::Train),
        count(Split::Val),
        count(Split::Test),
        out.join("manifest.csv").display()
    )])
}

fn layer_sizes(cfg: &RunConfig, num_classes: usize) -> Vec<usize> {
    let mut v = vec![FEATURE_LEN];
    v.extend(&cfg.trainer.hidden);
    v.push(num_classes);
    v
}

pub fn train_ref(cfg: &RunConfig) -> CmdResult {
    let manifest = cfg.manifest()?;
    let t = &cfg.trainer;
    let train_set = training_samples(&manifest, &[Split::Train], &cfg.geometry, t.extra_crops, cfg.seed)?;
    let val_set = training_samples(&manifest, &[Split::Val], &cfg.geometry, 0, cfg.seed)?;
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training split").into());
    }
    let out = &cfg.output_dir;
    cfg.write_provenance(out, "train-ref")?;
    let sizes = layer_sizes(cfg, manifest.num_classes);
    match t.mode {
        TrainMode::Single => {
            let init = MlpModel::init(&sizes, t.config.seed)?;
            let val = (!val_set.is_empty()).then_some(val_set.as_slice());
            let outcome = train(&init, &train_set, val, &t.config)?;
            let ckpt = out.join("models").join(format!("{}.json", t.model_id));
            std::fs::create_dir_all(out.join("models"))?;
            outcome.model.save(&ckpt)?;
            write_log_csv(&outcome.log, out.join(format!("train_log_{}.csv", t.model_id)))?;
            let val_accuracy = val.map(|v| accuracy(&outcome.model, v)).transpose()?;
            let summary = serde_json::json!({
                "model_id": t.model_id,
                "technique": t.config.technique,
                "train_accuracy": accuracy(&outcome.model, &train_set)?,
                "val_accuracy": val_accuracy,
                "train_samples": train_set.len(),
                "val_samples": val_set.len(),
            });
            write_json(&out.join(format!("train_summary_{}.json", t.model_id)), &summary)?;
            let shown = val_accuracy.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
            Ok(vec![format!("trained {} (val accuracy {shown}) -> {}", t.model_id, ckpt.display())])
        }
        TrainMode::Grid => train_grid(cfg, &sizes, &train_set, &val_set),
    }
}

/// Strength index whose baseline run is the accuracy reference (learning-rate multiplier 1).
const REFERENCE_STRENGTH: usize = 2;

struct GridEntry {
    run_id: String,
    strength: usize,
    seed_index: usize,
    config: TrainConfig,
}

fn grid_entries(cfg: &RunConfig) -> Vec<GridEntry> {
    let t = &cfg.trainer;
    let mut techniques = vec![Technique::Baseline];
    techniques.extend(t.techniques.iter().copied().filter(|&x| x != Technique::Baseline));
    let mut out = Vec::new();
    for tech in techniques {
        let mut strengths: BTreeSet<usize> = t.strengths.iter().copied().collect();
        if tech == Technique::Baseline {
            strengths.insert(REFERENCE_STRENGTH);
        }
        let grid = default_grid(tech, &t.config);
        let per_strength = grid.len() / 5;
        for s in strengths {
            for r in 0..t.seeds {
                let mut config = if r < per_strength {
                    grid[s * per_strength + r].clone()
                } else {
                    let mut c = grid[s * per_strength].clone();
                    c.seed = t.config.seed.wrapping_add(r as u64);
                    c
                };
                config.technique = tech;
                out.push(GridEntry { run_id: format!("{tech}-s{s}-r{r}"), strength: s, seed_index: r, config });
            }
        }
    }
    out
}

fn train_grid(
    cfg: &RunConfig,
    sizes: &[usize],
    train_set: &[natrob_core::trainer::Sample],
    val_set: &[natrob_core::trainer::Sample],
) -> CmdResult {
    if val_set.is_empty() {
        return Err(Error::EmptyInput("validation split (needed for the accuracy gate)").into());
    }
    let out = &cfg.output_dir;
    let entries = grid_entries(cfg);
    let configs: Vec<TrainConfig> = entries.iter().map(|e| e.config.clone()).collect();
    for c in &configs {
        c.validate()?;
    }
    let runs = run_grid(sizes, &configs, train_set, val_set)?;
    let reference: BTreeMap<usize, f64> = entries
        .iter()
        .zip(&runs)
        .filter(|(e, _)| e.config.technique == Technique::Baseline && e.strength == REFERENCE_STRENGTH)
        .map(|(e, r)| (e.seed_index, r.val_accuracy))
        .collect();
    fs::create_dir_all(out.join("models"))?;
    let mut lines = Vec::new();
    write_with(&out.join("grid.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "run_id",
            "technique",
            "strength_index",
            "lambda",
            "label_smoothing",
            "lr",
            "seed",
            "val_accuracy",
            "baseline_val_accuracy",
            "delta_pp",
            "flagged",
        ])?;
        for (e, r) in entries.iter().zip(&runs) {
            r.outcome.model.save(out.join("models").join(format!("{}.json", e.run_id)))?;
            let log_path = out.join("logs").join(format!("{}.csv", e.run_id));
            fs::create_dir_all(log_path.parent().expect("joined path has a parent"))?;
            write_log_csv(&r.outcome.log, &log_path)?;
            let base = reference[&e.seed_index];
            let flagged = accuracy_gate_flagged(base, r.val_accuracy);
            if flagged {
                lines.push(format!(
                    "flagged {}: val accuracy {:.4} is more than 1.2 points below baseline {:.4}",
                    e.run_id, r.val_accuracy, base
                ));
            }
            csv.write_record([
                e.run_id.clone(),
                e.config.technique.to_string(),
                e.strength.to_string(),
                e.config.lambda.to_string(),
                e.config.label_smoothing.to_string(),
                e.config.lr.to_string(),
                e.config.seed.to_string(),
                r.val_accuracy.to_string(),
                base.to_string(),
                ((r.val_accuracy - base) * 100.0).to_string(),
                flagged.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    lines.push(format!("trained {} runs -> {}", runs.len(), out.join("grid.csv").display()));
    Ok(lines)
}

/// Builtin checkpoints from `predictor.models` and `predictor.model_dir`, sorted by id.
pub fn load_models(cfg: &RunConfig) -> Result<Vec<(String, MlpModel)>> {
    let mut refs: Vec<(String, PathBuf)> =
        cfg.predictor.models.iter().map(|m| (m.id.clone(), m.checkpoint.clone())).collect();
    if let Some(dir) = &cfg.predictor.model_dir {
        let mut found: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|_| Error::MissingFile(dir.clone()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        found.sort();
        for p in found {
            refs.push((file_stem(&p)?, p));
        }
    }
    if refs.is_empty() {
        return Err(Error::Config("no builtin models: set predictor.models or predictor.model_dir".into()));
    }
    refs.sort();
    let mut seen = BTreeSet::new();
    refs.into_iter()
        .map(|(id, path)| {
            if !seen.insert(id.clone()) {
                return Err(Error::Config(format!("duplicate model id `{id}`")));
            }
            Ok((id, MlpModel::load(&path)?))
        })
        .collect()
}

pub fn predict(cfg: &RunConfig) -> CmdResult {
    let manifest = cfg.manifest()?;
    let plan = cfg.eval_plan();
    let out = &cfg.output_dir;
    cfg.write_provenance(out, "predict")?;
    let path = out.join(PREDICTIONS_FILE);
    match cfg.predictor.backend {
        Backend::Builtin => {
            let models = load_models(cfg)?;
            for (id, m) in &models {
                if m.num_classes() != manifest.num_classes || m.input_len() != FEATURE_LEN {
                    return Err(Error::ShapeMismatch(format!(
                        "model `{id}` maps {} features to {} classes; the pipeline needs {FEATURE_LEN} to {}",
                        m.input_len(),
                        m.num_classes(),
                        manifest.num_classes
                    ))
                    .into());
                }
            }
            let table = predict_builtin_manifest(&manifest, &plan, &models)?;
            table.save(&path)?;
            Ok(vec![format!("wrote {} predictions for {} models -> {}", table.len(), models.len(), path.display())])
        }
        Backend::Service => {
            let endpoint: Endpoint = cfg.predictor.endpoint.as_deref().unwrap_or_default().parse()?;
            let run = predict_service_manifest(&manifest, &plan, &cfg.predictor.service_model_id, &endpoint, &cfg.predictor.service)?;
            match run.error {
                None => {
                    run.table.save(&path)?;
                    Ok(vec![format!("wrote {} predictions -> {}", run.table.len(), path.display())])
                }
                Some(error) => {
                    if path.exists() {
                        fs::remove_file(&path)?;
                    }
                    let partial = out.join(PARTIAL_PREDICTIONS_FILE);
                    run.table.save(&partial)?;
                    let missing = serde_json::json!({
                        "complete": false,
                        "error_code": error.code(),
                        "error": error.to_string(),
                        "rows_written": run.table.len(),
                        "missing_shots": run.missing_shots,
                    });
                    write_json(&out.join(MISSING_FILE), &missing)?;
                    let details = serde_json::json!({
                        "partial_csv": partial.to_string_lossy(),
                        "missing_list": out.join(MISSING_FILE).to_string_lossy(),
                        "missing_shots": run.missing_shots.len(),
                        "first_missing_shot": run.missing_shots.first(),
                    });
                    Err(Failure { error, details: Some(details) })
                }
            }
        }
    }
}

/// Frame-pair distances over the evaluated splits, optionally flagged with brittleness.
pub(crate) struct DistanceReport {
    pub samples: Vec<DistanceSample>,
    pub summary: DistanceSummary,
}

pub(crate) fn distances(cfg: &RunConfig, manifest: &FrameManifest, brittle: Option<(&PredictionTable, &str)>) -> Result<DistanceReport> {
    let analysis = cfg.analysis.to_config();
    let subset = manifest.filter_splits(&cfg.eval.splits);
    let pairs = analysis_pairs(&subset, &analysis)?;
    let run = pair_distances(&pairs, analysis.mode, &cfg.geometry);
    let samples = match brittle {
        Some((table, model)) => mark_brittle(&run.samples, table, model)?,
        None => run.samples,
    };
    let summary = summarize(&samples, analysis.epsilon, run.skipped.len())?;
    Ok(DistanceReport { samples, summary })
}

pub(crate) fn write_distance_outputs(dir: &Path, prefix: &str, d: &DistanceReport) -> Result<()> {
    write_with(&dir.join(format!("{prefix}samples.csv")), |w| write_samples_csv(&d.samples, w))?;
    write_with(&dir.join(format!("{prefix}cdf.csv")), |w| write_cdf_csv(&d.samples, w))?;
    write_with(&dir.join(format!("{prefix}summary.csv")), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.serialize(&d.summary)?;
        csv.flush()?;
        Ok(())
    })?;
    write_json(&dir.join(format!("{prefix}summary.json")), &d.summary)?;
    let curve = |vals: &[f64]| -> Option<plots::Line> {
        let cdf = Cdf::new(vals).ok()?;
        Some((0..=255).map(|t| (f64::from(t), cdf.at(f64::from(t)))).collect())
    };
    let all: Vec<f64> = d.samples.iter().map(|s| f64::from(s.linf)).collect();
    let brittle: Vec<f64> = d.samples.iter().filter(|s| s.brittle == Some(true)).map(|s| f64::from(s.linf)).collect();
    let svg = plots::linf_cdf(&curve(&all).unwrap_or_default(), curve(&brittle).as_ref(), d.summary.epsilon);
    fs::write(dir.join("linf_cdf.svg"), svg)?;
    Ok(())
}

pub fn adv_analysis(cfg: &RunConfig) -> CmdResult {
    let manifest = cfg.manifest()?;
    let out = &cfg.output_dir;
    cfg.write_provenance(out, "adv-analysis")?;
    let a = &cfg.analysis;
    let table = match &a.predictions {
        Some(p) => Some(PredictionTable::load(p, Some(manifest.num_classes))?),
        None => None,
    };
    let model = match (&table, &a.model_id) {
        (Some(_), Some(m)) => Some(m.clone()),
        (Some(t), None) => {
            let models = t.models();
            if models.len() != 1 {
                return Err(Error::Config("analysis.model_id is required unless predictions hold exactly one model".into()).into());
            }
            models.into_iter().next().map(str::to_string)
        }
        (None, Some(_)) => return Err(Error::Config("analysis.model_id needs analysis.predictions".into()).into()),
        (None, None) => None,
    };
    let brittle = table.as_ref().zip(model.as_deref());
    let d = distances(cfg, &manifest, brittle)?;
    write_distance_outputs(out, "distance_", &d)?;
    let s = &d.summary;
    Ok(vec![format!(
        "{} pairs: mean L∞ {:.2}, std {:.2}, {:.4} within ε = {}",
        s.n_pairs, s.mean, s.std, s.fraction_within_epsilon, s.epsilon
    )])
}
