//! Run configuration.
//!
//! A run is described by one TOML file whose tables mirror the pipeline stages. Any key can be
//! overridden from the command line with `--set dotted.key=value`; the value is read as a TOML
//! literal and falls back to a bare string. Unknown keys are rejected, and the fully resolved
//! configuration is validated before a command touches the file system.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use natrob_core::adversarial::{AnalysisConfig, DistanceMode};
use natrob_core::dataset::{FrameManifest, Split, SynthVideoConfig};
use natrob_core::pipeline::EvalPlan;
use natrob_core::predictor::{Endpoint, ServiceOptions};
use natrob_core::trainer::{strength_grid, Technique, TrainConfig};
use natrob_core::{Error, EvalGeometry, Family, Result, SeverityTable};
use serde::{Deserialize, Serialize};

pub const TOOL_NAME: &str = "natrob";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";
pub const VERSION_FILE: &str = "version.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed for distortion draws and training-crop sampling.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    pub geometry: EvalGeometry,
    /// Severity-table overrides; omitted families keep their defaults.
    pub distortions: SeverityTable,
    pub predictor: PredictorSection,
    pub eval: EvalSection,
    pub metrics: MetricsSection,
    pub analysis: AnalysisSection,
    pub trainer: TrainerSection,
    pub report: ReportSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("natrob-out"),
            dataset: DatasetSection::default(),
            geometry: EvalGeometry::default(),
            distortions: SeverityTable::default(),
            predictor: PredictorSection::default(),
            eval: EvalSection::default(),
            metrics: MetricsSection::default(),
            analysis: AnalysisSection::default(),
            trainer: TrainerSection::default(),
            report: ReportSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Manifest CSV read by every command except `gen-synthetic` and `distort`.
    pub manifest: Option<PathBuf>,
    /// Generator settings used by `gen-synthetic`.
    pub synthetic: SynthVideoConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Builtin,
    Service,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRef {
    pub id: String,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorSection {
    pub backend: Backend,
    /// Builtin checkpoints, listed explicitly.
    pub models: Vec<ModelRef>,
    /// Builtin checkpoints, every `*.json` in this directory; the file stem is the model id.
    pub model_dir: Option<PathBuf>,
    /// `tcp://host:port` or `exec:program args`.
    pub endpoint: Option<String>,
    /// Model id recorded for service predictions.
    pub service_model_id: String,
    pub service: ServiceOptions,
}

impl Default for PredictorSection {
    fn default() -> Self {
        Self {
            backend: Backend::Builtin,
            models: Vec::new(),
            model_dir: None,
            endpoint: None,
            service_model_id: "service".into(),
            service: ServiceOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub offsets: Vec<i32>,
    pub families: Vec<Family>,
    pub severities: Vec<u8>,
    /// Independent draws per stochastic distortion.
    pub draws: usize,
    pub splits: Vec<Split>,
}

impl Default for EvalSection {
    fn default() -> Self {
        let p = EvalPlan::default();
        Self { offsets: p.offsets, families: p.families, severities: p.severities, draws: p.draws, splits: p.splits }
    }
}

/// Which natural-robustness average enters cross-model comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NaturalPooling {
    /// Mean of the five `|Δt|` bins, each pooling `±k`.
    #[default]
    Pooled,
    /// Mean of the ten signed offsets.
    Signed,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub natural_pooling: NaturalPooling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// Ball radius in 8-bit units.
    pub epsilon: f64,
    pub offset: i32,
    pub sample_size: Option<usize>,
    pub mode: DistanceMode,
    /// Predictions used to flag brittle pairs.
    pub predictions: Option<PathBuf>,
    pub model_id: Option<String>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let a = AnalysisConfig::default();
        Self { epsilon: a.epsilon, offset: a.offset, sample_size: a.sample_size, mode: a.mode, predictions: None, model_id: None }
    }
}

impl AnalysisSection {
    pub fn to_config(&self) -> AnalysisConfig {
        AnalysisConfig { epsilon: self.epsilon, offset: self.offset, sample_size: self.sample_size, mode: self.mode }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// One model from `trainer.config`.
    #[default]
    Single,
    /// Strength × seed grid for every listed technique.
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerSection {
    pub mode: TrainMode,
    /// Checkpoint id in single mode.
    pub model_id: String,
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    /// Random crops per training anchor in addition to the centered crop.
    pub extra_crops: usize,
    /// Grid mode: techniques to train; baseline runs are always added as the accuracy reference.
    pub techniques: Vec<Technique>,
    /// Grid mode: indices into each technique's five-value strength grid.
    pub strengths: Vec<usize>,
    /// Grid mode: seeds per strength, counted up from `config.seed`.
    pub seeds: usize,
    pub config: TrainConfig,
}

impl Default for TrainerSection {
    fn default() -> Self {
        Self {
            mode: TrainMode::Single,
            model_id: "reference".into(),
            hidden: vec![natrob_core::trainer::DEFAULT_HIDDEN],
            extra_crops: 4,
            techniques: Technique::ALL.to_vec(),
            strengths: (0..5).collect(),
            seeds: 5,
            config: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    /// Prediction CSVs to merge.
    pub predictions: Vec<PathBuf>,
    /// Compute frame-pair distances for the L∞ CDF.
    pub distances: bool,
    /// Model whose predictions flag brittle pairs; defaults to the only model when there is one.
    pub brittle_model: Option<String>,
    /// Reference model for the technique-vs-baseline comparison.
    pub baseline: Option<String>,
    /// Technique label → model id, compared against `baseline`.
    pub techniques: BTreeMap<String, String>,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self { predictions: Vec::new(), distances: true, brittle_model: None, baseline: None, techniques: BTreeMap::new() }
    }
}

impl RunConfig {
    /// Reads `path` (or starts from defaults), applies overrides in order and validates.
    pub fn load(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| match e.kind() {
                    std::io::ErrorKind::NotFound => Error::MissingFile(p.to_path_buf()),
                    _ => Error::Io(e),
                })?;
                text.parse::<toml::Table>().map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for (key, value) in overrides {
            set_key(&mut table, key, value.clone())?;
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.eval_plan().validate()?;
        self.dataset.synthetic.validate()?;
        self.analysis.to_config().validate()?;
        let t = &self.trainer;
        if t.hidden.contains(&0) {
            return Err(Error::Config("trainer.hidden widths must be positive".into()));
        }
        match t.mode {
            TrainMode::Single => t.config.validate()?,
            TrainMode::Grid => {
                if t.seeds == 0 || t.strengths.is_empty() {
                    return Err(Error::Config("trainer.seeds and trainer.strengths must be non-empty".into()));
                }
                let n = strength_grid(Technique::Baseline).len();
                if let Some(i) = t.strengths.iter().find(|&&i| i >= n) {
                    return Err(Error::Config(format!("trainer.strengths index {i} out of range 0..{n}")));
                }
            }
        }
        if self.predictor.backend == Backend::Service {
            let endpoint = self.predictor.endpoint.as_deref().ok_or_else(|| {
                Error::Config("predictor.endpoint is required for the service backend".into())
            })?;
            endpoint.parse::<Endpoint>()?;
        }
        Ok(())
    }

    pub fn eval_plan(&self) -> EvalPlan {
        EvalPlan {
            geometry: self.geometry,
            severity_table: self.distortions.clone(),
            offsets: self.eval.offsets.clone(),
            families: self.eval.families.clone(),
            severities: self.eval.severities.clone(),
            draws: self.eval.draws,
            master_seed: self.seed,
            splits: self.eval.splits.clone(),
        }
    }

    pub fn manifest(&self) -> Result<FrameManifest> {
        let path = self
            .dataset
            .manifest
            .as_ref()
            .ok_or_else(|| Error::Config("dataset.manifest is required for this command".into()))?;
        FrameManifest::load(path)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize configuration: {e}")))
    }

    /// Writes the resolved configuration and the tool-version stamp into `dir`.
    pub fn write_provenance(&self, dir: &Path, command: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        let header = format!("# resolved by {TOOL_NAME} {TOOL_VERSION} for `{command}`\n");
        fs::write(dir.join(RESOLVED_CONFIG_FILE), header + &self.to_toml()?)?;
        let stamp = serde_json::json!({ "tool": TOOL_NAME, "version": TOOL_VERSION, "command": command });
        fs::write(dir.join(VERSION_FILE), format!("{stamp:#}\n"))?;
        Ok(())
    }
}

/// Parses `key=value`; the value is a TOML literal when it parses as one, otherwise a string.
pub fn parse_override(s: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override `{s}` has an empty key segment")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("cannot set `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
