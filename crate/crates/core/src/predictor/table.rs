//! Prediction records keyed by (model, frame, transform) and their CSV form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use crate::dataset::Offset;
use crate::distortions::{Family, MAX_SEVERITY};
use crate::error::{Error, Result};
use crate::trainer::argmax;

pub const CSV_COLUMNS: [&str; 8] =
    ["model_id", "shot_id", "frame_offset", "transform_family", "severity", "seed", "predicted_label", "logits"];

const IDENTITY: &str = "identity";
const NATURAL: &str = "natural";

/// Which transformation of an anchor a prediction was made on.
///
/// `Identity` is the clean anchor. `Natural(k)` is the temporal neighbor at offset `k`.
/// `Distortion` is a synthetic distortion of the anchor; for stochastic families `seed` is the
/// draw seed from which each frame's stream is keyed, so one seed names one draw across the
/// whole dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TransformRef {
    Identity,
    Natural(Offset),
    Distortion { family: Family, severity: u8, seed: Option<u64> },
}

impl TransformRef {
    /// Offset of the frame the prediction was made on (0 for the anchor).
    pub fn frame_offset(&self) -> i32 {
        match self {
            TransformRef::Natural(o) => o.get(),
            _ => 0,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            TransformRef::Identity => IDENTITY,
            TransformRef::Natural(_) => NATURAL,
            TransformRef::Distortion { family, .. } => family.name(),
        }
    }

    pub fn severity(&self) -> i32 {
        match self {
            TransformRef::Identity => 0,
            TransformRef::Natural(o) => o.get(),
            TransformRef::Distortion { severity, .. } => i32::from(*severity),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            TransformRef::Distortion { seed, .. } => *seed,
            _ => None,
        }
    }

    /// Builds a transform from its CSV columns.
    pub fn from_columns(family: &str, severity: i32, seed: Option<u64>) -> Result<Self> {
        let no_seed = |t: TransformRef| {
            if seed.is_some() {
                Err(Error::Parse(format!("`{family}` rows carry no seed")))
            } else {
                Ok(t)
            }
        };
        match family {
            IDENTITY | "anchor" => {
                if severity != 0 {
                    return Err(Error::Parse(format!("identity rows need severity 0, got {severity}")));
                }
                no_seed(TransformRef::Identity)
            }
            NATURAL => {
                let o = Offset::new(severity)
                    .map_err(|_| Error::Parse(format!("natural severity must be a nonzero offset in ±5, got {severity}")))?;
                no_seed(TransformRef::Natural(o))
            }
            name => {
                let fam: Family = name.parse().map_err(|_| Error::Parse(format!("unknown transform family `{name}`")))?;
                if !(1..=i32::from(MAX_SEVERITY)).contains(&severity) {
                    return Err(Error::Parse(format!("{name} severity must be 1..=5, got {severity}")));
                }
                if fam.is_stochastic() && seed.is_none() {
                    return Err(Error::Parse(format!("{name} rows require a seed")));
                }
                if !fam.is_stochastic() && seed.is_some() {
                    return Err(Error::Parse(format!("{name} is deterministic and takes no seed")));
                }
                Ok(TransformRef::Distortion { family: fam, severity: severity as u8, seed })
            }
        }
    }
}

impl fmt::Display for TransformRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformRef::Identity => f.write_str(IDENTITY),
            TransformRef::Natural(o) => write!(f, "{NATURAL}{o}"),
            TransformRef::Distortion { family, severity, seed: None } => write!(f, "{family}/{severity}"),
            TransformRef::Distortion { family, severity, seed: Some(s) } => write!(f, "{family}/{severity}@{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordKey {
    pub model_id: String,
    pub shot_id: String,
    pub transform: TransformRef,
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.model_id, self.shot_id, self.transform)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub logits: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub key: RecordKey,
    pub prediction: Prediction,
}

impl PredictionRecord {
    /// Record whose label is the argmax of `logits`.
    pub fn from_logits(model_id: &str, shot_id: &str, transform: TransformRef, logits: Vec<f64>) -> Self {
        let key = RecordKey { model_id: model_id.into(), shot_id: shot_id.into(), transform };
        Self { key, prediction: Prediction { label: argmax(&logits), logits: Some(logits) } }
    }

    pub fn from_label(model_id: &str, shot_id: &str, transform: TransformRef, label: usize) -> Self {
        let key = RecordKey { model_id: model_id.into(), shot_id: shot_id.into(), transform };
        Self { key, prediction: Prediction { label, logits: None } }
    }
}

/// Validated, immutable-by-convention collection of predictions. Iteration is in key order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionTable {
    rows: BTreeMap<RecordKey, Prediction>,
    /// Class count per model, when known from logits or supplied by the caller.
    classes: BTreeMap<String, usize>,
    fixed_classes: Option<usize>,
}

impl PredictionTable {
    /// Empty table; `num_classes`, when given, bounds every model's labels and logit lengths.
    pub fn new(num_classes: Option<usize>) -> Self {
        Self { fixed_classes: num_classes, ..Default::default() }
    }

    pub fn from_records(records: impl IntoIterator<Item = PredictionRecord>, num_classes: Option<usize>) -> Result<Self> {
        let mut t = Self::new(num_classes);
        for r in records {
            t.insert(r)?;
        }
        Ok(t)
    }

    pub fn insert(&mut self, record: PredictionRecord) -> Result<()> {
        let PredictionRecord { key, prediction } = record;
        if self.rows.contains_key(&key) {
            return Err(Error::DuplicateKey(key.to_string()));
        }
        let mut k = self.fixed_classes.or_else(|| self.classes.get(&key.model_id).copied());
        if let Some(logits) = &prediction.logits {
            if logits.is_empty() || logits.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse(format!("{key}: logits must be nonempty and finite")));
            }
            match k {
                Some(k) if k != logits.len() => {
                    return Err(Error::SchemaViolation(format!(
                        "{key}: {} logits but model has {k} classes",
                        logits.len()
                    )))
                }
                None => k = Some(logits.len()),
                _ => {}
            }
            if argmax(logits) != prediction.label {
                return Err(Error::Parse(format!(
                    "{key}: predicted_label {} is not the argmax of its logits",
                    prediction.label
                )));
            }
        }
        if let Some(k) = k {
            if prediction.label >= k {
                return Err(Error::LabelOutOfRange { label: prediction.label, num_classes: k });
            }
            if prediction.logits.is_some() {
                self.classes.insert(key.model_id.clone(), k);
            }
        }
        self.rows.insert(key, prediction);
        Ok(())
    }

    /// Adds every row of `other`; fails on the first shared key.
    pub fn merge(&mut self, other: PredictionTable) -> Result<()> {
        for (key, prediction) in other.rows {
            self.insert(PredictionRecord { key, prediction })?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, model_id: &str, shot_id: &str, transform: TransformRef) -> Option<&Prediction> {
        self.rows.get(&RecordKey { model_id: model_id.into(), shot_id: shot_id.into(), transform })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RecordKey, &Prediction)> {
        self.rows.iter()
    }

    pub fn models(&self) -> BTreeSet<&str> {
        self.rows.keys().map(|k| k.model_id.as_str()).collect()
    }

    pub fn transforms(&self, model_id: &str) -> BTreeSet<TransformRef> {
        self.rows.keys().filter(|k| k.model_id == model_id).map(|k| k.transform).collect()
    }

    /// Class count of `model_id`, if known.
    pub fn num_classes(&self, model_id: &str) -> Option<usize> {
        self.fixed_classes.or_else(|| self.classes.get(model_id).copied())
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for (k, p) in &self.rows {
            let logits = p
                .logits
                .as_ref()
                .map(|l| l.iter().map(f64::to_string).collect::<Vec<_>>().join(";"))
                .unwrap_or_default();
            w.write_record([
                k.model_id.clone(),
                k.shot_id.clone(),
                k.transform.frame_offset().to_string(),
                k.transform.family_name().to_string(),
                k.transform.severity().to_string(),
                k.transform.seed().map(|s| s.to_string()).unwrap_or_default(),
                p.label.to_string(),
                logits,
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv(input: impl Read, num_classes: Option<usize>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = rdr.headers().map_err(|e| Error::Parse(format!("prediction header: {e}")))?;
        if header.iter().collect::<Vec<_>>() != CSV_COLUMNS {
            return Err(Error::Parse(format!(
                "prediction columns must be `{}`, got `{}`",
                CSV_COLUMNS.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut table = Self::new(num_classes);
        for (i, row) in rdr.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
            let record = parse_row(&row).map_err(|e| match e {
                Error::Parse(m) => Error::Parse(format!("line {line}: {m}")),
                other => other,
            })?;
            table.insert(record)?;
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?), num_classes)
    }
}

fn parse_row(row: &csv::StringRecord) -> Result<PredictionRecord> {
    let field = |i: usize| row.get(i).unwrap_or("");
    let int = |i: usize| -> Result<i64> {
        field(i).parse().map_err(|_| Error::Parse(format!("{} `{}` is not an integer", CSV_COLUMNS[i], field(i))))
    };
    let model_id = field(0);
    let shot_id = field(1);
    if model_id.is_empty() || shot_id.is_empty() {
        return Err(Error::Parse("model_id and shot_id are required".into()));
    }
    let frame_offset = int(2)?;
    let severity = int(4)?;
    let seed = match field(5) {
        "" => None,
        s => Some(s.parse::<u64>().map_err(|_| Error::Parse(format!("seed `{s}` is not an unsigned integer")))?),
    };
    let severity = i32::try_from(severity).map_err(|_| Error::Parse(format!("severity {severity} out of range")))?;
    let transform = TransformRef::from_columns(field(3), severity, seed)?;
    if i64::from(transform.frame_offset()) != frame_offset {
        return Err(Error::Parse(format!(
            "frame_offset {frame_offset} inconsistent with transform {transform}"
        )));
    }
    let label = int(6)?;
    let label = usize::try_from(label).map_err(|_| Error::Parse(format!("negative predicted_label {label}")))?;
    let logits = match field(7) {
        "" => None,
        s => Some(
            s.split(';')
                .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad logit `{v}`"))))
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    let key = RecordKey { model_id: model_id.into(), shot_id: shot_id.into(), transform };
    Ok(PredictionRecord { key, prediction: Prediction { label, logits } })
}
