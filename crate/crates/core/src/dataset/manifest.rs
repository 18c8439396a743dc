//! Anchor-frame manifests and temporal frame pairs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frame rate of the neighbor sampling.
pub const FRAME_RATE_HZ: f64 = 15.0;
/// Largest neighbor offset on either side of an anchor.
pub const MAX_OFFSET: i8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Parse(format!("unknown split `{s}`"))),
        }
    }
}

/// Signed neighbor index in `-5..=-1 ∪ 1..=5`; one step is one frame at 15 Hz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub struct Offset(i8);

impl Offset {
    pub fn new(k: i32) -> Result<Self> {
        if k == 0 || k.unsigned_abs() > MAX_OFFSET as u32 {
            return Err(Error::InvalidOffset(k));
        }
        Ok(Offset(k as i8))
    }

    pub fn get(self) -> i32 {
        i32::from(self.0)
    }

    pub fn magnitude(self) -> u8 {
        self.0.unsigned_abs()
    }

    /// Signed temporal distance to the anchor in milliseconds, `k · 1000 / 15`.
    pub fn delta_ms(self) -> f64 {
        f64::from(self.0) * 1000.0 / FRAME_RATE_HZ
    }

    /// All ten offsets, ascending.
    pub fn all() -> impl Iterator<Item = Offset> {
        (-(MAX_OFFSET as i32)..=MAX_OFFSET as i32).filter(|&k| k != 0).map(|k| Offset(k as i8))
    }

    fn column(self) -> String {
        format!("n{:+}", self.0)
    }
}

impl TryFrom<i32> for Offset {
    type Error = Error;

    fn try_from(k: i32) -> Result<Self> {
        Offset::new(k)
    }
}

impl From<Offset> for i32 {
    fn from(o: Offset) -> i32 {
        o.get()
    }
}

impl fmt::Display for Offset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub video_id: String,
    pub shot_id: String,
    pub split: Split,
    pub label: usize,
    /// Relative to the manifest's directory.
    pub anchor_path: PathBuf,
    pub neighbor_paths: BTreeMap<Offset, PathBuf>,
}

/// Anchor frames with labels and temporal neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameManifest {
    pub entries: Vec<ManifestEntry>,
    pub num_classes: usize,
    /// Directory that entry paths are relative to.
    pub base_dir: PathBuf,
}

/// An anchor frame paired with one of its temporal neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    pub shot_id: String,
    pub anchor_path: PathBuf,
    pub other_path: PathBuf,
    pub offset: Offset,
    pub delta_ms: f64,
    pub label: usize,
}

const FIXED_COLUMNS: [&str; 5] = ["video_id", "shot_id", "split", "label", "anchor_path"];

fn parse_neighbor_column(name: &str) -> Result<Offset> {
    let k: i32 = name
        .strip_prefix('n')
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse(format!("unexpected manifest column `{name}`")))?;
    if k == 0 {
        return Err(Error::Parse(format!(
            "column `{name}`: offset 0 is the anchor, not a neighbor"
        )));
    }
    Offset::new(k).map_err(|_| Error::Parse(format!("column `{name}`: offset out of range")))
}

impl FrameManifest {
    pub fn new(entries: Vec<ManifestEntry>, num_classes: usize, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let m = Self { entries, num_classes, base_dir: base_dir.into() };
        m.validate()?;
        Ok(m)
    }

    /// Checks label range, unique shot anchors, and that no video straddles splits.
    pub fn validate(&self) -> Result<()> {
        let mut shots = HashSet::new();
        let mut video_split: HashMap<&str, Split> = HashMap::new();
        for e in &self.entries {
            if e.label >= self.num_classes {
                return Err(Error::LabelOutOfRange { label: e.label, num_classes: self.num_classes });
            }
            if !shots.insert(e.shot_id.as_str()) {
                return Err(Error::SchemaViolation(format!(
                    "shot `{}` contributes more than one anchor",
                    e.shot_id
                )));
            }
            match video_split.insert(e.video_id.as_str(), e.split) {
                Some(prev) if prev != e.split => {
                    return Err(Error::SchemaViolation(format!(
                        "video `{}` appears in both {prev} and {} splits",
                        e.video_id, e.split
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.base_dir.join(rel)
    }

    pub fn entry(&self, shot_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.shot_id == shot_id)
    }

    /// Manifest restricted to the given splits (same base directory and class count).
    pub fn filter_splits(&self, splits: &[Split]) -> FrameManifest {
        FrameManifest {
            entries: self.entries.iter().filter(|e| splits.contains(&e.split)).cloned().collect(),
            num_classes: self.num_classes,
            base_dir: self.base_dir.clone(),
        }
    }

    /// Reads and validates a manifest CSV. Paths stay relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        if headers.len() < FIXED_COLUMNS.len()
            || headers.iter().take(FIXED_COLUMNS.len()).ne(FIXED_COLUMNS.iter().copied())
        {
            return Err(Error::Parse(format!(
                "manifest header must start with {}",
                FIXED_COLUMNS.join(",")
            )));
        }
        let mut neighbor_cols = Vec::new();
        for name in headers.iter().skip(FIXED_COLUMNS.len()) {
            let off = parse_neighbor_column(name)?;
            if neighbor_cols.contains(&off) {
                return Err(Error::Parse(format!("duplicate column `{name}`")));
            }
            neighbor_cols.push(off);
        }

        let mut entries = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
            let field = |j: usize| rec.get(j).unwrap_or("").trim();
            let video_id = field(0);
            let shot_id = field(1);
            if video_id.is_empty() || shot_id.is_empty() || field(4).is_empty() {
                return Err(Error::Parse(format!("line {line}: empty id or anchor path")));
            }
            let split = field(2).parse::<Split>().map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
            let label = field(3)
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("line {line}: bad label `{}`", field(3))))?;
            let mut neighbor_paths = BTreeMap::new();
            for (j, &off) in neighbor_cols.iter().enumerate() {
                let p = field(FIXED_COLUMNS.len() + j);
                if !p.is_empty() {
                    neighbor_paths.insert(off, PathBuf::from(p));
                }
            }
            entries.push(ManifestEntry {
                video_id: video_id.to_string(),
                shot_id: shot_id.to_string(),
                split,
                label,
                anchor_path: PathBuf::from(field(4)),
                neighbor_paths,
            });
        }
        let num_classes = entries.iter().map(|e| e.label + 1).max().unwrap_or(0);
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        FrameManifest::new(entries, num_classes, base_dir)
    }

    /// Writes the manifest CSV with all ten neighbor columns.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend(Offset::all().map(Offset::column));
        write_record(&mut w, &header)?;
        for e in &self.entries {
            let mut row = vec![
                e.video_id.clone(),
                e.shot_id.clone(),
                e.split.to_string(),
                e.label.to_string(),
                path_string(&e.anchor_path),
            ];
            row.extend(
                Offset::all().map(|o| e.neighbor_paths.get(&o).map(|p| path_string(p)).unwrap_or_default()),
            );
            write_record(&mut w, &row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// One pair per anchor that has a neighbor at offset `k`.
    pub fn pairs_at_offset(&self, k: i32) -> Result<Vec<FramePair>> {
        let offset = Offset::new(k)?;
        Ok(self
            .entries
            .iter()
            .filter_map(|e| {
                e.neighbor_paths.get(&offset).map(|p| FramePair {
                    shot_id: e.shot_id.clone(),
                    anchor_path: self.resolve(&e.anchor_path),
                    other_path: self.resolve(p),
                    offset,
                    delta_ms: offset.delta_ms(),
                    label: e.label,
                })
            })
            .collect())
    }
}

fn path_string(p: &Path) -> String {
    p.to_string_lossy().replace('\\', "/")
}

fn write_record<W: std::io::Write>(w: &mut csv::Writer<W>, row: &[String]) -> Result<()> {
    w.write_record(row).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}
