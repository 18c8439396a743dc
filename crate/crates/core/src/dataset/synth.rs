//! Synthetic video generator: a desk-scale stand-in for real video shots.
//!
//! Each shot renders one anti-aliased shape over a static textured background. The class is a
//! (shape, color family) combination. Across the shot's frames the shape moves with a constant
//! velocity plus per-frame Gaussian jitter, and the whole frame drifts linearly in brightness,
//! so neighbors drift further from the anchor as the temporal offset grows.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::manifest::{FrameManifest, ManifestEntry, Offset, MAX_OFFSET};
use crate::dataset::split_by_video;
use crate::error::{Error, Result};
use crate::image::{hsv_to_rgb, quantize, Image, PixelHsv};
use crate::rng::{self, Normal};

const SHAPES: [Shape; 4] = [Shape::Disk, Shape::Ring, Shape::HorizontalBar, Shape::VerticalBar];
/// Base hues (degrees) of the two color families.
const COLOR_HUES: [f64; 2] = [10.0, 220.0];
/// Largest number of distinct classes the generator can render.
pub const MAX_SYNTH_CLASSES: usize = SHAPES.len() * COLOR_HUES.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Disk,
    Ring,
    HorizontalBar,
    VerticalBar,
}

impl Shape {
    fn contains(self, dx: f64, dy: f64, r: f64) -> bool {
        match self {
            Shape::Disk => dx * dx + dy * dy <= r * r,
            Shape::Ring => {
                let d2 = dx * dx + dy * dy;
                d2 <= r * r && d2 >= 0.3 * r * r
            }
            Shape::HorizontalBar => dx.abs() <= r && dy.abs() <= 0.35 * r,
            Shape::VerticalBar => dx.abs() <= 0.35 * r && dy.abs() <= r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthVideoConfig {
    /// At most [`MAX_SYNTH_CLASSES`]; class `c` is shape `c / 2`, color family `c % 2`.
    pub num_classes: usize,
    pub num_shots: usize,
    pub shots_per_video: usize,
    /// Odd, at most 11 (anchor ± 5).
    pub frames_per_shot: usize,
    /// Square frame side in pixels.
    pub frame_size: usize,
    /// Range of object speed in pixels per frame.
    pub velocity: [f64; 2],
    /// Standard deviation of per-frame positional jitter, pixels.
    pub jitter_sigma: f64,
    /// Largest brightness change per frame, unit-interval scale; each shot draws its rate
    /// uniformly from `[-drift, drift]`.
    pub brightness_drift: f64,
    /// Object radius as a fraction of the frame size.
    pub object_radius: [f64; 2],
    /// Train/val/test fractions, assigned per video.
    pub split_fractions: [f64; 3],
    pub seed: u64,
}

impl Default for SynthVideoConfig {
    fn default() -> Self {
        Self {
            num_classes: 8,
            num_shots: 400,
            shots_per_video: 2,
            frames_per_shot: 11,
            frame_size: 64,
            velocity: [0.3, 1.2],
            jitter_sigma: 0.5,
            brightness_drift: 0.012,
            object_radius: [0.2, 0.28],
            split_fractions: [0.8, 0.1, 0.1],
            seed: 0,
        }
    }
}

impl SynthVideoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_classes == 0 || self.num_classes > MAX_SYNTH_CLASSES {
            return bad(format!("num_classes must be in 1..={MAX_SYNTH_CLASSES}"));
        }
        if self.frames_per_shot % 2 == 0 || self.frames_per_shot > 2 * MAX_OFFSET as usize + 1 {
            return bad(format!("frames_per_shot must be odd and at most {}", 2 * MAX_OFFSET + 1));
        }
        if self.num_shots == 0 || self.shots_per_video == 0 || self.frame_size < 8 {
            return bad("num_shots, shots_per_video must be positive and frame_size >= 8".into());
        }
        let ranges_ok = self.velocity[0] >= 0.0
            && self.velocity[1] >= self.velocity[0]
            && self.jitter_sigma >= 0.0
            && self.brightness_drift >= 0.0
            && self.object_radius[0] > 0.0
            && self.object_radius[1] >= self.object_radius[0]
            && self.object_radius[1] <= 0.5;
        if !ranges_ok {
            return bad("velocity, jitter, drift and radius ranges must be non-negative and ordered".into());
        }
        Ok(())
    }

    fn half_span(&self) -> i32 {
        (self.frames_per_shot / 2) as i32
    }
}

/// Identifiers of shot `index`: `(video_id, shot_id)`.
pub fn shot_ids(config: &SynthVideoConfig, index: usize) -> (String, String) {
    let video = format!("v{:05}", index / config.shots_per_video);
    let shot = format!("{video}_s{}", index % config.shots_per_video);
    (video, shot)
}

pub fn shot_label(config: &SynthVideoConfig, index: usize) -> usize {
    index % config.num_classes
}

struct ShotParams {
    shape: Shape,
    color: [f64; 3],
    radius: f64,
    start: (f64, f64),
    velocity: (f64, f64),
    drift: f64,
    background: Background,
}

struct Background {
    base: [f64; 3],
    waves: Vec<(f64, f64, f64, f64, [f64; 3])>,
}

impl Background {
    fn at(&self, x: f64, y: f64) -> [f64; 3] {
        let mut c = self.base;
        for &(fx, fy, phase, amp, tint) in &self.waves {
            let s = amp * libm::sin(fx * x + fy * y + phase);
            for ch in 0..3 {
                c[ch] += s * tint[ch];
            }
        }
        c
    }
}

fn shot_params(config: &SynthVideoConfig, index: usize) -> ShotParams {
    let (_, shot_id) = shot_ids(config, index);
    let mut rng = rng::stream(rng::derive_seed(&[b"synth-shot", &config.seed.to_le_bytes(), shot_id.as_bytes()]));
    let label = shot_label(config, index);
    let shape = SHAPES[label / COLOR_HUES.len()];
    let hue = COLOR_HUES[label % COLOR_HUES.len()] + rng.random_range(-15.0..=15.0);
    let color = hsv_to_rgb(PixelHsv::new(hue, rng.random_range(0.7..=1.0), rng.random_range(0.75..=1.0)));

    let size = config.frame_size as f64;
    let radius = size * rng.random_range(config.object_radius[0]..=config.object_radius[1]);
    let spread = 0.1 * size;
    let start = (
        size / 2.0 + rng.random_range(-spread..=spread),
        size / 2.0 + rng.random_range(-spread..=spread),
    );
    let speed = rng.random_range(config.velocity[0]..=config.velocity[1]);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let velocity = (speed * libm::cos(angle), speed * libm::sin(angle));
    let drift = config.brightness_drift * rng.random_range(-1.0..=1.0);

    let gray = rng.random_range(0.3..=0.6);
    let base = hsv_to_rgb(PixelHsv::new(rng.random_range(0.0..360.0), rng.random_range(0.0..=0.25), gray));
    let waves = (0..3)
        .map(|_| {
            let freq = rng.random_range(0.1..=0.6);
            let dir = rng.random_range(0.0..std::f64::consts::TAU);
            let tint = [rng.random_range(0.5..=1.0), rng.random_range(0.5..=1.0), rng.random_range(0.5..=1.0)];
            (
                freq * libm::cos(dir),
                freq * libm::sin(dir),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.03..=0.08),
                tint,
            )
        })
        .collect();
    ShotParams { shape, color, radius, start, velocity, drift, background: Background { base, waves } }
}

/// Renders every frame of shot `index`, ordered from offset `-span` to `+span`.
pub fn render_shot(config: &SynthVideoConfig, index: usize) -> Vec<Image> {
    const SUPERSAMPLE: usize = 4;
    let p = shot_params(config, index);
    let (_, shot_id) = shot_ids(config, index);
    let span = config.half_span();
    let size = config.frame_size;
    (-span..=span)
        .map(|k| {
            let mut jrng = rng::stream(rng::derive_seed(&[
                b"synth-jitter",
                &config.seed.to_le_bytes(),
                shot_id.as_bytes(),
                &k.to_le_bytes(),
            ]));
            let mut normal = Normal::new();
            let (jx, jy) = if config.jitter_sigma > 0.0 {
                (config.jitter_sigma * normal.sample(&mut jrng), config.jitter_sigma * normal.sample(&mut jrng))
            } else {
                (0.0, 0.0)
            };
            let cx = p.start.0 + p.velocity.0 * f64::from(k) + jx;
            let cy = p.start.1 + p.velocity.1 * f64::from(k) + jy;
            let shift = p.drift * f64::from(k);
            Image::from_fn(size, size, |x, y| {
                let mut inside = 0usize;
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let px = x as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64;
                        let py = y as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64;
                        if p.shape.contains(px - cx, py - cy, p.radius) {
                            inside += 1;
                        }
                    }
                }
                let cov = inside as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
                let bg = p.background.at(x as f64 + 0.5, y as f64 + 0.5);
                std::array::from_fn(|c| quantize(bg[c] * (1.0 - cov) + p.color[c] * cov + shift))
            })
            .expect("frame size is nonzero")
        })
        .collect()
}

fn frame_file(shot_id: &str, k: i32) -> PathBuf {
    let name = match k {
        0 => "anchor.png".to_string(),
        k if k < 0 => format!("m{}.png", -k),
        k => format!("p{k}.png"),
    };
    Path::new("frames").join(shot_id).join(name)
}

/// Manifest for a config without rendering anything; paths are relative to `out_dir`.
pub fn synthetic_manifest(config: &SynthVideoConfig, out_dir: &Path) -> Result<FrameManifest> {
    config.validate()?;
    let videos: Vec<String> = (0..config.num_shots)
        .map(|i| shot_ids(config, i).0)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let splits = split_by_video(&videos, config.split_fractions, config.seed)?;
    let span = config.half_span();
    let entries = (0..config.num_shots)
        .map(|i| {
            let (video_id, shot_id) = shot_ids(config, i);
            let neighbor_paths: BTreeMap<Offset, PathBuf> = (-span..=span)
                .filter(|&k| k != 0)
                .map(|k| (Offset::new(k).expect("span <= 5"), frame_file(&shot_id, k)))
                .collect();
            ManifestEntry {
                split: splits[&video_id],
                label: shot_label(config, i),
                anchor_path: frame_file(&shot_id, 0),
                neighbor_paths,
                video_id,
                shot_id,
            }
        })
        .collect();
    FrameManifest::new(entries, config.num_classes, out_dir)
}

/// Renders the dataset into `out_dir` (frames as PNG plus `manifest.csv`).
pub fn generate_synthetic(config: &SynthVideoConfig, out_dir: impl AsRef<Path>) -> Result<FrameManifest> {
    let out_dir = out_dir.as_ref();
    let manifest = synthetic_manifest(config, out_dir)?;
    let span = config.half_span();
    (0..config.num_shots).into_par_iter().try_for_each(|i| -> Result<()> {
        let (_, shot_id) = shot_ids(config, i);
        std::fs::create_dir_all(out_dir.join("frames").join(&shot_id))?;
        for (frame, k) in render_shot(config, i).iter().zip(-span..=span) {
            frame.save_png(out_dir.join(frame_file(&shot_id, k)))?;
        }
        Ok(())
    })?;
    manifest.save(out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
