//! Synthetic distortion families at five severities, plus crop-shift translation.
//!
//! Severity 0 is the identity for every family. Photometric families operate in the
//! unit-interval float view and re-quantize with round-half-up. Stochastic families draw from a
//! keyed ChaCha8 stream (see [`crate::rng`]); use [`DistortionSpec::keyed`] to derive the
//! per-image seed from a master seed and frame id.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{crop, hsv_to_rgb, resize, rgb_to_hsv, Image, PixelHsv, ResizeMode};
use crate::preprocess::{center_crop, crop_origin};
use crate::rng::{self, Normal};
use crate::{image, jpeg};

pub const MAX_SEVERITY: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    GaussianNoise,
    ShotNoise,
    GaussianBlur,
    Pixelate,
    JpegQuality,
    Hue,
    Saturation,
    Brightness,
    Contrast,
    Translation,
}

impl Family {
    pub const ALL: [Family; 10] = [
        Family::GaussianNoise,
        Family::ShotNoise,
        Family::GaussianBlur,
        Family::Pixelate,
        Family::JpegQuality,
        Family::Hue,
        Family::Saturation,
        Family::Brightness,
        Family::Contrast,
        Family::Translation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::GaussianNoise => "gaussian_noise",
            Family::ShotNoise => "shot_noise",
            Family::GaussianBlur => "gaussian_blur",
            Family::Pixelate => "pixelate",
            Family::JpegQuality => "jpeg_quality",
            Family::Hue => "hue",
            Family::Saturation => "saturation",
            Family::Brightness => "brightness",
            Family::Contrast => "contrast",
            Family::Translation => "translation",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Family::GaussianNoise | Family::ShotNoise)
    }

    /// Whether a larger table parameter means a stronger distortion.
    fn increasing(self) -> bool {
        !matches!(
            self,
            Family::ShotNoise | Family::Pixelate | Family::JpegQuality | Family::Contrast
        )
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown distortion family `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[default]
    #[serde(rename = "+x")]
    PosX,
    #[serde(rename = "-x")]
    NegX,
    #[serde(rename = "+y")]
    PosY,
    #[serde(rename = "-y")]
    NegY,
}

impl Direction {
    fn unit(self) -> (isize, isize) {
        match self {
            Direction::PosX => (1, 0),
            Direction::NegX => (-1, 0),
            Direction::PosY => (0, 1),
            Direction::NegY => (0, -1),
        }
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+x" => Ok(Direction::PosX),
            "-x" => Ok(Direction::NegX),
            "+y" => Ok(Direction::PosY),
            "-y" => Ok(Direction::NegY),
            _ => Err(Error::Parse(format!("unknown translation direction `{s}`"))),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::PosX => "+x",
            Direction::NegX => "-x",
            Direction::PosY => "+y",
            Direction::NegY => "-y",
        })
    }
}

/// Per-family parameters for severities 1..=5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeverityTable {
    /// Noise standard deviation, unit-interval scale.
    pub gaussian_noise: [f64; 5],
    /// Photon count scale; lower is noisier.
    pub shot_noise: [f64; 5],
    /// Blur sigma in pixels.
    pub gaussian_blur: [f64; 5],
    /// Downscale factor; lower is coarser.
    pub pixelate: [f64; 5],
    /// Encoder quality, 1..=100.
    pub jpeg_quality: [f64; 5],
    /// Hue rotation in degrees.
    pub hue: [f64; 5],
    /// Saturation multiplier.
    pub saturation: [f64; 5],
    /// Additive change of HSV value.
    pub brightness: [f64; 5],
    /// Contrast multiplier about the mean luminance; lower is stronger.
    pub contrast: [f64; 5],
    /// Crop shift in pixels.
    pub translation: [f64; 5],
}

impl Default for SeverityTable {
    fn default() -> Self {
        Self {
            gaussian_noise: [0.04, 0.08, 0.12, 0.18, 0.26],
            shot_noise: [60.0, 25.0, 12.0, 5.0, 3.0],
            gaussian_blur: [0.5, 1.0, 2.0, 3.0, 4.0],
            pixelate: [0.8, 0.6, 0.4, 0.25, 0.15],
            jpeg_quality: [80.0, 60.0, 40.0, 25.0, 15.0],
            hue: [9.0, 18.0, 36.0, 54.0, 72.0],
            saturation: [1.5, 2.0, 2.5, 3.0, 4.0],
            brightness: [0.1, 0.2, 0.3, 0.4, 0.5],
            contrast: [0.75, 0.6, 0.45, 0.3, 0.2],
            translation: [1.0, 2.0, 4.0, 8.0, 16.0],
        }
    }
}

impl SeverityTable {
    pub fn params(&self, family: Family) -> &[f64; 5] {
        match family {
            Family::GaussianNoise => &self.gaussian_noise,
            Family::ShotNoise => &self.shot_noise,
            Family::GaussianBlur => &self.gaussian_blur,
            Family::Pixelate => &self.pixelate,
            Family::JpegQuality => &self.jpeg_quality,
            Family::Hue => &self.hue,
            Family::Saturation => &self.saturation,
            Family::Brightness => &self.brightness,
            Family::Contrast => &self.contrast,
            Family::Translation => &self.translation,
        }
    }

    /// Parameter for `severity` in 1..=5.
    pub fn param(&self, family: Family, severity: u8) -> Result<f64> {
        if !(1..=MAX_SEVERITY).contains(&severity) {
            return Err(Error::InvalidSeverity(severity));
        }
        Ok(self.params(family)[usize::from(severity) - 1])
    }

    /// Checks strict monotonicity in strength and per-family parameter ranges.
    pub fn validate(&self) -> Result<()> {
        for family in Family::ALL {
            let p = self.params(family);
            let monotone = p.windows(2).all(|w| {
                if family.increasing() {
                    w[1] > w[0]
                } else {
                    w[1] < w[0]
                }
            });
            if !monotone {
                return Err(Error::Config(format!(
                    "severity table for {family} must be strictly {} in strength: {p:?}",
                    if family.increasing() { "increasing" } else { "decreasing" }
                )));
            }
            let in_range = p.iter().all(|&v| match family {
                Family::Pixelate => v > 0.0 && v <= 1.0,
                Family::JpegQuality => (1.0..=100.0).contains(&v) && v.fract() == 0.0,
                Family::Translation => v >= 0.0 && v.fract() == 0.0,
                Family::Contrast | Family::ShotNoise | Family::Saturation => v > 0.0,
                _ => v >= 0.0 && v.is_finite(),
            });
            if !in_range {
                return Err(Error::Config(format!("severity table for {family} out of range: {p:?}")));
            }
        }
        Ok(())
    }

    /// Largest translation offset, which the evaluation margin must accommodate.
    pub fn max_translation(&self) -> usize {
        self.translation.iter().fold(0.0f64, |a, &b| a.max(b)) as usize
    }
}

/// A transformation `d`: family, severity 0..=5, and the stream seed for stochastic families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub family: Family,
    pub severity: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub direction: Direction,
}

impl DistortionSpec {
    pub fn new(family: Family, severity: u8) -> Self {
        Self { family, severity, seed: None, direction: Direction::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    /// Spec whose stream seed is keyed on `(master_seed, frame_id, family, severity)`.
    /// Deterministic families carry no seed.
    pub fn keyed(family: Family, severity: u8, master_seed: u64, frame_id: &str) -> Self {
        let spec = Self::new(family, severity);
        if family.is_stochastic() {
            spec.with_seed(stream_seed(master_seed, frame_id, family, severity))
        } else {
            spec
        }
    }

    pub fn is_identity(&self) -> bool {
        self.severity == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.severity > MAX_SEVERITY {
            return Err(Error::InvalidSeverity(self.severity));
        }
        if self.family.is_stochastic() && self.severity > 0 && self.seed.is_none() {
            return Err(Error::MissingSeed(self.family.name()));
        }
        Ok(())
    }
}

/// Per-image stream seed for a stochastic distortion.
pub fn stream_seed(master_seed: u64, frame_id: &str, family: Family, severity: u8) -> u64 {
    rng::derive_seed(&[
        b"distortion",
        &master_seed.to_le_bytes(),
        frame_id.as_bytes(),
        family.name().as_bytes(),
        &[severity],
    ])
}

/// Applies `spec` to a canonical frame, returning an image of the evaluation-crop size.
///
/// Translation shifts the crop window inside `frame`; every other family distorts the centered
/// crop. Severity 0 returns the centered crop unchanged.
pub fn apply(spec: &DistortionSpec, frame: &Image, table: &SeverityTable, crop_side: usize) -> Result<Image> {
    spec.validate()?;
    if spec.family == Family::Translation && !spec.is_identity() {
        let offset = table.param(Family::Translation, spec.severity)? as usize;
        return translate(frame, offset, spec.direction, crop_side);
    }
    let base = center_crop(frame, crop_side)?;
    apply_in_place(spec, &base, table)
}

/// Applies a non-translation `spec` to `img` directly, preserving its dimensions.
/// Translation is applied to `img` as a frame with a centered window two margins smaller than
/// the largest table offset would need; callers wanting a specific crop use [`translate`].
pub fn apply_in_place(spec: &DistortionSpec, img: &Image, table: &SeverityTable) -> Result<Image> {
    spec.validate()?;
    if spec.is_identity() {
        return Ok(img.clone());
    }
    let p = table.param(spec.family, spec.severity)?;
    let seed = || spec.seed.ok_or(Error::MissingSeed(spec.family.name()));
    match spec.family {
        Family::GaussianNoise => Ok(gaussian_noise(img, p, seed()?)),
        Family::ShotNoise => Ok(shot_noise(img, p, seed()?)),
        Family::GaussianBlur => Ok(gaussian_blur(img, p)),
        Family::Pixelate => pixelate(img, p),
        Family::JpegQuality => jpeg_quality(img, p as u8),
        Family::Hue => Ok(hue_shift(img, p)),
        Family::Saturation => Ok(scale_saturation(img, p)),
        Family::Brightness => Ok(add_brightness(img, p)),
        Family::Contrast => Ok(scale_contrast(img, p)),
        Family::Translation => {
            let margin = table.max_translation();
            let side = img.width().min(img.height()).saturating_sub(2 * margin);
            if side == 0 {
                return Err(Error::OutOfBounds(format!(
                    "{}x{} frame too small for a {margin}px translation margin",
                    img.width(),
                    img.height()
                )));
            }
            translate(img, p as usize, spec.direction, side)
        }
    }
}

/// Per-channel additive Gaussian noise with standard deviation `sigma` (unit-interval scale).
pub fn gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Image {
    let mut rng = rng::stream(seed);
    let mut normal = Normal::new();
    img.map_float(|p| p.map(|x| x + sigma * normal.sample(&mut rng)))
}

/// Poisson photon noise: each channel becomes `Poisson(x·λ) / λ`.
pub fn shot_noise(img: &Image, lambda: f64, seed: u64) -> Image {
    let mut rng = rng::stream(seed);
    img.map_float(|p| p.map(|x| rng::poisson(&mut rng, x * lambda) as f64 / lambda))
}

/// Normalized Gaussian kernel with radius `⌈3σ⌉`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            libm::exp(-d * d / (2.0 * sigma * sigma))
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = img.dims();
    let src = img.to_float();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (i, &kv) in k.iter().enumerate() {
                let sx = clamp(x as isize + i as isize - r, w);
                let j = (y * w + sx) * 3;
                for c in 0..3 {
                    acc[c] += kv * src[j + c];
                }
            }
            tmp[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&acc);
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (i, &kv) in k.iter().enumerate() {
                let sy = clamp(y as isize + i as isize - r, h);
                let j = (sy * w + x) * 3;
                for c in 0..3 {
                    acc[c] += kv * tmp[j + c];
                }
            }
            out[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&acc);
        }
    }
    Image::from_float(w, h, &out).expect("same dimensions")
}

/// Box-downscale by `factor` (dimensions rounded up, at least 1) and nearest-upscale back.
pub fn pixelate(img: &Image, factor: f64) -> Result<Image> {
    let (w, h) = img.dims();
    let sw = ((w as f64 * factor).ceil() as usize).max(1);
    let sh = ((h as f64 * factor).ceil() as usize).max(1);
    let small = resize(img, sw, sh, ResizeMode::Box)?;
    resize(&small, w, h, ResizeMode::Nearest)
}

/// JPEG encode/decode round trip at `quality`.
pub fn jpeg_quality(img: &Image, quality: u8) -> Result<Image> {
    jpeg::round_trip(img, quality)
}

pub fn hue_shift(img: &Image, degrees: f64) -> Image {
    img.map_float(|p| {
        let hsv = rgb_to_hsv(p);
        hsv_to_rgb(PixelHsv::new(hsv.h + degrees, hsv.s, hsv.v))
    })
}

pub fn scale_saturation(img: &Image, factor: f64) -> Image {
    img.map_float(|p| {
        let hsv = rgb_to_hsv(p);
        hsv_to_rgb(PixelHsv::new(hsv.h, hsv.s * factor, hsv.v))
    })
}

pub fn add_brightness(img: &Image, delta: f64) -> Image {
    img.map_float(|p| {
        let hsv = rgb_to_hsv(p);
        hsv_to_rgb(PixelHsv::new(hsv.h, hsv.s, hsv.v + delta))
    })
}

/// Mean of `0.299 R + 0.587 G + 0.114 B` over the image, unit-interval scale.
pub fn mean_luminance(img: &Image) -> f64 {
    let n = (img.width() * img.height()) as f64;
    img.pixels()
        .chunks_exact(3)
        .map(|p| (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])) / 255.0)
        .sum::<f64>()
        / n
}

pub fn scale_contrast(img: &Image, factor: f64) -> Image {
    let mu = mean_luminance(img);
    img.map_float(|p| p.map(|x| mu + factor * (x - mu)))
}

/// Shifts the centered `crop_side` window of `frame` by `offset` pixels along `direction`.
/// The result is always an exact sub-window of `frame`.
pub fn translate(frame: &Image, offset: usize, direction: Direction, crop_side: usize) -> Result<Image> {
    let (cx, cy) = crop_origin(frame, crop_side)?;
    let (ux, uy) = direction.unit();
    let x0 = cx as isize + ux * offset as isize;
    let y0 = cy as isize + uy * offset as isize;
    if x0 < 0 || y0 < 0 {
        return Err(Error::OutOfBounds(format!(
            "{offset}px {direction} shift leaves the {}x{} frame",
            frame.width(),
            frame.height()
        )));
    }
    crop(frame, x0 as usize, y0 as usize, crop_side, crop_side)
}

/// Mean per-image L2 distance between clean and distorted versions, unit-interval scale.
pub fn mean_l2(pairs: &[(Image, Image)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("image pairs"));
    }
    let mut total = 0.0;
    for (a, b) in pairs {
        total += image::l2_distance(a, b)?;
    }
    Ok(total / pairs.len() as f64)
}
