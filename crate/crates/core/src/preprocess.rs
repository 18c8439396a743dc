//! Evaluation geometry and model featurization.
//!
//! Frames are first brought to a canonical size (short side resized to
//! [`EvalGeometry::short_side`], bilinear), then the evaluation crop is the centered
//! [`EvalGeometry::crop`] square. Translation distortions move that crop inside the canonical
//! frame, so the margin `(short_side - crop) / 2` bounds the largest usable offset.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{crop, resize, Image, ResizeMode};

/// Side of the square box-downsampled image fed to the reference classifier.
pub const FEATURE_SIDE: usize = 16;
/// Length of a feature vector: `FEATURE_SIDE² · 3`.
pub const FEATURE_LEN: usize = FEATURE_SIDE * FEATURE_SIDE * 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalGeometry {
    pub short_side: usize,
    pub crop: usize,
}

impl Default for EvalGeometry {
    fn default() -> Self {
        Self { short_side: 256, crop: 224 }
    }
}

impl EvalGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.crop == 0 || self.crop > self.short_side {
            return Err(Error::Config(format!(
                "crop {} must be in 1..={}",
                self.crop, self.short_side
            )));
        }
        Ok(())
    }

    /// Margin between the centered crop and the frame's short-side edge.
    pub fn margin(&self) -> usize {
        (self.short_side - self.crop) / 2
    }
}

/// Resizes so the short side equals `geom.short_side`, keeping the aspect ratio
/// (long side rounded half-up).
pub fn canonical_frame(img: &Image, geom: &EvalGeometry) -> Result<Image> {
    let (w, h) = img.dims();
    let s = geom.short_side;
    let (nw, nh) = if w <= h {
        (s, (2 * h * s + w) / (2 * w))
    } else {
        ((2 * w * s + h) / (2 * h), s)
    };
    resize(img, nw, nh, ResizeMode::Bilinear)
}

/// Top-left corner of the centered evaluation crop within a canonical frame.
pub fn crop_origin(frame: &Image, crop_side: usize) -> Result<(usize, usize)> {
    let (w, h) = frame.dims();
    if w < crop_side || h < crop_side {
        return Err(Error::OutOfBounds(format!(
            "{crop_side}px crop does not fit a {w}x{h} frame"
        )));
    }
    Ok(((w - crop_side) / 2, (h - crop_side) / 2))
}

pub fn center_crop(frame: &Image, crop_side: usize) -> Result<Image> {
    let (x0, y0) = crop_origin(frame, crop_side)?;
    crop(frame, x0, y0, crop_side, crop_side)
}

/// Canonical evaluation image of a raw frame: canonical resize, then centered crop.
pub fn eval_image(raw: &Image, geom: &EvalGeometry) -> Result<Image> {
    center_crop(&canonical_frame(raw, geom)?, geom.crop)
}

/// Training-time augmentation: uniformly placed crop of the canonical frame.
pub fn random_crop(frame: &Image, crop_side: usize, rng: &mut impl Rng) -> Result<Image> {
    let (w, h) = frame.dims();
    if w < crop_side || h < crop_side {
        return Err(Error::OutOfBounds(format!("{crop_side}px crop in {w}x{h}")));
    }
    let x0 = rng.random_range(0..=w - crop_side);
    let y0 = rng.random_range(0..=h - crop_side);
    crop(frame, x0, y0, crop_side, crop_side)
}

/// Box-downsamples to 16×16 and flattens to 768 unit-interval values (row-major, RGB).
pub fn featurize(img: &Image) -> Vec<f64> {
    let small = resize(img, FEATURE_SIDE, FEATURE_SIDE, ResizeMode::Box)
        .expect("feature side is nonzero");
    small.to_float()
}
