//! RGB raster type, color-space conversion, cropping, resampling and pixel distances.
//!
//! Storage is always 8-bit RGB, row-major, three interleaved channels. Math that needs a
//! continuous range goes through the unit-interval float view ([`Image::to_float`]) and comes
//! back through [`quantize`], which rounds half-up and clamps.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Image")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

/// Maps a unit-interval value to 8 bits with round-half-up, clamping out-of-range input.
#[inline]
pub fn quantize(x: f64) -> u8 {
    if x.is_nan() {
        return 0;
    }
    let v = (x * 255.0 + 0.5).floor();
    v.clamp(0.0, 255.0) as u8
}

/// Same as [`quantize`] for values already on the 0..=255 scale.
#[inline]
pub(crate) fn quantize_255(x: f64) -> u8 {
    if x.is_nan() {
        return 0;
    }
    (x + 0.5).floor().clamp(0.0, 255.0) as u8
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidSize(format!("{width}x{height}")));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height}x3 needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    /// Constant-color image.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, pixels)
    }

    /// Builds an image from a per-pixel function of `(x, y)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    /// Inverse of [`Image::to_float`]; every value is re-quantized with [`quantize`].
    pub fn from_float(width: usize, height: usize, data: &[f64]) -> Result<Self> {
        Self::new(width, height, data.iter().map(|&v| quantize(v)).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Unit-interval view of the channel values, same layout as [`Image::pixels`].
    pub fn to_float(&self) -> Vec<f64> {
        self.pixels.iter().map(|&v| f64::from(v) / 255.0).collect()
    }

    /// Applies `f` to every pixel in the float view and re-quantizes.
    pub fn map_float(&self, mut f: impl FnMut([f64; 3]) -> [f64; 3]) -> Image {
        let mut out = Vec::with_capacity(self.pixels.len());
        for p in self.pixels.chunks_exact(3) {
            let rgb = [
                f64::from(p[0]) / 255.0,
                f64::from(p[1]) / 255.0,
                f64::from(p[2]) / 255.0,
            ];
            out.extend(f(rgb).iter().map(|&v| quantize(v)));
        }
        Image { width: self.width, height: self.height, pixels: out }
    }

    /// Reads a PNG or JPEG file, converting to 8-bit RGB.
    pub fn load(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let img = ::image::open(path)
            .map_err(|e| Error::CodecFailure(format!("{}: {e}", path.display())))?
            .into_rgb8();
        let (w, h) = img.dimensions();
        Image::new(w as usize, h as usize, img.into_raw())
    }

    /// Decodes an in-memory PNG or JPEG.
    pub fn decode(bytes: &[u8]) -> Result<Image> {
        let img = ::image::load_from_memory(bytes)
            .map_err(|e| Error::CodecFailure(e.to_string()))?
            .into_rgb8();
        let (w, h) = img.dimensions();
        Image::new(w as usize, h as usize, img.into_raw())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        use ::image::ImageEncoder;
        let mut buf = Vec::new();
        ::image::codecs::png::PngEncoder::new(&mut buf)
            .write_image(
                &self.pixels,
                self.width as u32,
                self.height as u32,
                ::image::ExtendedColorType::Rgb8,
            )
            .map_err(|e| Error::CodecFailure(e.to_string()))?;
        Ok(buf)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }
}

/// Hexcone HSV pixel. `h` in degrees `[0, 360)`, `s` and `v` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelHsv {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

impl PixelHsv {
    /// Normalizes hue modulo 360 and clamps saturation and value.
    pub fn new(h: f64, s: f64, v: f64) -> Self {
        let mut h = h.rem_euclid(360.0);
        if h >= 360.0 {
            h = 0.0;
        }
        Self { h, s: s.clamp(0.0, 1.0), v: v.clamp(0.0, 1.0) }
    }
}

pub fn rgb_to_hsv(rgb: [f64; 3]) -> PixelHsv {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta <= 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    PixelHsv::new(h, s, max)
}

pub fn hsv_to_rgb(p: PixelHsv) -> [f64; 3] {
    let c = p.v * p.s;
    let hp = p.h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let m = p.v - c;
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r + m, g + m, b + m]
}

/// Largest absolute per-channel difference, in 8-bit units.
pub fn linf_distance(a: &Image, b: &Image) -> Result<u8> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(a.pixels.iter().zip(&b.pixels).map(|(&p, &q)| p.abs_diff(q)).max().unwrap_or(0))
}

/// Euclidean distance between two images in the unit-interval float view.
pub fn l2_distance(a: &Image, b: &Image) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let ss: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&p, &q)| {
            let d = (f64::from(p) - f64::from(q)) / 255.0;
            d * d
        })
        .sum();
    Ok(ss.sqrt())
}

/// Extracts the `w`×`h` window whose top-left corner is `(x0, y0)`. Never pads.
pub fn crop(img: &Image, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
    if w == 0 || h == 0 {
        return Err(Error::InvalidSize(format!("crop {w}x{h}")));
    }
    if x0 + w > img.width || y0 + h > img.height {
        return Err(Error::OutOfBounds(format!(
            "window ({x0},{y0}) {w}x{h} exceeds {}x{} source",
            img.width, img.height
        )));
    }
    let mut pixels = Vec::with_capacity(w * h * 3);
    for y in y0..y0 + h {
        let start = (y * img.width + x0) * 3;
        pixels.extend_from_slice(&img.pixels[start..start + w * 3]);
    }
    Ok(Image { width: w, height: h, pixels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResizeMode {
    /// Edge-clamped linear interpolation with half-pixel-center alignment.
    Bilinear,
    /// Area average over each destination pixel's exact source footprint.
    Box,
    /// Source pixel whose center is nearest the destination pixel center.
    Nearest,
}

pub fn resize(img: &Image, w: usize, h: usize, mode: ResizeMode) -> Result<Image> {
    if w == 0 || h == 0 {
        return Err(Error::InvalidSize(format!("resize target {w}x{h}")));
    }
    if (w, h) == img.dims() && mode != ResizeMode::Bilinear {
        return Ok(img.clone());
    }
    let xs = axis_weights(img.width, w, mode);
    let ys = axis_weights(img.height, h, mode);

    // Horizontal pass into a float buffer on the 0..=255 scale, then vertical.
    let mut tmp = vec![0.0f64; img.height * w * 3];
    for y in 0..img.height {
        let row = &img.pixels[y * img.width * 3..(y + 1) * img.width * 3];
        let out = &mut tmp[y * w * 3..(y + 1) * w * 3];
        for (x, taps) in xs.iter().enumerate() {
            let mut acc = [0.0f64; 3];
            for &(sx, wt) in taps {
                for c in 0..3 {
                    acc[c] += wt * f64::from(row[sx * 3 + c]);
                }
            }
            out[x * 3..x * 3 + 3].copy_from_slice(&acc);
        }
    }
    let mut pixels = vec![0u8; w * h * 3];
    for (y, taps) in ys.iter().enumerate() {
        let out = &mut pixels[y * w * 3..(y + 1) * w * 3];
        for i in 0..w * 3 {
            let mut acc = 0.0;
            for &(sy, wt) in taps {
                acc += wt * tmp[sy * w * 3 + i];
            }
            out[i] = quantize_255(acc);
        }
    }
    Ok(Image { width: w, height: h, pixels })
}

/// Per destination index, the contributing source indices and their normalized weights.
fn axis_weights(src: usize, dst: usize, mode: ResizeMode) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| match mode {
            ResizeMode::Nearest => {
                let s = (((d as f64 + 0.5) * scale).floor() as usize).min(src - 1);
                vec![(s, 1.0)]
            }
            ResizeMode::Bilinear => {
                let pos = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let i0 = pos.floor() as usize;
                let i1 = (i0 + 1).min(src - 1);
                let t = pos - i0 as f64;
                if i0 == i1 || t == 0.0 {
                    vec![(i0, 1.0)]
                } else {
                    vec![(i0, 1.0 - t), (i1, t)]
                }
            }
            ResizeMode::Box => {
                let lo = d as f64 * scale;
                let hi = (d + 1) as f64 * scale;
                let first = lo.floor() as usize;
                let last = (hi.ceil() as usize).min(src);
                let mut taps: Vec<(usize, f64)> = (first..last)
                    .filter_map(|s| {
                        let overlap = (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0);
                        (overlap > 0.0).then_some((s, overlap))
                    })
                    .collect();
                let total: f64 = taps.iter().map(|t| t.1).sum();
                for t in &mut taps {
                    t.1 /= total;
                }
                taps
            }
        })
        .collect()
}
