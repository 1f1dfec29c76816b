//! Single-channel floating-point raster and the resampling / differential
//! primitives shared by every other module.
//!
//! Pixel centers sit at integer coordinates, `(0, 0)` is the top-left pixel
//! and `u` is the column index. Intensities are linear radiometric values,
//! nominally in `[0, 1]`.

mod pgm;
mod resample;

pub use pgm::{read_pgm, write_pgm16, write_pgm8, write_pgm_scaled};
pub use resample::{gaussian_blur, resize_area, resize_bilinear, translate};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major single-channel image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    /// Wraps a pixel buffer, checking its length and that every value is finite.
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "pixel buffer has {} values, expected {}x{}={}",
                pixels.len(),
                width,
                height,
                width * height
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !p.is_finite()) {
            return Err(Error::Dimension(format!(
                "non-finite pixel at index {i} ({})",
                pixels[i]
            )));
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Image {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    /// Builds an image by evaluating `f(u, v)` at every pixel center.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                pixels.push(f(u, v));
            }
        }
        Image {
            width,
            height,
            pixels,
        }
    }

    /// Internal constructor for buffers whose invariants the caller already upholds.
    pub(crate) fn from_raw(width: usize, height: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        debug_assert!(pixels.iter().all(|p| p.is_finite()));
        Image {
            width,
            height,
            pixels,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.pixels[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: f64) {
        debug_assert!(value.is_finite());
        self.pixels[v * self.width + u] = value;
    }

    pub fn row(&self, v: usize) -> &[f64] {
        &self.pixels[v * self.width..(v + 1) * self.width]
    }

    /// Applies `f` to every pixel. `f` must return finite values.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        let pixels: Vec<f64> = self.pixels.iter().map(|&p| f(p)).collect();
        debug_assert!(pixels.iter().all(|p| p.is_finite()));
        Image::from_raw(self.width, self.height, pixels)
    }

    /// Pointwise combination of two images of equal size.
    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        if self.dims() != other.dims() {
            return Err(Error::Dimension(format!(
                "image sizes differ: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        let pixels = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Image::new(self.width, self.height, pixels)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.pixels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                (lo.min(p), hi.max(p))
            })
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Bilinear sample at a sub-pixel position; `None` outside the pixel-center hull.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        const SLACK: f64 = 1e-9;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if !(x >= -SLACK && x <= max_x + SLACK && y >= -SLACK && y <= max_y + SLACK) {
            return None;
        }
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let p00 = self.get(x0, y0);
        let p10 = self.get(x1, y0);
        let p01 = self.get(x0, y1);
        let p11 = self.get(x1, y1);
        // Written so that integer positions reproduce the stored value exactly.
        let top = p00 + fx * (p10 - p00);
        let bottom = p01 + fx * (p11 - p01);
        Some(top + fy * (bottom - top))
    }

    /// Copies the pixels inside `rect`.
    pub fn crop(&self, rect: PixelRect) -> Result<Image> {
        rect.check_inside(self.width, self.height)?;
        let mut pixels = Vec::with_capacity(rect.area());
        for v in rect.y0..rect.y1 {
            pixels.extend_from_slice(&self.row(v)[rect.x0..rect.x1]);
        }
        Ok(Image::from_raw(rect.width(), rect.height(), pixels))
    }

    /// Mirror image about the vertical axis.
    pub fn flip_u(&self) -> Image {
        Image::from_fn(self.width, self.height, |u, v| self.get(self.width - 1 - u, v))
    }

    /// Clamps to `[0, 1]` and rounds to the nearest 8-bit level.
    pub fn quantize_8bit(&self) -> Image {
        self.map(|p| (p.clamp(0.0, 1.0) * 255.0).round() / 255.0)
    }
}

/// Per-pixel validity flags accompanying a resampled image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    valid: Vec<bool>,
}

impl Mask {
    pub fn all_valid(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            valid: vec![true; width * height],
        }
    }

    pub(crate) fn from_raw(width: usize, height: usize, valid: Vec<bool>) -> Self {
        debug_assert_eq!(valid.len(), width * height);
        Mask {
            width,
            height,
            valid,
        }
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.valid[v * self.width + u]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn count_valid(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.valid
    }

    pub fn and(&self, other: &Mask) -> Mask {
        assert_eq!(self.dims(), other.dims());
        let valid = self
            .valid
            .iter()
            .zip(&other.valid)
            .map(|(&a, &b)| a && b)
            .collect();
        Mask::from_raw(self.width, self.height, valid)
    }
}

/// Half-open integer pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn width(&self) -> usize {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> usize {
        self.y1.saturating_sub(self.y0)
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        u >= self.x0 && u < self.x1 && v >= self.y0 && v < self.y1
    }

    pub(crate) fn check_inside(&self, width: usize, height: usize) -> Result<()> {
        if self.area() == 0 {
            return Err(Error::Region(format!("empty rectangle {self:?}")));
        }
        if self.x1 > width || self.y1 > height {
            return Err(Error::Region(format!(
                "rectangle {self:?} exceeds image {width}x{height}"
            )));
        }
        Ok(())
    }
}

/// Horizontal derivative by central differences, one-sided at the left and
/// right borders.
pub fn gradient_u(img: &Image) -> Result<Image> {
    let (w, h) = img.dims();
    if w < 3 {
        return Err(Error::Dimension(format!(
            "gradient_u needs width >= 3, got {w}"
        )));
    }
    let mut out = Vec::with_capacity(w * h);
    for v in 0..h {
        let row = img.row(v);
        out.push(row[1] - row[0]);
        for u in 1..w - 1 {
            out.push((row[u + 1] - row[u - 1]) * 0.5);
        }
        out.push(row[w - 1] - row[w - 2]);
    }
    Ok(Image::from_raw(w, h, out))
}
