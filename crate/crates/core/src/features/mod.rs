//! Pair-based liveness features: the flash/no-flash ratio patch, the
//! first-order stereo disparity patch, and the LBP texture baseline.

mod da3d;
mod extract;
mod i3d;
mod io;
mod lbp;
mod register;

pub use da3d::{compute_da3d, da3d_field, da3d_field_at, Da3dField, DA3D_CLIP, DA3D_GRAD_EPS};
pub use extract::{
    extract_capture, extract_chan, extract_da3d, extract_i3d, extract_lbp, extract_manifest, extract_sample,
    extract_synthesized, ExtractOptions,
    FeatureKind, Skipped,
};
pub use i3d::{compute_i3d, i3d_field, I3D_EPS};
pub use io::{read_features_bin, read_features_jsonl, write_features_bin, write_features_jsonl};
pub use lbp::{chan_features, lbp_descriptor, lbp_histogram, lbp_uniform_bin, LBP_BINS};
pub use register::{
    register_flash_pair, register_flash_pair_to, register_native, RegisteredPair,
    REGISTRATION_LIMIT_PX,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{LandmarkName, LandmarkSet};
use crate::image::{Image, PixelRect};
use crate::sim::{FlashSide, Label};

/// Working frame for registration and the disparity feature.
pub const WORK_WIDTH: usize = 480;
pub const WORK_HEIGHT: usize = 270;
/// Side of the resampled I3D / Da3D patch.
pub const PATCH_SIZE: usize = 28;
/// Fraction of the landmark face box trimmed from each side.
pub const FACE_INSET: f64 = 0.12;
/// Nose box side relative to the outer inter-ocular distance.
pub const NOSE_SCALE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Face,
    Nose,
}

impl RegionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionKind::Face => "face",
            RegionKind::Nose => "nose",
        }
    }
}

impl FromStr for RegionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "face" => Ok(RegionKind::Face),
            "nose" => Ok(RegionKind::Nose),
            _ => Err(Error::Argument(format!("unknown region '{s}'"))),
        }
    }
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A landmark-derived rectangle in the coordinates of one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRegion {
    pub kind: RegionKind,
    pub rect: PixelRect,
}

impl PatchRegion {
    /// Face: landmark box inset by [`FACE_INSET`] per side. Nose: square of
    /// side [`NOSE_SCALE`] x inter-ocular distance centered on the nose tip.
    /// Clipped to the image; an empty result is a region error.
    pub fn from_landmarks(kind: RegionKind, lm: &LandmarkSet, width: usize, height: usize) -> Result<Self> {
        let (x0, y0, x1, y1) = match kind {
            RegionKind::Face => {
                let (tu, tv) = lm.get(LandmarkName::FaceBoxTl);
                let (bu, bv) = lm.get(LandmarkName::FaceBoxBr);
                let (iu, iv) = ((bu - tu) * FACE_INSET, (bv - tv) * FACE_INSET);
                (tu + iu, tv + iv, bu - iu, bv - iv)
            }
            RegionKind::Nose => {
                let (nu, nv) = lm.get(LandmarkName::NoseTip);
                let half = 0.5 * NOSE_SCALE * lm.inter_ocular();
                (nu - half, nv - half, nu + half, nv + half)
            }
        };
        let clip = |x: f64, hi: usize| x.round().clamp(0.0, hi as f64) as usize;
        let rect = PixelRect {
            x0: clip(x0, width),
            y0: clip(y0, height),
            x1: clip(x1, width),
            y1: clip(y1, height),
        };
        if rect.area() == 0 {
            return Err(Error::Region(format!(
                "{} region is empty after clipping to {width}x{height}",
                kind.as_str()
            )));
        }
        Ok(PatchRegion { kind, rect })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureLayout {
    I3dPatch { w: usize, h: usize },
    Da3dPatch { w: usize, h: usize },
    Lbp531,
    Chan532,
    /// Any other fixed-length vector.
    Vector { len: usize },
}

impl FeatureLayout {
    pub fn len(self) -> usize {
        match self {
            FeatureLayout::I3dPatch { w, h } | FeatureLayout::Da3dPatch { w, h } => w * h,
            FeatureLayout::Lbp531 => 9 * LBP_BINS,
            FeatureLayout::Chan532 => 9 * LBP_BINS + 1,
            FeatureLayout::Vector { len } => len,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    /// Patch dimensions for image-like layouts.
    pub fn patch_dims(self) -> Option<(usize, usize)> {
        match self {
            FeatureLayout::I3dPatch { w, h } | FeatureLayout::Da3dPatch { w, h } => Some((w, h)),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureLayout::I3dPatch { .. } => "i3d_patch",
            FeatureLayout::Da3dPatch { .. } => "da3d_patch",
            FeatureLayout::Lbp531 => "lbp531",
            FeatureLayout::Chan532 => "chan532",
            FeatureLayout::Vector { .. } => "vector",
        }
    }
}

/// A feature vector with the metadata needed to train and evaluate on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flash_side: Option<FlashSide>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionKind>,
    pub layout: FeatureLayout,
    pub values: Vec<f64>,
}

impl FeatureVector {
    /// Checks the length against the layout and that every value is finite.
    pub fn new(layout: FeatureLayout, values: Vec<f64>) -> Result<Self> {
        let fv = FeatureVector {
            sample_id: String::new(),
            subject_id: None,
            label: None,
            flash_side: None,
            region: None,
            layout,
            values,
        };
        fv.validate()?;
        Ok(fv)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.layout.len() {
            return Err(Error::Shape(format!(
                "{} layout expects {} values, got {}",
                self.layout.name(),
                self.layout.len(),
                self.values.len()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("non-finite feature value at index {i}")));
        }
        Ok(())
    }

    pub fn with_sample(mut self, sample_id: impl Into<String>) -> Self {
        self.sample_id = sample_id.into();
        self
    }

    /// Patch layouts as an image, for inspection.
    pub fn as_image(&self) -> Option<Image> {
        let (w, h) = self.layout.patch_dims()?;
        Image::new(w, h, self.values.clone()).ok()
    }

    /// `+1` for live samples, `-1` for attacks.
    pub fn liveness_label(&self) -> Option<i8> {
        self.label.map(|l| if l.is_live() { 1 } else { -1 })
    }

    /// `+1` for a right flash, `-1` for a left one.
    pub fn side_label(&self) -> Option<i8> {
        self.flash_side.map(|s| s.sign() as i8)
    }

    /// Population standard deviation of the values.
    pub fn std_dev(&self) -> f64 {
        let n = self.values.len() as f64;
        let mean = self.values.iter().sum::<f64>() / n;
        (self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
}

#[cfg(test)]
mod tests;
