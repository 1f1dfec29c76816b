use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::texture::SkinAlbedo;
use crate::error::{Error, Result};
use crate::image::Image;

pub type Vec3 = [f64; 3];

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// A distant light. `direction` points from the surface toward the light;
/// world axes are `x` right, `y` down, `z` toward the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightSpec {
    direction: Vec3,
    intensity: f64,
}

impl LightSpec {
    /// Normalizes `direction`; rejects zero vectors and negative intensity.
    pub fn new(direction: Vec3, intensity: f64) -> Result<Self> {
        let norm = dot(direction, direction).sqrt();
        if !(norm > 1e-12) || !norm.is_finite() {
            return Err(Error::Config("light direction must be non-zero".into()));
        }
        if !(intensity >= 0.0) || !intensity.is_finite() {
            return Err(Error::Config(format!(
                "light intensity must be >= 0, got {intensity}"
            )));
        }
        Ok(LightSpec {
            direction: [direction[0] / norm, direction[1] / norm, direction[2] / norm],
            intensity,
        })
    }

    /// Direction tilted `tilt` radians away from the camera axis (+z) toward
    /// azimuth `azimuth` (0 = image right, -pi/2 = image up).
    pub fn from_angles(tilt: f64, azimuth: f64, intensity: f64) -> Result<Self> {
        LightSpec::new(
            [
                tilt.sin() * azimuth.cos(),
                tilt.sin() * azimuth.sin(),
                tilt.cos(),
            ],
            intensity,
        )
    }

    pub fn direction(&self) -> Vec3 {
        self.direction
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    /// The combined light vector `intensity * direction`.
    pub fn vector(&self) -> Vec3 {
        let d = self.direction;
        let i = self.intensity;
        [d[0] * i, d[1] * i, d[2] * i]
    }

    pub fn with_intensity(&self, intensity: f64) -> Result<Self> {
        LightSpec::new(self.direction, intensity)
    }

    pub(crate) fn mirrored_x(&self) -> Self {
        let d = self.direction;
        LightSpec {
            direction: [-d[0], d[1], d[2]],
            intensity: self.intensity,
        }
    }
}

/// One anisotropic Gaussian height bump (world units, millimetres).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub cx: f64,
    pub cy: f64,
    pub sx: f64,
    pub sy: f64,
    pub amp: f64,
}

/// Face-like height field: a paraboloid cap over an ellipse plus Gaussian
/// bumps. The origin is the nose tip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceShape {
    pub half_width: f64,
    pub half_height: f64,
    pub center_y: f64,
    pub depth: f64,
    pub bumps: Vec<Bump>,
    /// World positions of the named landmarks, in `LandmarkName::ALL` order.
    pub anchors: [(f64, f64); 7],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneShape {
    pub z0: f64,
    pub slope_x: f64,
    pub slope_y: f64,
}

/// A sheet bent about a vertical axis at `axis_x`; convex sheets bulge
/// toward the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderShape {
    pub z0: f64,
    pub radius: f64,
    pub axis_x: f64,
    pub convex: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    Face,
    Plane,
    Cylinder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Face(FaceShape),
    Plane(PlaneShape),
    Cylinder(CylinderShape),
}

fn placeholder_map() -> Arc<Image> {
    Arc::new(Image::filled(1, 1, 1.0))
}

/// A raster albedo laid over the surface parameter grid, e.g. a printed photo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlbedoMap {
    #[serde(skip, default = "placeholder_map")]
    pub image: Arc<Image>,
    /// World position of pixel `(0, 0)` in source (pre-pose) coordinates.
    pub origin: (f64, f64),
    /// World units per map pixel.
    pub pitch: f64,
}

impl AlbedoMap {
    /// Map value at a source-space world point, clamped to the map border.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let img = &self.image;
        let px = ((x - self.origin.0) / self.pitch).clamp(0.0, (img.width() - 1) as f64);
        let py = ((y - self.origin.1) / self.pitch).clamp(0.0, (img.height() - 1) as f64);
        img.sample(px, py).unwrap_or(0.0)
    }

    /// World-space extent `(x0, y0, x1, y1)` in source coordinates.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        let (w, h) = self.image.dims();
        (
            self.origin.0,
            self.origin.1,
            self.origin.0 + (w - 1) as f64 * self.pitch,
            self.origin.1 + (h - 1) as f64 * self.pitch,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Albedo {
    Skin(SkinAlbedo),
    Map(AlbedoMap),
}

/// Placement of a sheet (print or screen): source point `p` lands at `scale * p + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SheetPose {
    pub scale: f64,
    pub offset: (f64, f64),
}

impl SheetPose {
    pub fn identity() -> Self {
        SheetPose {
            scale: 1.0,
            offset: (0.0, 0.0),
        }
    }

    #[inline]
    pub fn to_world(&self, p: (f64, f64)) -> (f64, f64) {
        (
            self.scale * p.0 + self.offset.0,
            self.scale * p.1 + self.offset.1,
        )
    }

    #[inline]
    pub fn to_source(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.offset.0) / self.scale,
            (y - self.offset.1) / self.scale,
        )
    }
}

/// A renderable surface `z = f(x, y)` with its albedo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceModel {
    pub geometry: Geometry,
    pub albedo: Albedo,
    /// Constant self-emitted radiance added to every render (screens).
    pub emissive: f64,
    /// Sheet placement for map-textured surfaces; identity for faces.
    pub pose: SheetPose,
    /// Source-space landmark anchors (copied from the face a sheet shows).
    pub anchors: [(f64, f64); 7],
    /// Evaluate the surface at `(-x, y)`.
    pub mirrored: bool,
}

impl SurfaceModel {
    pub fn kind(&self) -> SurfaceKind {
        match self.geometry {
            Geometry::Face(_) => SurfaceKind::Face,
            Geometry::Plane(_) => SurfaceKind::Plane,
            Geometry::Cylinder(_) => SurfaceKind::Cylinder,
        }
    }

    /// Checks the albedo range on the surface (sampled for procedural skin).
    pub fn validate(&self) -> Result<()> {
        if !(self.emissive >= 0.0) {
            return Err(Error::Config("emissive term must be >= 0".into()));
        }
        match &self.albedo {
            Albedo::Skin(s) => s.validate(),
            Albedo::Map(m) => {
                let (lo, hi) = m.image.min_max();
                if lo <= 0.0 || hi > 1.0 {
                    return Err(Error::Config(format!(
                        "albedo map values must lie in (0, 1], got [{lo}, {hi}]"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Parallel-axis stereo rig: the right camera sits `baseline` world units
/// along +x, and disparity is `focal_px * baseline / depth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoRig {
    pub baseline: f64,
    pub focal_px: f64,
}

/// Orthographic camera looking along -z. `distance` is the depth of the
/// `z = 0` plane, used only for stereo parallax.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    /// World units per pixel.
    pub pitch: f64,
    /// World point imaged at the frame center.
    pub center: (f64, f64),
    /// In-plane rotation in radians.
    pub roll: f64,
    /// Extra image-plane offset in pixels.
    pub shift: (f64, f64),
    pub distance: f64,
    pub stereo: Option<StereoRig>,
    /// Albedo samples per pixel side (footprint integration).
    pub supersample: usize,
}

impl Camera {
    pub fn new(width: usize, height: usize, pitch: f64) -> Self {
        Camera {
            width,
            height,
            pitch,
            center: (0.0, 0.0),
            roll: 0.0,
            shift: (0.0, 0.0),
            distance: 600.0,
            stereo: None,
            supersample: 1,
        }
    }

    #[inline]
    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.roll.sin_cos();
        let dx = (x - self.center.0) / self.pitch;
        let dy = (y - self.center.1) / self.pitch;
        let cu = (self.width - 1) as f64 * 0.5;
        let cv = (self.height - 1) as f64 * 0.5;
        (
            cu + self.shift.0 + c * dx - s * dy,
            cv + self.shift.1 + s * dx + c * dy,
        )
    }

    #[inline]
    pub fn pixel_to_world(&self, u: f64, v: f64) -> (f64, f64) {
        self.pixel_map()(u, v)
    }

    /// `pixel_to_world` with the rotation evaluated once, for per-pixel loops.
    pub fn pixel_map(&self) -> impl Fn(f64, f64) -> (f64, f64) + Sync + Copy {
        let (s, c) = self.roll.sin_cos();
        let cu = (self.width - 1) as f64 * 0.5;
        let cv = (self.height - 1) as f64 * 0.5;
        let (center, pitch, shift) = (self.center, self.pitch, self.shift);
        move |u, v| {
            let du = u - cu - shift.0;
            let dv = v - cv - shift.1;
            (
                center.0 + (c * du + s * dv) * pitch,
                center.1 + (-s * du + c * dv) * pitch,
            )
        }
    }

    /// Same framing at a different resolution (pitch and focal length scale).
    pub fn rescaled(&self, width: usize, height: usize) -> Camera {
        let k = width as f64 / self.width as f64;
        Camera {
            width,
            height,
            pitch: self.pitch / k,
            shift: (self.shift.0 * k, self.shift.1 * k),
            stereo: self.stereo.map(|r| StereoRig {
                baseline: r.baseline,
                focal_px: r.focal_px * k,
            }),
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 3 || self.height < 3 {
            return Err(Error::Config(format!(
                "camera frame too small: {}x{}",
                self.width, self.height
            )));
        }
        if !(self.pitch > 0.0) || self.supersample == 0 {
            return Err(Error::Config("camera pitch and supersample must be positive".into()));
        }
        if let Some(r) = self.stereo {
            if !(r.baseline >= 0.0) || !(r.focal_px > 0.0) {
                return Err(Error::Geometry(
                    "stereo baseline must be >= 0 and focal length > 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Flat wall behind the subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub albedo: f64,
    pub z: f64,
}

impl Default for Background {
    fn default() -> Self {
        Background {
            albedo: 0.45,
            z: -250.0,
        }
    }
}

/// Everything needed to render one capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub surface: SurfaceModel,
    pub background: Background,
    pub ambient_lights: Vec<LightSpec>,
    pub flash: Option<LightSpec>,
    pub camera: Camera,
    /// Camera of the second image when it differs from `camera`: the flash
    /// shot (hand jitter between shots) or the right view of a stereo rig
    /// (misalignment of an uncalibrated pair).
    pub second_camera: Option<Camera>,
    pub subject_id: String,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ambient_lights.is_empty() {
            return Err(Error::Config("scene needs at least one ambient light".into()));
        }
        self.camera.validate()?;
        if let Some(c) = &self.second_camera {
            c.validate()?;
        }
        self.surface.validate()
    }

    pub fn camera_for_flash(&self) -> Camera {
        self.second_camera.unwrap_or(self.camera)
    }

    /// Mirror image of the scene: surface evaluated at `-x`, light
    /// directions x-negated. Renders are the u-flipped originals when the
    /// camera has no roll, shift or off-center framing.
    pub fn mirrored(&self) -> SceneSpec {
        let mut out = self.clone();
        out.surface.mirrored = !out.surface.mirrored;
        out.ambient_lights = self.ambient_lights.iter().map(|l| l.mirrored_x()).collect();
        out.flash = self.flash.map(|l| l.mirrored_x());
        out
    }

    /// Same scene rendered into a different frame size.
    pub fn with_resolution(&self, width: usize, height: usize) -> SceneSpec {
        let mut out = self.clone();
        out.camera = self.camera.rescaled(width, height);
        out.second_camera = self.second_camera.map(|c| c.rescaled(width, height));
        out
    }
}
