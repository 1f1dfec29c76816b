use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::scene::{
    Albedo, AlbedoMap, Background, CylinderShape, Geometry, PlaneShape, SceneSpec, SheetPose,
    SurfaceModel,
};
use crate::error::{Error, Result};
use crate::geometry::LandmarkName;
use crate::image::{gaussian_blur, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpoofKind {
    Flat,
    Curved,
    Screen,
}

/// How a photo of the face is reproduced and held in front of the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrintParams {
    pub kind: SpoofKind,
    pub pose: SheetPose,
    /// Height of the sheet at its center (or cylinder apex).
    pub z0: f64,
    pub slope_x: f64,
    pub slope_y: f64,
    /// Bend radius for curved prints.
    pub radius: f64,
    pub convex: bool,
    /// Horizontal position of the bend axis, world units.
    pub axis_x: f64,
    /// Self-emitted radiance for screens.
    pub emissive: f64,
    /// Reproduction gain applied to the photographed radiance.
    pub gain: f64,
    /// Reproduction blur, world units.
    pub blur: f64,
    /// Sample spacing of the reproduction, world units.
    pub pitch: f64,
}

impl PrintParams {
    pub fn new(kind: SpoofKind) -> Self {
        PrintParams {
            kind,
            pose: SheetPose::identity(),
            z0: 30.0,
            slope_x: 0.0,
            slope_y: 0.0,
            radius: 200.0,
            convex: true,
            axis_x: 0.0,
            emissive: if kind == SpoofKind::Screen { 0.06 } else { 0.0 },
            gain: 1.0,
            blur: 0.6,
            pitch: 0.35,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.pose.scale > 0.0
            && self.gain > 0.0
            && self.blur >= 0.0
            && self.pitch > 0.0
            && self.emissive >= 0.0
            && (self.kind != SpoofKind::Curved || self.radius > 0.0);
        if !ok {
            return Err(Error::Config(format!("invalid print parameters {self:?}")));
        }
        Ok(())
    }
}

/// Photographs `surface` under a unit frontal light on a `pitch` grid
/// covering its landmark box plus a margin, then blurs by `blur` and scales
/// by `gain`. Values are clamped into the valid albedo range.
pub fn frontal_print(
    surface: &SurfaceModel,
    background: &Background,
    pitch: f64,
    blur: f64,
    gain: f64,
) -> Result<AlbedoMap> {
    let Geometry::Face(face) = &surface.geometry else {
        return Err(Error::Config("only faces can be photographed for a spoof".into()));
    };
    let margin = 12.0;
    let x0 = -face.half_width - margin;
    let x1 = face.half_width + margin;
    let y0 = face.center_y - face.half_height - margin;
    let y1 = face.center_y + face.half_height + margin;
    let w = ((x1 - x0) / pitch).ceil() as usize + 1;
    let h = ((y1 - y0) / pitch).ceil() as usize + 1;
    let photo = Image::from_fn(w, h, |i, j| {
        let x = x0 + i as f64 * pitch;
        let y = y0 + j as f64 * pitch;
        match (surface.height_at(x, y), surface.albedo_at(x, y)) {
            (Some(s), Some(a)) => a * s.normal()[2] + surface.emissive,
            _ => background.albedo,
        }
    });
    let blurred = gaussian_blur(&photo, blur / pitch);
    Ok(AlbedoMap {
        image: Arc::new(blurred.map(|p| (p * gain).clamp(0.02, 1.0))),
        origin: (x0, y0),
        pitch,
    })
}

/// Replaces a live face with a reproduction of it. The returned scene keeps
/// the lights and camera; its surface is a plane (flat print, screen) or a
/// cylinder (bent print) carrying the frontal photograph as albedo.
pub fn spoofify(live: &SceneSpec, params: &PrintParams) -> Result<SceneSpec> {
    params.validate()?;
    let map = frontal_print(
        &live.surface,
        &live.background,
        params.pitch,
        params.blur,
        params.gain,
    )?;
    spoofify_with_map(live, params, map)
}

/// As [`spoofify`] with a precomputed photograph (shared across spoofs of
/// the same subject).
pub fn spoofify_with_map(
    live: &SceneSpec,
    params: &PrintParams,
    map: AlbedoMap,
) -> Result<SceneSpec> {
    params.validate()?;
    if !matches!(live.surface.geometry, Geometry::Face(_)) {
        return Err(Error::Config("spoofify needs a live face scene".into()));
    }
    let mut anchors = [(0.0, 0.0); 7];
    for (i, name) in LandmarkName::ALL.iter().enumerate() {
        anchors[i] = live.surface.anchor(*name);
    }
    let geometry = match params.kind {
        SpoofKind::Flat | SpoofKind::Screen => Geometry::Plane(PlaneShape {
            z0: params.z0,
            slope_x: params.slope_x,
            slope_y: params.slope_y,
        }),
        SpoofKind::Curved => Geometry::Cylinder(CylinderShape {
            z0: params.z0,
            radius: params.radius,
            axis_x: params.axis_x,
            convex: params.convex,
        }),
    };
    let mut scene = live.clone();
    scene.surface = SurfaceModel {
        geometry,
        albedo: Albedo::Map(map),
        emissive: if params.kind == SpoofKind::Screen {
            params.emissive
        } else {
            0.0
        },
        pose: params.pose,
        anchors,
        mirrored: false,
    };
    Ok(scene)
}
