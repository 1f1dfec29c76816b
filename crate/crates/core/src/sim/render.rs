use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scene::{dot, Camera, LightSpec, SceneSpec, Vec3};
use crate::error::{Error, Result};
use crate::geometry::{LandmarkName, LandmarkSet};
use crate::image::Image;

/// Per-pixel surface attributes seen through one camera. Shading is a
/// cheap pass over this buffer, so several light sets can share it.
#[derive(Debug, Clone)]
pub struct GBuffer {
    width: usize,
    height: usize,
    albedo: Vec<f64>,
    normal: Vec<Vec3>,
    z: Vec<f64>,
    emissive: Vec<f64>,
}

impl GBuffer {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn check_normals(&self) -> Result<()> {
        match self
            .normal
            .iter()
            .position(|n| !n.iter().all(|c| c.is_finite()) || !(n[2] > 0.0))
        {
            Some(i) => Err(Error::Render(format!(
                "degenerate normal at pixel ({}, {})",
                i % self.width,
                i / self.width
            ))),
            None => Ok(()),
        }
    }

    /// `a * sum_i max(n . l_i, 0) + e` per pixel.
    pub fn shade(&self, lights: &[LightSpec]) -> Image {
        let vecs: Vec<Vec3> = lights.iter().map(|l| l.vector()).collect();
        let pixels = (0..self.albedo.len())
            .map(|i| self.albedo[i] * irradiance(self.normal[i], &vecs) + self.emissive[i])
            .collect();
        Image::from_raw(self.width, self.height, pixels)
    }

    /// Smallest summed irradiance over the frame.
    pub fn min_irradiance(&self, lights: &[LightSpec]) -> f64 {
        let vecs: Vec<Vec3> = lights.iter().map(|l| l.vector()).collect();
        self.normal
            .iter()
            .map(|&n| irradiance(n, &vecs))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn albedo(&self) -> Image {
        Image::from_raw(self.width, self.height, self.albedo.clone())
    }

    pub fn depth(&self) -> Image {
        Image::from_raw(self.width, self.height, self.z.clone())
    }

    pub fn normal_component(&self, axis: usize) -> Image {
        Image::from_raw(
            self.width,
            self.height,
            self.normal.iter().map(|n| n[axis]).collect(),
        )
    }
}

#[inline]
fn irradiance(n: Vec3, lights: &[Vec3]) -> f64 {
    lights.iter().map(|&l| dot(n, l).max(0.0)).sum()
}

/// Rasterizes the scene surface and background. `locate(u, v, hint)` maps
/// a continuous pixel coordinate to the world `(x, y)` it images plus a
/// hint for the next call nearby; rows are scanned left to right so the
/// hint can warm-start an iterative solve.
fn rasterize(
    scene: &SceneSpec,
    camera: &Camera,
    locate: impl Fn(f64, f64, f64) -> (f64, f64, f64) + Sync,
) -> Result<GBuffer> {
    camera.validate()?;
    let surface = &scene.surface;
    let bg = scene.background;
    let ss = camera.supersample;
    let offsets: Vec<f64> = (0..ss).map(|i| (i as f64 + 0.5) / ss as f64 - 0.5).collect();
    let inv = 1.0 / (ss * ss) as f64;
    let (w, h) = (camera.width, camera.height);
    let mut g = GBuffer {
        width: w,
        height: h,
        albedo: vec![0.0; w * h],
        normal: vec![[0.0, 0.0, 1.0]; w * h],
        z: vec![bg.z; w * h],
        emissive: vec![0.0; w * h],
    };
    g.albedo
        .par_chunks_mut(w)
        .zip(g.normal.par_chunks_mut(w))
        .zip(g.z.par_chunks_mut(w))
        .zip(g.emissive.par_chunks_mut(w))
        .enumerate()
        .for_each(|(v, (((albedo, normal), z), emissive))| {
            let vf = v as f64;
            let mut hint = 0.0;
            for u in 0..w {
                let uf = u as f64;
                let (x, y, next) = locate(uf, vf, hint);
                hint = next;
                let mut a = 0.0;
                for &dv in &offsets {
                    for &du in &offsets {
                        let (xs, ys) = if ss == 1 {
                            (x, y)
                        } else {
                            let (xs, ys, _) = locate(uf + du, vf + dv, hint);
                            (xs, ys)
                        };
                        a += surface.albedo_at(xs, ys).unwrap_or(bg.albedo);
                    }
                }
                albedo[u] = a * inv;
                if let Some(s) = surface.height_at(x, y) {
                    normal[u] = s.normal();
                    z[u] = s.z;
                    emissive[u] = surface.emissive;
                }
            }
        });
    g.check_normals()?;
    Ok(g)
}

/// Surface attributes through `camera` (orthographic).
pub fn gbuffer(scene: &SceneSpec, camera: &Camera) -> Result<GBuffer> {
    let to_world = camera.pixel_map();
    rasterize(scene, camera, |u, v, _| {
        let (x, y) = to_world(u, v);
        (x, y, 0.0)
    })
}

/// World height seen along the ray at world `(x, y)`.
fn height_or_background(scene: &SceneSpec, x: f64, y: f64) -> f64 {
    scene
        .surface
        .height_at(x, y)
        .map_or(scene.background.z, |s| s.z)
}

/// Disparity `f * b / depth` of the world column at `(x, y)`.
fn disparity_at(scene: &SceneSpec, camera: &Camera, x: f64, y: f64) -> Result<f64> {
    let rig = camera
        .stereo
        .ok_or_else(|| Error::Config("camera has no stereo rig".into()))?;
    let depth = camera.distance - height_or_background(scene, x, y);
    if !(depth > 0.0) {
        return Err(Error::Geometry(format!(
            "non-positive depth {depth} at world ({x:.2}, {y:.2})"
        )));
    }
    Ok(rig.focal_px * rig.baseline / depth)
}

/// Renders `scene` through its main camera under `lights`.
pub fn render_lambertian(scene: &SceneSpec, lights: &[LightSpec]) -> Result<Image> {
    if lights.is_empty() {
        return Err(Error::Config("render needs at least one light".into()));
    }
    Ok(gbuffer(scene, &scene.camera)?.shade(lights))
}

/// Ambient and flash renders of one scene plus their landmarks.
#[derive(Debug, Clone)]
pub struct FlashPair {
    pub ambient: Image,
    pub flash: Image,
    pub lm_ambient: LandmarkSet,
    pub lm_flash: LandmarkSet,
}

/// Left and right renders of one scene plus their landmarks.
#[derive(Debug, Clone)]
pub struct StereoPair {
    pub left: Image,
    pub right: Image,
    pub lm_left: LandmarkSet,
    pub lm_right: LandmarkSet,
}

fn check_ambient(g: &GBuffer, scene: &SceneSpec) -> Result<()> {
    let min = g.min_irradiance(&scene.ambient_lights);
    if !(min > 0.0) {
        return Err(Error::Render(format!(
            "ambient irradiance must be positive everywhere, minimum is {min}"
        )));
    }
    Ok(())
}

/// Renders the no-flash and flash shots. The flash term is clamped at zero
/// like every other light.
pub fn render_flash_pair(scene: &SceneSpec) -> Result<FlashPair> {
    scene.validate()?;
    let flash = scene
        .flash
        .ok_or_else(|| Error::Config("scene has no flash light".into()))?;
    let cam_a = scene.camera;
    let cam_f = scene.camera_for_flash();
    let g_a = gbuffer(scene, &cam_a)?;
    check_ambient(&g_a, scene)?;
    let g_f = if cam_f == cam_a {
        None
    } else {
        let g = gbuffer(scene, &cam_f)?;
        check_ambient(&g, scene)?;
        Some(g)
    };
    let mut lights = scene.ambient_lights.clone();
    lights.push(flash);
    Ok(FlashPair {
        ambient: g_a.shade(&scene.ambient_lights),
        flash: g_f.as_ref().unwrap_or(&g_a).shade(&lights),
        lm_ambient: landmarks_through(scene, &cam_a)?,
        lm_flash: landmarks_through(scene, &cam_f)?,
    })
}

/// Solves `u_l - d(u_l) = u_r` for the left-image column that the right
/// camera sees at `u_r`, starting from disparity `d0`. Returns its world
/// point and disparity.
fn right_to_world(
    scene: &SceneSpec,
    camera: &Camera,
    to_world: impl Fn(f64, f64) -> (f64, f64),
    u_r: f64,
    v: f64,
    d0: f64,
) -> (f64, f64, f64) {
    let mut u_l = u_r + d0;
    for _ in 0..12 {
        let (x, y) = to_world(u_l, v);
        let d = disparity_at(scene, camera, x, y).unwrap_or(0.0);
        let next = u_r + d;
        if (next - u_l).abs() < 1e-9 {
            u_l = next;
            break;
        }
        u_l = next;
    }
    let (x, y) = to_world(u_l, v);
    (x, y, u_l - u_r)
}

fn check_depth(scene: &SceneSpec, camera: &Camera, g: &GBuffer) -> Result<()> {
    if let Some(&z) = g.z.iter().find(|&&z| !(camera.distance - z > 0.0)) {
        return Err(Error::Geometry(format!(
            "non-positive depth {} in stereo view",
            camera.distance - z
        )));
    }
    if !(camera.distance - scene.background.z > 0.0) {
        return Err(Error::Geometry("background behind the camera".into()));
    }
    Ok(())
}

/// Renders a horizontal stereo pair. The right camera sits `baseline`
/// along +x, so scene points appear `f * b / depth` pixels further left.
pub fn render_stereo_pair(scene: &SceneSpec) -> Result<StereoPair> {
    scene.validate()?;
    let camera = scene.camera;
    if camera.stereo.is_none() {
        return Err(Error::Config("scene camera has no stereo rig".into()));
    }
    let g_left = gbuffer(scene, &camera)?;
    check_depth(scene, &camera, &g_left)?;
    let to_world = camera.pixel_map();
    // The right view is the rectified one moved in-plane by the rig's
    // misalignment, if any.
    let right_cam = scene.second_camera.unwrap_or(camera);
    let right_map = right_cam.pixel_map();
    let g_right = rasterize(scene, &camera, |u, v, d0| {
        let (x, y) = right_map(u, v);
        let (u, v) = camera.world_to_pixel(x, y);
        right_to_world(scene, &camera, to_world, u, v, d0)
    })?;
    check_depth(scene, &camera, &g_right)?;
    let lm_left = landmarks_through(scene, &camera)?;
    let mut right_pts = [(0.0, 0.0); 7];
    for (i, name) in LandmarkName::ALL.iter().enumerate() {
        let (x, y) = scene.surface.anchor(*name);
        let (u, v) = camera.world_to_pixel(x, y);
        let (x, y) = to_world(u - disparity_at(scene, &camera, x, y)?, v);
        right_pts[i] = right_cam.world_to_pixel(x, y);
    }
    Ok(StereoPair {
        left: g_left.shade(&scene.ambient_lights),
        right: g_right.shade(&scene.ambient_lights),
        lm_left,
        lm_right: LandmarkSet::from_array(right_pts)?,
    })
}

fn landmarks_through(scene: &SceneSpec, camera: &Camera) -> Result<LandmarkSet> {
    let mut pts = [(0.0, 0.0); 7];
    for (i, name) in LandmarkName::ALL.iter().enumerate() {
        let (x, y) = scene.surface.anchor(*name);
        pts[i] = camera.world_to_pixel(x, y);
    }
    LandmarkSet::from_array(pts)
}

/// Projects the surface's named anchors through the scene camera.
pub fn landmarks_for_scene(scene: &SceneSpec) -> Result<LandmarkSet> {
    landmarks_through(scene, &scene.camera)
}

/// Per-pixel ground truth through the main camera.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub normal_x: Image,
    pub normal_y: Image,
    pub normal_z: Image,
    /// Surface height `z` (toward the camera).
    pub height: Image,
    pub albedo: Image,
    /// `f * b / depth` per left-image pixel, for stereo scenes.
    pub disparity: Option<Image>,
}

pub fn render_ground_truth(scene: &SceneSpec) -> Result<GroundTruth> {
    let camera = scene.camera;
    let g = gbuffer(scene, &camera)?;
    let disparity = match camera.stereo {
        Some(rig) => {
            let px: Vec<f64> = g
                .z
                .iter()
                .map(|&z| rig.focal_px * rig.baseline / (camera.distance - z))
                .collect();
            Some(Image::new(g.width, g.height, px)?)
        }
        None => None,
    };
    Ok(GroundTruth {
        normal_x: g.normal_component(0),
        normal_y: g.normal_component(1),
        normal_z: g.normal_component(2),
        height: g.depth(),
        albedo: g.albedo(),
        disparity,
    })
}

/// Light vectors serialized into ground-truth records.
pub fn light_vectors(lights: &[LightSpec]) -> Vec<Vec3> {
    lights.iter().map(|l| l.vector()).collect()
}
