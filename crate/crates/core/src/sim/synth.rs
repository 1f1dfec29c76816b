//! Seeded corpus generation: subjects, per-sample scenes, renders and
//! sensor capture.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::render::{render_flash_pair, render_stereo_pair, FlashPair, StereoPair};
use super::scene::{
    Albedo, AlbedoMap, Background, Bump, Camera, FaceShape, Geometry, LightSpec, SceneSpec,
    SheetPose, StereoRig, SurfaceModel,
};
use super::spoof::{frontal_print, spoofify_with_map, PrintParams, SpoofKind};
use super::texture::{Mark, SkinAlbedo};
use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Live,
    SpoofFlat,
    SpoofCurved,
    SpoofScreen,
}

impl Label {
    pub const ALL: [Label; 4] = [
        Label::Live,
        Label::SpoofFlat,
        Label::SpoofCurved,
        Label::SpoofScreen,
    ];

    pub fn is_live(self) -> bool {
        self == Label::Live
    }

    pub fn spoof_kind(self) -> Option<SpoofKind> {
        match self {
            Label::Live => None,
            Label::SpoofFlat => Some(SpoofKind::Flat),
            Label::SpoofCurved => Some(SpoofKind::Curved),
            Label::SpoofScreen => Some(SpoofKind::Screen),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Live => "live",
            Label::SpoofFlat => "spoof_flat",
            Label::SpoofCurved => "spoof_curved",
            Label::SpoofScreen => "spoof_screen",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    FlashPair,
    StereoPair,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::FlashPair => "flash_pair",
            Modality::StereoPair => "stereo_pair",
        }
    }
}

/// Image side a flash is mounted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlashSide {
    Left,
    Right,
}

impl FlashSide {
    pub fn opposite(self) -> FlashSide {
        match self {
            FlashSide::Left => FlashSide::Right,
            FlashSide::Right => FlashSide::Left,
        }
    }

    /// Classifier target: Left = -1, Right = +1.
    pub fn sign(self) -> f64 {
        match self {
            FlashSide::Left => -1.0,
            FlashSide::Right => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FlashSide::Left => "left",
            FlashSide::Right => "right",
        }
    }
}

impl fmt::Display for FlashSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FlashSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(FlashSide::Left),
            "right" | "r" => Ok(FlashSide::Right),
            _ => Err(Error::Argument(format!("unknown flash side '{s}'"))),
        }
    }
}

/// Corpus recipe. Sample counts are per label; subjects are assigned
/// round-robin within each label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub subjects: usize,
    pub live: usize,
    pub spoof_flat: usize,
    pub spoof_curved: usize,
    pub spoof_screen: usize,
    pub modality: Modality,
    /// `None`: near-frontal flash. `Some(p)`: side flashes, fraction `p` on the left.
    pub flash_left_fraction: Option<f64>,
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view at the subject, world units.
    pub field_width: f64,
    pub supersample: usize,
    pub noise_sigma: f64,
    pub quantize: bool,
    /// Flash luminance boost on a camera-facing normal, relative to ambient.
    pub flash_boost: (f64, f64),
    /// Misplacement of the second image (hand jitter of the flash shot,
    /// stereo rig misalignment): max shift in pixels and roll in degrees.
    pub jitter_px: f64,
    pub jitter_roll_deg: f64,
    pub distance: f64,
    pub baseline: f64,
    /// Max relative exposure difference between the two stereo cameras.
    pub stereo_gain_mismatch: f64,
    /// Write normal/height/albedo maps next to each sample.
    pub ground_truth_maps: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            subjects: 10,
            live: 0,
            spoof_flat: 0,
            spoof_curved: 0,
            spoof_screen: 0,
            modality: Modality::FlashPair,
            flash_left_fraction: None,
            width: 480,
            height: 270,
            field_width: 480.0,
            supersample: 2,
            noise_sigma: 0.005,
            quantize: true,
            flash_boost: (0.2, 0.5),
            jitter_px: 2.0,
            jitter_roll_deg: 0.5,
            distance: 600.0,
            baseline: 25.0,
            stereo_gain_mismatch: 0.03,
            ground_truth_maps: true,
        }
    }
}

impl SynthConfig {
    pub fn count(&self, label: Label) -> usize {
        match label {
            Label::Live => self.live,
            Label::SpoofFlat => self.spoof_flat,
            Label::SpoofCurved => self.spoof_curved,
            Label::SpoofScreen => self.spoof_screen,
        }
    }

    pub fn total(&self) -> usize {
        Label::ALL.iter().map(|&l| self.count(l)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.subjects == 0 {
            return Err(Error::Config("at least one subject is required".into()));
        }
        if self.total() == 0 {
            return Err(Error::Config("corpus has no samples".into()));
        }
        if let Some(p) = self.flash_left_fraction {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("left fraction {p} outside [0, 1]")));
            }
            if self.modality == Modality::StereoPair {
                return Err(Error::Config("flash sides apply to flash pairs only".into()));
            }
        }
        let (lo, hi) = self.flash_boost;
        if !(lo >= 0.0 && hi >= lo) {
            return Err(Error::Config("flash boost range must satisfy 0 <= lo <= hi".into()));
        }
        if !(self.noise_sigma >= 0.0) || !(self.jitter_px >= 0.0) {
            return Err(Error::Config("noise and jitter must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.stereo_gain_mismatch) {
            return Err(Error::Config("stereo gain mismatch must lie in [0, 1)".into()));
        }
        if self.width < 32 || self.height < 32 || self.supersample == 0 {
            return Err(Error::Config("frame too small".into()));
        }
        if !(self.field_width > 0.0 && self.distance > 0.0 && self.baseline >= 0.0) {
            return Err(Error::Config("camera geometry must be positive".into()));
        }
        Ok(())
    }

    pub fn pitch(&self) -> f64 {
        self.field_width / self.width as f64
    }
}

/// Identity and metadata of one planned sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub index: usize,
    pub sample_id: String,
    pub subject_id: String,
    pub subject_index: usize,
    pub label: Label,
    pub modality: Modality,
    pub flash_side: Option<FlashSide>,
}

/// One rendered capture.
#[derive(Debug, Clone)]
pub enum Capture {
    Flash(FlashPair),
    Stereo(StereoPair),
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub meta: SampleMeta,
    pub scene: SceneSpec,
    pub capture: Capture,
}

/// Per-subject face geometry and skin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub shape: FaceShape,
    pub skin: SkinAlbedo,
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent RNG stream for `(seed, index, stream)`.
pub fn stream_rng(seed: u64, index: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(seed, index), stream.wrapping_add(0x51)))
}

const SUBJECT_STREAM: u64 = 1 << 40;

fn jitter(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Samples a subject's face shape and skin deterministically.
pub fn sample_subject(seed: u64, index: usize) -> Subject {
    let mut rng = stream_rng(seed, SUBJECT_STREAM + index as u64, 0);
    let k = rng.random_range(0.9..1.1);
    let mut amp = |base: f64| base * rng.random_range(0.8..1.2);
    let pair = |cx: f64, cy: f64, sx: f64, sy: f64, a: f64| {
        [
            Bump { cx: -cx * k, cy: cy * k, sx: sx * k, sy: sy * k, amp: a * k },
            Bump { cx: cx * k, cy: cy * k, sx: sx * k, sy: sy * k, amp: a * k },
        ]
    };
    let one = |cx: f64, cy: f64, sx: f64, sy: f64, a: f64| Bump {
        cx: cx * k,
        cy: cy * k,
        sx: sx * k,
        sy: sy * k,
        amp: a * k,
    };
    let mut bumps = vec![
        one(0.0, -20.0, 8.0, 22.0, amp(16.0)),
        one(0.0, 0.0, 9.0, 8.0, amp(10.0)),
        one(0.0, 40.0, 18.0, 5.0, amp(-3.0)),
        one(0.0, 68.0, 18.0, 12.0, amp(6.0)),
    ];
    bumps.extend(pair(11.0, 4.0, 6.0, 5.0, amp(4.0)));
    bumps.extend(pair(30.0, -55.0, 18.0, 7.0, amp(5.0)));
    bumps.extend(pair(30.0, -38.0, 13.0, 8.0, amp(-9.0)));
    bumps.extend(pair(40.0, 2.0, 16.0, 16.0, amp(6.0)));
    let shape = FaceShape {
        half_width: 72.0 * k,
        half_height: 105.0 * k,
        center_y: -12.0 * k,
        depth: rng.random_range(38.0..52.0) * k,
        bumps,
        anchors: [
            (0.0, 0.0),
            (-45.0 * k, -38.0 * k),
            (45.0 * k, -38.0 * k),
            (-24.0 * k, 40.0 * k),
            (24.0 * k, 40.0 * k),
            (-62.0 * k, -80.0 * k),
            (62.0 * k, 80.0 * k),
        ],
    };
    let mut marks = Vec::new();
    let mut mark = |cx: f64, cy: f64, sx: f64, sy: f64, depth: f64, rng: &mut ChaCha8Rng| {
        let d = (depth * rng.random_range(0.8..1.2)).min(0.9);
        marks.push(Mark { cx: cx * k, cy: cy * k, sx: sx * k, sy: sy * k, depth: d });
    };
    for s in [-1.0, 1.0] {
        mark(30.0 * s, -55.0, 15.0, 4.0, 0.35, &mut rng);
        mark(30.0 * s, -38.0, 10.0, 4.0, 0.45, &mut rng);
        mark(7.0 * s, 5.0, 3.0, 2.0, 0.4, &mut rng);
    }
    mark(0.0, 40.0, 14.0, 4.0, 0.3, &mut rng);
    let skin = SkinAlbedo {
        base: rng.random_range(0.35..0.55),
        marks,
        noise_amp: rng.random_range(0.12..0.18),
        cell: 0.8 * rng.random_range(0.9..1.1),
        seed: rng.random(),
    };
    Subject {
        id: format!("subj{index:03}"),
        shape,
        skin,
    }
}

/// Key light from above plus a near-frontal fill; total intensity 1.
pub fn sample_ambient(rng: &mut impl Rng) -> Result<Vec<LightSpec>> {
    let key_share = rng.random_range(0.55..0.8);
    let key = LightSpec::from_angles(
        rng.random_range(40f64..65.0).to_radians(),
        -FRAC_PI_2 + rng.random_range(-1.0..1.0),
        key_share,
    )?;
    let fill = LightSpec::from_angles(
        rng.random_range(0f64..10.0).to_radians(),
        rng.random_range(0.0..2.0 * PI),
        1.0 - key_share,
    )?;
    Ok(vec![key, fill])
}

/// Flash whose luminance on a camera-facing normal is `boost` times the
/// ambient one.
pub fn flash_light(
    ambient: &[LightSpec],
    tilt: f64,
    azimuth: f64,
    boost: f64,
) -> Result<LightSpec> {
    let ambient_z: f64 = ambient.iter().map(|l| l.vector()[2].max(0.0)).sum();
    LightSpec::from_angles(tilt, azimuth, boost * ambient_z / tilt.cos())
}

pub fn sample_flash(
    rng: &mut impl Rng,
    ambient: &[LightSpec],
    side: Option<FlashSide>,
    boost: (f64, f64),
) -> Result<LightSpec> {
    let (tilt, azimuth) = match side {
        None => (
            rng.random_range(0f64..8.0).to_radians(),
            rng.random_range(0.0..2.0 * PI),
        ),
        Some(s) => (
            rng.random_range(30f64..40.0).to_radians(),
            match s {
                FlashSide::Right => 0.0,
                FlashSide::Left => PI,
            } + rng.random_range(-0.15..0.15),
        ),
    };
    flash_light(ambient, tilt, azimuth, jitter(rng, boost.0, boost.1))
}

/// Random print or screen placement.
pub fn sample_print(rng: &mut impl Rng, kind: SpoofKind) -> PrintParams {
    let mut p = PrintParams::new(kind);
    p.pose = SheetPose {
        scale: rng.random_range(0.92..1.08),
        offset: (rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)),
    };
    p.z0 = rng.random_range(0.0..60.0);
    p.gain = rng.random_range(0.8..1.1);
    match kind {
        SpoofKind::Flat => {
            p.slope_x = rng.random_range(-0.15..0.15);
            p.slope_y = rng.random_range(-0.15..0.15);
        }
        SpoofKind::Curved => {
            p.radius = rng.random_range(120.0..300.0);
            p.axis_x = p.pose.offset.0 + rng.random_range(-10.0..10.0);
            p.convex = rng.random_bool(0.75);
        }
        SpoofKind::Screen => {
            p.slope_x = rng.random_range(-0.08..0.08);
            p.slope_y = rng.random_range(-0.08..0.08);
            p.emissive = rng.random_range(0.03..0.12);
            p.gain = rng.random_range(0.7..1.0);
            p.blur = 0.3;
        }
    }
    p
}

/// Adds Gaussian sensor noise and optionally quantizes to 8 bits.
pub fn capture(img: &Image, sigma: f64, quantize: bool, rng: &mut impl Rng) -> Image {
    let noisy = if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("sigma is positive");
        let px: Vec<f64> = img
            .pixels()
            .iter()
            .map(|&p| (p + normal.sample(rng)).max(0.0))
            .collect();
        Image::new(img.width(), img.height(), px).expect("finite noise")
    } else {
        img.clone()
    };
    if quantize {
        noisy.quantize_8bit()
    } else {
        noisy
    }
}

/// Deterministic corpus generator. Scenes, renders and noise are pure
/// functions of `(config, seed, sample index)`.
pub struct Synthesizer {
    cfg: SynthConfig,
    seed: u64,
    plan: Vec<SampleMeta>,
    subjects: Vec<Subject>,
    photos: Vec<OnceLock<AlbedoMap>>,
}

impl Synthesizer {
    pub fn new(cfg: SynthConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let subjects: Vec<Subject> = (0..cfg.subjects).map(|i| sample_subject(seed, i)).collect();
        let mut plan = Vec::with_capacity(cfg.total());
        let mut side_rng = stream_rng(seed, u64::MAX, 7);
        for label in Label::ALL {
            let n = cfg.count(label);
            let sides: Vec<Option<FlashSide>> = match cfg.flash_left_fraction {
                None => vec![None; n],
                Some(p) => {
                    let n_left = (p * n as f64).round() as usize;
                    let mut s: Vec<Option<FlashSide>> = (0..n)
                        .map(|i| Some(if i < n_left { FlashSide::Left } else { FlashSide::Right }))
                        .collect();
                    for i in (1..n).rev() {
                        let j = side_rng.random_range(0..=i);
                        s.swap(i, j);
                    }
                    s
                }
            };
            for (j, side) in sides.into_iter().enumerate() {
                let index = plan.len();
                let subject_index = j % cfg.subjects;
                plan.push(SampleMeta {
                    index,
                    sample_id: format!("s{index:05}"),
                    subject_id: subjects[subject_index].id.clone(),
                    subject_index,
                    label,
                    modality: cfg.modality,
                    flash_side: side,
                });
            }
        }
        let photos = (0..cfg.subjects).map(|_| OnceLock::new()).collect();
        Ok(Synthesizer {
            cfg,
            seed,
            plan,
            subjects,
            photos,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn plan(&self) -> &[SampleMeta] {
        &self.plan
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.plan.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plan.is_empty()
    }

    fn live_surface(&self, subject: usize) -> SurfaceModel {
        let s = &self.subjects[subject];
        SurfaceModel {
            geometry: Geometry::Face(s.shape.clone()),
            albedo: Albedo::Skin(s.skin.clone()),
            emissive: 0.0,
            pose: SheetPose::identity(),
            anchors: s.shape.anchors,
            mirrored: false,
        }
    }

    /// Unit-gain frontal photograph of a subject, computed once.
    fn photo(&self, subject: usize, background: &Background) -> Result<&AlbedoMap> {
        if let Some(p) = self.photos[subject].get() {
            return Ok(p);
        }
        let proto = PrintParams::new(SpoofKind::Flat);
        let map = frontal_print(&self.live_surface(subject), background, proto.pitch, proto.blur, 1.0)?;
        Ok(self.photos[subject].get_or_init(|| map))
    }

    /// The scene of sample `index`.
    pub fn scene(&self, index: usize) -> Result<SceneSpec> {
        let side = self.meta(index)?.flash_side;
        self.scene_with_side(index, side)
    }

    fn meta(&self, index: usize) -> Result<&SampleMeta> {
        self.plan
            .get(index)
            .ok_or_else(|| Error::Argument(format!("sample index {index} out of range")))
    }

    /// Sample `index` with its flash placed on `side` instead of the planned
    /// one; everything else about the scene is unchanged.
    pub fn scene_with_side(&self, index: usize, side: Option<FlashSide>) -> Result<SceneSpec> {
        let meta = self.meta(index)?;
        let cfg = &self.cfg;
        let mut rng = stream_rng(self.seed, index as u64, 0);
        let ambient = sample_ambient(&mut rng)?;
        let flash = match cfg.modality {
            Modality::FlashPair => Some(sample_flash(&mut rng, &ambient, side, cfg.flash_boost)?),
            Modality::StereoPair => None,
        };
        let pitch = cfg.pitch();
        let mut camera = Camera::new(cfg.width, cfg.height, pitch);
        camera.center = (rng.random_range(-8.0..8.0), -10.0 + rng.random_range(-8.0..8.0));
        camera.distance = cfg.distance;
        camera.supersample = cfg.supersample;
        if cfg.modality == Modality::StereoPair {
            camera.stereo = Some(StereoRig {
                baseline: cfg.baseline,
                focal_px: cfg.distance / pitch,
            });
        }
        let second_camera = if cfg.jitter_px > 0.0 || cfg.jitter_roll_deg > 0.0 {
            let j = cfg.jitter_px;
            let r = cfg.jitter_roll_deg.to_radians();
            let mut c = camera;
            c.shift = (jitter(&mut rng, -j, j), jitter(&mut rng, -j, j));
            c.roll = jitter(&mut rng, -r, r);
            Some(c)
        } else {
            None
        };
        let background = Background {
            albedo: rng.random_range(0.35..0.6),
            ..Background::default()
        };
        let live = SceneSpec {
            surface: self.live_surface(meta.subject_index),
            background,
            ambient_lights: ambient,
            flash,
            camera,
            second_camera,
            subject_id: meta.subject_id.clone(),
            seed: mix(self.seed, index as u64),
        };
        match meta.label.spoof_kind() {
            None => Ok(live),
            Some(kind) => {
                let params = sample_print(&mut rng, kind);
                let photo = self.photo(meta.subject_index, &Background::default())?;
                let gain = params.gain;
                let map = AlbedoMap {
                    image: Arc::new(photo.image.map(|p| (p * gain).clamp(0.02, 1.0))),
                    ..photo.clone()
                };
                spoofify_with_map(&live, &params, map)
            }
        }
    }

    /// Renders and captures sample `index`.
    pub fn sample(&self, index: usize) -> Result<Sample> {
        let side = self.meta(index)?.flash_side;
        self.sample_with_side(index, side)
    }

    /// [`Synthesizer::sample`] with the flash on `side`.
    pub fn sample_with_side(&self, index: usize, side: Option<FlashSide>) -> Result<Sample> {
        let scene = self.scene_with_side(index, side)?;
        let mut meta = self.plan[index].clone();
        if meta.modality == Modality::FlashPair {
            meta.flash_side = side;
        }
        let mut noise = stream_rng(self.seed, index as u64, 1);
        let (sigma, q) = (self.cfg.noise_sigma, self.cfg.quantize);
        let capture = match meta.modality {
            Modality::FlashPair => {
                let p = render_flash_pair(&scene)?;
                Capture::Flash(FlashPair {
                    ambient: capture(&p.ambient, sigma, q, &mut noise),
                    flash: capture(&p.flash, sigma, q, &mut noise),
                    ..p
                })
            }
            Modality::StereoPair => {
                let p = render_stereo_pair(&scene)?;
                let m = self.cfg.stereo_gain_mismatch;
                let gain = if m > 0.0 { noise.random_range(1.0 - m..1.0 + m) } else { 1.0 };
                Capture::Stereo(StereoPair {
                    left: capture(&p.left, sigma, q, &mut noise),
                    right: capture(&p.right.map(|x| x * gain), sigma, q, &mut noise),
                    ..p
                })
            }
        };
        Ok(Sample {
            meta,
            scene,
            capture,
        })
    }

    /// Renders every sample (in parallel, order preserved).
    pub fn samples(&self) -> Result<Vec<Sample>> {
        (0..self.len()).into_par_iter().map(|i| self.sample(i)).collect()
    }
}
