//! Lambertian scene simulator: faces, prints and screens under ambient,
//! flash and stereo capture, plus seeded corpus generation.
//!
//! World units are millimetres; `x` points to image right, `y` down and
//! `z` toward the camera. Faces are centered on the nose tip.

mod dataset;
mod render;
mod scene;
mod spoof;
mod surface;
mod synth;
mod texture;

pub use dataset::{
    synth_dataset, DatasetManifest, GroundTruthRecord, LoadedCapture, ManifestRecord, MapFile,
    MANIFEST_FILE,
};
pub use render::{
    gbuffer, landmarks_for_scene, light_vectors, render_flash_pair, render_ground_truth,
    render_lambertian, render_stereo_pair, FlashPair, GBuffer, GroundTruth, StereoPair,
};
pub use scene::{
    Albedo, AlbedoMap, Background, Bump, Camera, CylinderShape, FaceShape, Geometry, LightSpec,
    PlaneShape, SceneSpec, SheetPose, StereoRig, SurfaceKind, SurfaceModel, Vec3,
};
pub use spoof::{frontal_print, spoofify, spoofify_with_map, PrintParams, SpoofKind};
pub use surface::HeightSample;
pub use synth::{
    capture, flash_light, sample_ambient, sample_flash, sample_print, sample_subject, stream_rng,
    Capture, FlashSide, Label, Modality, Sample, SampleMeta, Subject, SynthConfig, Synthesizer,
};
pub use texture::{Mark, SkinAlbedo};
