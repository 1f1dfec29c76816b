//! On-disk corpus: PGM captures, CSV landmarks, JSON ground truth and a
//! JSON-lines manifest whose paths are relative to the manifest file.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::render::{render_ground_truth, FlashPair, StereoPair};
use super::scene::{SceneSpec, Vec3};
use super::synth::{Capture, FlashSide, Label, Modality, Sample, SynthConfig, Synthesizer};
use crate::error::{Error, Result};
use crate::geometry::LandmarkSet;
use crate::image::{read_pgm, write_pgm16, write_pgm8, write_pgm_scaled, Image};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub subject_id: String,
    pub modality: Modality,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flash_side: Option<FlashSide>,
    /// `[ambient, flash]` or `[left, right]`.
    pub images: [String; 2],
    pub landmarks: [String; 2],
    pub ground_truth: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

/// A scalar map stored as a 16-bit PGM spanning `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFile {
    pub path: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub sample_id: String,
    pub subject_id: String,
    pub label: Label,
    pub ambient_lights: Vec<Vec3>,
    pub flash_light: Option<Vec3>,
    pub scene: SceneSpec,
    #[serde(default)]
    pub maps: Vec<(String, MapFile)>,
}

/// Images and landmarks of one manifest record, loaded into memory.
#[derive(Debug, Clone)]
pub struct LoadedCapture {
    pub record: ManifestRecord,
    pub capture: Capture,
}

impl DatasetManifest {
    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.push(b'\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }

    /// Reads a manifest and checks that every referenced file exists.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut records = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let r: ManifestRecord = serde_json::from_str(&line)
                .map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1)))?;
            if r.modality == Modality::StereoPair && r.flash_side.is_some() {
                return Err(Error::parse(
                    path,
                    format!("line {}: stereo record with a flash side", i + 1),
                ));
            }
            records.push(r);
        }
        let m = DatasetManifest { root, records };
        for r in &m.records {
            for rel in r.images.iter().chain(&r.landmarks).chain([&r.ground_truth]) {
                let p = m.resolve(rel);
                if !p.is_file() {
                    return Err(Error::parse(
                        path,
                        format!("record {} references missing file {}", r.sample_id, p.display()),
                    ));
                }
            }
        }
        Ok(m)
    }

    pub fn modality(&self) -> Option<Modality> {
        let first = self.records.first()?.modality;
        self.records.iter().all(|r| r.modality == first).then_some(first)
    }

    pub fn load(&self, record: &ManifestRecord) -> Result<LoadedCapture> {
        let a = read_pgm(self.resolve(&record.images[0]))?;
        let b = read_pgm(self.resolve(&record.images[1]))?;
        let la = LandmarkSet::read_csv(self.resolve(&record.landmarks[0]))?;
        let lb = LandmarkSet::read_csv(self.resolve(&record.landmarks[1]))?;
        let capture = match record.modality {
            Modality::FlashPair => Capture::Flash(FlashPair {
                ambient: a,
                flash: b,
                lm_ambient: la,
                lm_flash: lb,
            }),
            Modality::StereoPair => Capture::Stereo(StereoPair {
                left: a,
                right: b,
                lm_left: la,
                lm_right: lb,
            }),
        };
        Ok(LoadedCapture {
            record: record.clone(),
            capture,
        })
    }

    pub fn read_ground_truth(&self, record: &ManifestRecord) -> Result<GroundTruthRecord> {
        let path = self.resolve(&record.ground_truth);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.to_string()))
    }

    /// Loads a ground-truth map written alongside a record.
    pub fn read_map(&self, map: &MapFile) -> Result<Image> {
        let raw = read_pgm(self.resolve(&map.path))?;
        let span = map.max - map.min;
        Ok(raw.map(|p| map.min + p * span))
    }
}

fn write_image(path: &Path, img: &Image, quantized: bool) -> Result<()> {
    if quantized {
        write_pgm8(path, img)
    } else {
        write_pgm16(path, img)
    }
}

fn write_sample(
    out: &Path,
    sample: &Sample,
    cfg: &SynthConfig,
) -> Result<ManifestRecord> {
    let id = &sample.meta.sample_id;
    let (names, imgs, lms) = match &sample.capture {
        Capture::Flash(p) => (
            ["ambient", "flash"],
            [&p.ambient, &p.flash],
            [&p.lm_ambient, &p.lm_flash],
        ),
        Capture::Stereo(p) => (
            ["left", "right"],
            [&p.left, &p.right],
            [&p.lm_left, &p.lm_right],
        ),
    };
    let mut images = [String::new(), String::new()];
    let mut landmarks = [String::new(), String::new()];
    for k in 0..2 {
        images[k] = format!("images/{id}_{}.pgm", names[k]);
        write_image(&out.join(&images[k]), imgs[k], cfg.quantize)?;
        landmarks[k] = format!("landmarks/{id}_{}.csv", names[k]);
        lms[k].write_csv(out.join(&landmarks[k]))?;
    }
    let mut maps = Vec::new();
    if cfg.ground_truth_maps {
        let gt = render_ground_truth(&sample.scene)?;
        let mut layers = vec![
            ("normal_x", gt.normal_x),
            ("normal_y", gt.normal_y),
            ("normal_z", gt.normal_z),
            ("height", gt.height),
            ("albedo", gt.albedo),
        ];
        if let Some(d) = gt.disparity {
            layers.push(("disparity", d));
        }
        for (name, img) in layers {
            let rel = format!("truth/{id}_{name}.pgm");
            let (min, max) = write_pgm_scaled(out.join(&rel), &img)?;
            maps.push((name.to_string(), MapFile { path: rel, min, max }));
        }
    }
    let gt_rel = format!("truth/{id}.json");
    let record = GroundTruthRecord {
        sample_id: id.clone(),
        subject_id: sample.meta.subject_id.clone(),
        label: sample.meta.label,
        ambient_lights: sample.scene.ambient_lights.iter().map(|l| l.vector()).collect(),
        flash_light: sample.scene.flash.map(|l| l.vector()),
        scene: sample.scene.clone(),
        maps,
    };
    let gt_path = out.join(&gt_rel);
    fs::write(&gt_path, serde_json::to_vec_pretty(&record)?).map_err(|e| Error::io(&gt_path, e))?;
    Ok(ManifestRecord {
        sample_id: id.clone(),
        subject_id: sample.meta.subject_id.clone(),
        modality: sample.meta.modality,
        label: sample.meta.label,
        flash_side: sample.meta.flash_side,
        images,
        landmarks,
        ground_truth: gt_rel,
    })
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Renders the configured corpus into `out` and writes `out/manifest.jsonl`.
pub fn synth_dataset(cfg: &SynthConfig, seed: u64, out: impl AsRef<Path>) -> Result<DatasetManifest> {
    let out = out.as_ref();
    let synth = Synthesizer::new(cfg.clone(), seed)?;
    for sub in ["images", "landmarks", "truth"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut records = Vec::with_capacity(synth.len());
    let indices: Vec<usize> = (0..synth.len()).collect();
    for chunk in indices.chunks(64) {
        let part: Vec<ManifestRecord> = chunk
            .par_iter()
            .map(|&i| synth.sample(i).and_then(|s| write_sample(out, &s, cfg)))
            .collect::<Result<_>>()?;
        records.extend(part);
    }
    let manifest = DatasetManifest {
        root: out.to_path_buf(),
        records,
    };
    manifest.write(out.join(MANIFEST_FILE))?;
    Ok(manifest)
}
