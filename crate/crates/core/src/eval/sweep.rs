use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::holdout::{repeated_holdout, EvalReport, HoldoutConfig};
use crate::error::{Error, Result};
use crate::features::{extract_capture, ExtractOptions, FeatureKind, FeatureVector, RegionKind};
use crate::geometry::LandmarkSet;
use crate::image::{resize_area, Image};
use crate::sim::{capture, stream_rng, Capture, FlashPair, StereoPair, SynthConfig, Synthesizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub width: usize,
    pub height: usize,
    pub feature: FeatureKind,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn get(&self, width: usize, height: usize, feature: FeatureKind) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.width == width && r.height == height && r.feature == feature)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("width,height,feature,mean_acc,std_acc,mean_hter,std_hter\n");
        for r in &self.rows {
            let a = &r.report.aggregate;
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.width,
                r.height,
                r.feature,
                a.mean_acc,
                a.std_acc,
                super::holdout::opt(a.mean_hter),
                super::holdout::opt(a.std_hter)
            ));
        }
        out
    }
}

fn downsample(img: &Image, lm: &LandmarkSet, size: (usize, usize)) -> Result<(Image, LandmarkSet)> {
    if img.dims() == size {
        return Ok((img.clone(), lm.clone()));
    }
    Ok((resize_area(img, size.0, size.1)?, lm.rescaled(img.dims(), size)))
}

/// The noise-free capture area-resampled to `size`, then given sensor
/// noise at that resolution.
fn at_resolution(
    clean: &Capture,
    size: (usize, usize),
    cfg: &SynthConfig,
    rng: &mut impl rand::Rng,
) -> Result<Capture> {
    let (sigma, q) = (cfg.noise_sigma, cfg.quantize);
    Ok(match clean {
        Capture::Flash(p) => {
            let (a, la) = downsample(&p.ambient, &p.lm_ambient, size)?;
            let (f, lf) = downsample(&p.flash, &p.lm_flash, size)?;
            Capture::Flash(FlashPair {
                ambient: capture(&a, sigma, q, rng),
                flash: capture(&f, sigma, q, rng),
                lm_ambient: la,
                lm_flash: lf,
            })
        }
        Capture::Stereo(p) => {
            let (l, ll) = downsample(&p.left, &p.lm_left, size)?;
            let (r, lr) = downsample(&p.right, &p.lm_right, size)?;
            Capture::Stereo(StereoPair {
                left: capture(&l, sigma, q, rng),
                right: capture(&r, sigma, q, rng),
                lm_left: ll,
                lm_right: lr,
            })
        }
    })
}

/// Holdout accuracy of each feature at each resolution on one corpus.
///
/// Every sample is rendered once, noise-free, at the largest resolution
/// over the configured field of view; each smaller resolution is an area
/// downsample of that render with fresh sensor noise. Rows come out in
/// `resolutions` x `kinds` order.
pub fn resolution_sweep(
    cfg: &SynthConfig,
    seed: u64,
    resolutions: &[(usize, usize)],
    kinds: &[FeatureKind],
    region: RegionKind,
    holdout: &HoldoutConfig,
) -> Result<SweepTable> {
    if resolutions.is_empty() || kinds.is_empty() {
        return Err(Error::Argument("sweep needs at least one resolution and one feature".into()));
    }
    if let Some(k) = kinds.iter().find(|k| !k.supports(cfg.modality)) {
        return Err(Error::Argument(format!(
            "{k} features cannot be computed from {} captures",
            cfg.modality.as_str()
        )));
    }
    let top = *resolutions.iter().max_by_key(|(w, h)| w * h).expect("non-empty");
    let base = SynthConfig {
        width: top.0,
        height: top.1,
        noise_sigma: 0.0,
        quantize: false,
        ..cfg.clone()
    };
    let synth = Synthesizer::new(base, seed)?;
    let cells = resolutions.len() * kinds.len();
    let per_sample: Vec<Vec<FeatureVector>> = (0..synth.len())
        .into_par_iter()
        .map(|i| {
            let sample = synth.sample(i)?;
            let m = &sample.meta;
            let mut out = Vec::with_capacity(cells);
            for (r, &size) in resolutions.iter().enumerate() {
                let mut rng = stream_rng(seed, i as u64, 100 + r as u64);
                let cap = at_resolution(&sample.capture, size, cfg, &mut rng)?;
                for &kind in kinds {
                    let mut fv = extract_capture(&cap, &ExtractOptions::new(kind, region))?;
                    fv.sample_id = m.sample_id.clone();
                    fv.subject_id = Some(m.subject_id.clone());
                    fv.label = Some(m.label);
                    fv.flash_side = m.flash_side;
                    out.push(fv);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(cells);
    for (r, &(width, height)) in resolutions.iter().enumerate() {
        for (k, &feature) in kinds.iter().enumerate() {
            let cell = r * kinds.len() + k;
            let features: Vec<FeatureVector> = per_sample.iter().map(|s| s[cell].clone()).collect();
            let mut report = repeated_holdout(&features, holdout)?;
            if let serde_json::Value::Object(m) = &mut report.config {
                m.insert("width".into(), width.into());
                m.insert("height".into(), height.into());
                m.insert("feature".into(), feature.as_str().into());
            }
            rows.push(SweepRow {
                width,
                height,
                feature,
                report,
            });
        }
    }
    Ok(SweepTable { rows })
}
