use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    chan_features, compute_da3d, compute_i3d, lbp_descriptor, register_flash_pair, register_native,
    FeatureVector, PatchRegion, RegionKind, DA3D_GRAD_EPS, I3D_EPS,
};
use crate::error::{Error, Result};
use crate::sim::{Capture, DatasetManifest, FlashPair, ManifestRecord, Modality, Sample, StereoPair, Synthesizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    I3d,
    Da3d,
    Lbp,
    Chan,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [FeatureKind::I3d, FeatureKind::Da3d, FeatureKind::Lbp, FeatureKind::Chan];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::I3d => "i3d",
            FeatureKind::Da3d => "da3d",
            FeatureKind::Lbp => "lbp",
            FeatureKind::Chan => "chan",
        }
    }

    /// Capture modality the feature needs; `None` if either works.
    pub fn modality(self) -> Option<Modality> {
        match self {
            FeatureKind::I3d | FeatureKind::Chan => Some(Modality::FlashPair),
            FeatureKind::Da3d => Some(Modality::StereoPair),
            FeatureKind::Lbp => None,
        }
    }

    pub fn supports(self, modality: Modality) -> bool {
        self.modality().is_none_or(|m| m == modality)
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i3d" => Ok(FeatureKind::I3d),
            "da3d" => Ok(FeatureKind::Da3d),
            "lbp" => Ok(FeatureKind::Lbp),
            "chan" => Ok(FeatureKind::Chan),
            _ => Err(Error::Argument(format!("unknown feature '{s}'"))),
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub kind: FeatureKind,
    /// Patch region for I3D and Da3D; the texture features always use the face.
    pub region: RegionKind,
    pub eps: f64,
    pub grad_eps: f64,
}

impl ExtractOptions {
    pub fn new(kind: FeatureKind, region: RegionKind) -> Self {
        ExtractOptions {
            kind,
            region,
            eps: I3D_EPS,
            grad_eps: DA3D_GRAD_EPS,
        }
    }
}

/// Registers the pair in the working frame and computes the I3D patch.
pub fn extract_i3d(pair: &FlashPair, region: RegionKind, eps: f64) -> Result<FeatureVector> {
    let reg = register_flash_pair(&pair.ambient, &pair.flash, &pair.lm_ambient, &pair.lm_flash)?;
    let (w, h) = reg.ambient.dims();
    let region = PatchRegion::from_landmarks(region, &reg.landmarks, w, h)?;
    compute_i3d(&reg.ambient, &reg.flash, &region, eps)
}

pub fn extract_da3d(pair: &StereoPair, region: RegionKind, grad_eps: f64) -> Result<FeatureVector> {
    compute_da3d(&pair.left, &pair.right, &pair.lm_left, &pair.lm_right, region, grad_eps)
}

/// Chan descriptor on the pair registered at its native resolution.
pub fn extract_chan(pair: &FlashPair) -> Result<FeatureVector> {
    let reg = register_native(&pair.ambient, &pair.flash, &pair.lm_ambient, &pair.lm_flash)?;
    chan_features(&reg.ambient, &reg.flash, &reg.landmarks)
}

/// LBP of the flash shot, or of the left view for stereo.
pub fn extract_lbp(capture: &Capture) -> Result<FeatureVector> {
    match capture {
        Capture::Flash(p) => lbp_descriptor(&p.flash, &p.lm_flash),
        Capture::Stereo(p) => lbp_descriptor(&p.left, &p.lm_left),
    }
}

pub fn extract_capture(capture: &Capture, opts: &ExtractOptions) -> Result<FeatureVector> {
    match (opts.kind, capture) {
        (FeatureKind::I3d, Capture::Flash(p)) => extract_i3d(p, opts.region, opts.eps),
        (FeatureKind::Chan, Capture::Flash(p)) => extract_chan(p),
        (FeatureKind::Da3d, Capture::Stereo(p)) => extract_da3d(p, opts.region, opts.grad_eps),
        (FeatureKind::Lbp, c) => extract_lbp(c),
        (kind, _) => Err(Error::Argument(format!(
            "{kind} features cannot be computed from this capture modality"
        ))),
    }
}

fn tag(mut fv: FeatureVector, r: &ManifestRecord) -> FeatureVector {
    fv.sample_id = r.sample_id.clone();
    fv.subject_id = Some(r.subject_id.clone());
    fv.label = Some(r.label);
    fv.flash_side = r.flash_side;
    fv
}

/// A record whose features could not be computed.
#[derive(Debug)]
pub struct Skipped {
    pub sample_id: String,
    pub error: Error,
}

/// Features for every record of a manifest, in record order. Per-sample
/// failures are returned alongside rather than aborting the run; a
/// modality mismatch is rejected up front.
pub fn extract_manifest(
    manifest: &DatasetManifest,
    opts: &ExtractOptions,
) -> Result<(Vec<FeatureVector>, Vec<Skipped>)> {
    if let Some(r) = manifest.records.iter().find(|r| !opts.kind.supports(r.modality)) {
        return Err(Error::Argument(format!(
            "{} features need {} captures, record {} is {}",
            opts.kind,
            opts.kind.modality().map_or("any", |m| m.as_str()),
            r.sample_id,
            r.modality.as_str()
        )));
    }
    let results: Vec<std::result::Result<FeatureVector, Skipped>> = manifest
        .records
        .par_iter()
        .map(|r| {
            manifest
                .load(r)
                .and_then(|c| extract_capture(&c.capture, opts))
                .map(|fv| tag(fv, r))
                .map_err(|error| Skipped {
                    sample_id: r.sample_id.clone(),
                    error,
                })
        })
        .collect();
    let mut features = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(fv) => features.push(fv),
            Err(s) => skipped.push(s),
        }
    }
    Ok((features, skipped))
}

/// Features of one synthesized sample, tagged with its metadata.
pub fn extract_sample(sample: &Sample, opts: &ExtractOptions) -> Result<FeatureVector> {
    let mut fv = extract_capture(&sample.capture, opts)?;
    let m = &sample.meta;
    fv.sample_id = m.sample_id.clone();
    fv.subject_id = Some(m.subject_id.clone());
    fv.label = Some(m.label);
    fv.flash_side = m.flash_side;
    Ok(fv)
}

/// Renders every sample of `synth` in memory and extracts its features,
/// in plan order. Any failure aborts.
pub fn extract_synthesized(synth: &Synthesizer, opts: &ExtractOptions) -> Result<Vec<FeatureVector>> {
    (0..synth.len())
        .into_par_iter()
        .map(|i| extract_sample(&synth.sample(i)?, opts))
        .collect()
}
