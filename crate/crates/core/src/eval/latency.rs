use std::fmt;
use std::hint::black_box;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifiers::{cnn_predict, svm_predict, CnnModel, LinearModel, Standardizer, SvmParams};
use crate::error::{Error, Result};
use crate::features::{
    extract_chan, extract_da3d, extract_i3d, FeatureLayout, FeatureVector, RegionKind, DA3D_GRAD_EPS, I3D_EPS,
    PATCH_SIZE,
};
use crate::sim::{landmarks_for_scene, Capture, FlashPair, Label, Modality, SceneSpec, StereoPair, SynthConfig, Synthesizer};

/// Fewest timed iterations a benchmark accepts.
pub const MIN_ITERS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    LandmarksStub,
    ExtractI3d,
    ExtractDa3d,
    ExtractChan,
    SvmInfer,
    CnnInfer,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::LandmarksStub,
        Stage::ExtractI3d,
        Stage::ExtractDa3d,
        Stage::ExtractChan,
        Stage::SvmInfer,
        Stage::CnnInfer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::LandmarksStub => "landmarks_stub",
            Stage::ExtractI3d => "extract_i3d",
            Stage::ExtractDa3d => "extract_da3d",
            Stage::ExtractChan => "extract_chan",
            Stage::SvmInfer => "svm_infer",
            Stage::CnnInfer => "cnn_infer",
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown stage '{s}'")))
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// In-memory inputs for every stage: one live flash pair and one live
/// stereo pair at the working resolution, plus untrained models of the
/// deployed shapes.
pub struct LatencyFixture {
    pub scene: SceneSpec,
    pub flash: FlashPair,
    pub stereo: StereoPair,
    pub i3d: FeatureVector,
    pub svm: LinearModel,
    pub cnn: CnnModel,
}

fn live_capture(modality: Modality, seed: u64) -> Result<(SceneSpec, Capture)> {
    let cfg = SynthConfig {
        subjects: 1,
        live: 1,
        modality,
        ground_truth_maps: false,
        ..SynthConfig::default()
    };
    let s = Synthesizer::new(cfg, seed)?.sample(0)?;
    debug_assert_eq!(s.meta.label, Label::Live);
    Ok((s.scene, s.capture))
}

impl LatencyFixture {
    pub fn new(seed: u64) -> Result<Self> {
        let (scene, flash) = match live_capture(Modality::FlashPair, seed)? {
            (s, Capture::Flash(p)) => (s, p),
            _ => return Err(Error::Render("expected a flash pair".into())),
        };
        let stereo = match live_capture(Modality::StereoPair, seed)?.1 {
            Capture::Stereo(p) => p,
            _ => return Err(Error::Render("expected a stereo pair".into())),
        };
        let i3d = extract_i3d(&flash, RegionKind::Face, I3D_EPS)?;
        let layout = FeatureLayout::I3dPatch {
            w: PATCH_SIZE,
            h: PATCH_SIZE,
        };
        let svm = LinearModel {
            layout,
            weights: vec![1e-3; layout.len()],
            bias: 0.0,
            standardizer: Standardizer::identity(layout.len()),
            params: SvmParams::default(),
            objective_trace: Vec::new(),
        };
        let cnn = CnnModel::new(layout, seed)?;
        Ok(LatencyFixture {
            scene,
            flash,
            stereo,
            i3d,
            svm,
            cnn,
        })
    }

    /// Runs `stage` once.
    pub fn run(&self, stage: Stage) -> Result<()> {
        match stage {
            Stage::LandmarksStub => {
                black_box(landmarks_for_scene(&self.scene)?);
            }
            Stage::ExtractI3d => {
                black_box(extract_i3d(&self.flash, RegionKind::Face, I3D_EPS)?);
            }
            Stage::ExtractDa3d => {
                black_box(extract_da3d(&self.stereo, RegionKind::Face, DA3D_GRAD_EPS)?);
            }
            Stage::ExtractChan => {
                black_box(extract_chan(&self.flash)?);
            }
            Stage::SvmInfer => {
                black_box(svm_predict(&self.svm, &self.i3d)?);
            }
            Stage::CnnInfer => {
                black_box(cnn_predict(&self.cnn, &self.i3d)?);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub stage: Stage,
    pub iters: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
}

/// Wall-clock timing of `stage` after a warmup of a tenth of `iters`
/// (at least three runs). The p95 is the nearest-rank percentile.
pub fn bench_latency(fixture: &LatencyFixture, stage: Stage, iters: usize) -> Result<LatencyStats> {
    if iters < MIN_ITERS {
        return Err(Error::Argument(format!("at least {MIN_ITERS} iterations are required, got {iters}")));
    }
    for _ in 0..(iters / 10).max(3) {
        fixture.run(stage)?;
    }
    let mut ms = Vec::with_capacity(iters);
    for _ in 0..iters {
        let t = Instant::now();
        fixture.run(stage)?;
        ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    ms.sort_by(f64::total_cmp);
    let median_ms = if iters % 2 == 1 {
        ms[iters / 2]
    } else {
        0.5 * (ms[iters / 2 - 1] + ms[iters / 2])
    };
    let rank = ((0.95 * iters as f64).ceil() as usize).clamp(1, iters);
    Ok(LatencyStats {
        stage,
        iters,
        median_ms,
        p95_ms: ms[rank - 1],
    })
}
