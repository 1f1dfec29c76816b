//! Active challenge-response liveness: a random left/right flash script,
//! per-step liveness and light-direction checks, and session verdicts.

mod session;

pub use session::{load_session, render_session, write_session, CaptureFiles, SessionTranscript, SESSION_FILE};

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifiers::{svm_train, Classifier, LinearModel, SvmParams};
use crate::error::{Error, Result};
use crate::features::{extract_i3d, FeatureLayout, FeatureVector, RegionKind, I3D_EPS};
use crate::sim::{stream_rng, FlashPair, FlashSide};

/// Ordered flash sides the verifier fires, with an opaque session id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeScript {
    pub steps: Vec<FlashSide>,
    pub nonce: String,
    pub seed: u64,
}

impl ChallengeScript {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// `n` independent fair left/right draws from `seed`.
pub fn generate_challenge(n: usize, seed: u64) -> Result<ChallengeScript> {
    if n == 0 {
        return Err(Error::Argument("a challenge needs at least one step".into()));
    }
    let mut rng = stream_rng(seed, 0, 3);
    let nonce = format!("{:016x}", rng.random::<u64>());
    let steps = (0..n)
        .map(|_| if rng.random::<bool>() { FlashSide::Left } else { FlashSide::Right })
        .collect();
    Ok(ChallengeScript { steps, nonce, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    LivenessFail,
    DirectionMismatch,
    Incomplete,
}

impl FailureReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureReason::LivenessFail => "liveness_fail",
            FailureReason::DirectionMismatch => "direction_mismatch",
            FailureReason::Incomplete => "incomplete",
        }
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub index: usize,
    pub expected: FlashSide,
    pub predicted: Option<FlashSide>,
    /// Direction margin; positive means right.
    pub margin: Option<f64>,
    pub live: Option<bool>,
    pub liveness_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StepResult {
    fn failure(&self, margin_floor: f64) -> Option<FailureReason> {
        if self.live != Some(true) {
            return Some(FailureReason::LivenessFail);
        }
        let confident = self.margin.is_some_and(|m| m.abs() >= margin_floor);
        if self.predicted != Some(self.expected) || !confident {
            return Some(FailureReason::DirectionMismatch);
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionVerdict {
    pub accepted: bool,
    pub per_step: Vec<StepResult>,
    pub failure_reason: Option<FailureReason>,
    /// First failing step, if the failure is tied to one.
    pub failed_step: Option<usize>,
}

impl SessionVerdict {
    fn incomplete() -> Self {
        SessionVerdict {
            accepted: false,
            per_step: Vec::new(),
            failure_reason: Some(FailureReason::Incomplete),
            failed_step: None,
        }
    }
}

/// Checks one step: liveness first, then the light direction.
fn check_step(
    index: usize,
    expected: FlashSide,
    fv: Result<FeatureVector>,
    liveness: &Classifier,
    direction: &Classifier,
) -> StepResult {
    let mut step = StepResult {
        index,
        expected,
        predicted: None,
        margin: None,
        live: None,
        liveness_margin: None,
        error: None,
    };
    let run = |step: &mut StepResult| -> Result<()> {
        let fv = fv?;
        let (label, m) = liveness.predict(&fv)?;
        step.live = Some(label == 1);
        step.liveness_margin = Some(m);
        let (side, m) = direction.predict(&fv)?;
        step.predicted = Some(if side == 1 { FlashSide::Right } else { FlashSide::Left });
        step.margin = Some(m);
        Ok(())
    };
    if let Err(e) = run(&mut step) {
        step.error = Some(e.to_string());
    }
    step
}

/// Verdict from per-step features. Every step is scored; the session is
/// rejected for the first failing step's reason.
pub fn verify_features(
    script: &ChallengeScript,
    features: Vec<Result<FeatureVector>>,
    liveness: &Classifier,
    direction: &Classifier,
    margin_floor: f64,
) -> SessionVerdict {
    if features.len() != script.len() {
        return SessionVerdict::incomplete();
    }
    let per_step: Vec<StepResult> = script
        .steps
        .iter()
        .zip(features)
        .enumerate()
        .map(|(i, (&side, fv))| check_step(i, side, fv, liveness, direction))
        .collect();
    let first = per_step
        .iter()
        .find_map(|s| s.failure(margin_floor).map(|r| (s.index, r)));
    SessionVerdict {
        accepted: first.is_none(),
        per_step,
        failure_reason: first.map(|(_, r)| r),
        failed_step: first.map(|(i, _)| i),
    }
}

/// Extracts face I3D from each captured pair and scores the session. A
/// step whose features cannot be computed fails liveness.
pub fn verify_challenge(
    script: &ChallengeScript,
    captures: &[FlashPair],
    liveness: &Classifier,
    direction: &Classifier,
    margin_floor: f64,
) -> SessionVerdict {
    if captures.len() != script.len() {
        return SessionVerdict::incomplete();
    }
    let features = captures
        .iter()
        .map(|p| extract_i3d(p, RegionKind::Face, I3D_EPS))
        .collect();
    verify_features(script, features, liveness, direction, margin_floor)
}

/// Linear left (-1) / right (+1) classifier on I3D patches of live
/// samples. Samples without a flash side or not live are ignored.
pub fn train_direction_model(features: &[FeatureVector], params: &SvmParams) -> Result<LinearModel> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for fv in features {
        if !matches!(fv.layout, FeatureLayout::I3dPatch { .. }) {
            return Err(Error::Argument(format!(
                "direction model needs i3d patches, got {}",
                fv.layout.name()
            )));
        }
        if fv.label.is_some_and(|l| !l.is_live()) {
            continue;
        }
        if let Some(s) = fv.side_label() {
            x.push(fv.clone());
            y.push(s);
        }
    }
    svm_train(&x, &y, params)
}
