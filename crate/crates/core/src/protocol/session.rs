use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChallengeScript, SessionVerdict};
use crate::error::{Error, Result};
use crate::geometry::LandmarkSet;
use crate::image::{read_pgm, write_pgm16};
use crate::sim::{Capture, FlashPair, Label, Modality, SynthConfig, Synthesizer};

pub const SESSION_FILE: &str = "session.json";

/// Files of one captured step, relative to the session directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureFiles {
    /// Ambient then flash shot.
    pub images: [String; 2],
    pub landmarks: [String; 2],
}

/// Audit record of a session: the script, where each step's pair lives,
/// and the verdict once one has been reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub nonce: String,
    pub script: ChallengeScript,
    pub captures: Vec<CaptureFiles>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<SessionVerdict>,
}

impl SessionTranscript {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }
}

/// Simulates a session: one subject (or one attack of `label`) captured
/// once per step with the flash on the scripted side. Each step is a
/// fresh capture with its own ambient light, framing and hand jitter.
pub fn render_session(
    cfg: &SynthConfig,
    seed: u64,
    label: Label,
    script: &ChallengeScript,
) -> Result<Vec<FlashPair>> {
    let n = script.len();
    let mut c = cfg.clone();
    c.subjects = 1;
    c.modality = Modality::FlashPair;
    c.flash_left_fraction = Some(0.5);
    c.live = 0;
    c.spoof_flat = 0;
    c.spoof_curved = 0;
    c.spoof_screen = 0;
    match label {
        Label::Live => c.live = n,
        Label::SpoofFlat => c.spoof_flat = n,
        Label::SpoofCurved => c.spoof_curved = n,
        Label::SpoofScreen => c.spoof_screen = n,
    }
    let synth = Synthesizer::new(c, seed)?;
    script
        .steps
        .iter()
        .enumerate()
        .map(|(i, &side)| match synth.sample_with_side(i, Some(side))?.capture {
            Capture::Flash(p) => Ok(p),
            Capture::Stereo(_) => Err(Error::Render("session rendered a stereo capture".into())),
        })
        .collect()
}

/// Writes each step's pair into `dir` and the transcript (without a
/// verdict) to `dir/session.json`.
pub fn write_session(dir: impl AsRef<Path>, script: &ChallengeScript, pairs: &[FlashPair]) -> Result<SessionTranscript> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut captures = Vec::with_capacity(pairs.len());
    for (i, p) in pairs.iter().enumerate() {
        let files = CaptureFiles {
            images: [format!("step{i:02}_ambient.pgm"), format!("step{i:02}_flash.pgm")],
            landmarks: [format!("step{i:02}_ambient.csv"), format!("step{i:02}_flash.csv")],
        };
        write_pgm16(dir.join(&files.images[0]), &p.ambient)?;
        write_pgm16(dir.join(&files.images[1]), &p.flash)?;
        p.lm_ambient.write_csv(dir.join(&files.landmarks[0]))?;
        p.lm_flash.write_csv(dir.join(&files.landmarks[1]))?;
        captures.push(files);
    }
    let t = SessionTranscript {
        nonce: script.nonce.clone(),
        script: script.clone(),
        captures,
        verdict: None,
    };
    t.write(dir.join(SESSION_FILE))?;
    Ok(t)
}

/// Reads `dir/session.json` and the pairs it references.
pub fn load_session(dir: impl AsRef<Path>) -> Result<(SessionTranscript, Vec<FlashPair>)> {
    let dir = dir.as_ref();
    let t = SessionTranscript::read(dir.join(SESSION_FILE))?;
    let pairs = t
        .captures
        .iter()
        .map(|c| {
            Ok(FlashPair {
                ambient: read_pgm(dir.join(&c.images[0]))?,
                flash: read_pgm(dir.join(&c.images[1]))?,
                lm_ambient: LandmarkSet::read_csv(dir.join(&c.landmarks[0]))?,
                lm_flash: LandmarkSet::read_csv(dir.join(&c.landmarks[1]))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((t, pairs))
}
