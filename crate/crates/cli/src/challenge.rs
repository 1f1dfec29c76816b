use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use serde::Serialize;

use liveness_core::classifiers::Classifier;
use liveness_core::protocol::{
    generate_challenge, load_session, render_session, verify_challenge, write_session, ChallengeScript,
    SessionTranscript,
};
use liveness_core::sim::{FlashPair, Label, SynthConfig};

use crate::output::write_json;
use crate::Context;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Simulate {
    /// A live subject following the script.
    Honest,
    /// One recorded live response played back at every step.
    Replay,
    /// A flat print held up to the camera.
    Flat,
    /// A live subject whose last step shows the wrong side.
    WrongSide,
}

#[derive(Debug, Args, Serialize)]
pub struct ChallengeArgs {
    /// Liveness model file.
    #[arg(long)]
    pub liveness: PathBuf,
    /// Flash-direction model file.
    #[arg(long)]
    pub direction: PathBuf,
    /// Stored session directory to verify.
    #[arg(long, conflicts_with = "simulate", required_unless_present = "simulate")]
    pub session: Option<PathBuf>,
    /// Render a session of this kind instead of reading one.
    #[arg(long, value_enum)]
    pub simulate: Option<Simulate>,
    /// Steps in a simulated script.
    #[arg(long, default_value_t = 4)]
    pub script_len: usize,
    /// Smallest direction margin a step may pass with.
    #[arg(long, default_value_t = 0.0)]
    pub margin_floor: f64,
    /// Output directory for the transcript (and a simulated session).
    #[arg(long)]
    pub out: PathBuf,
}

fn simulate(ctx: &Context, kind: Simulate, script: &ChallengeScript) -> Result<Vec<FlashPair>> {
    let cfg = SynthConfig {
        width: ctx.global.width,
        height: ctx.global.height,
        ground_truth_maps: false,
        ..SynthConfig::default()
    };
    let seed = ctx.global.seed;
    Ok(match kind {
        Simulate::Honest => render_session(&cfg, seed, Label::Live, script)?,
        Simulate::Flat => render_session(&cfg, seed, Label::SpoofFlat, script)?,
        Simulate::Replay => {
            let recorded = generate_challenge(1, seed.wrapping_add(1))?;
            let pair = render_session(&cfg, seed, Label::Live, &recorded)?.remove(0);
            vec![pair; script.len()]
        }
        Simulate::WrongSide => {
            let mut wrong = script.clone();
            let last = wrong.steps.len() - 1;
            wrong.steps[last] = wrong.steps[last].opposite();
            render_session(&cfg, seed, Label::Live, &wrong)?
        }
    })
}

pub fn run(ctx: &Context, a: &ChallengeArgs) -> Result<()> {
    let liveness = Classifier::load(&a.liveness)?;
    let direction = Classifier::load(&a.direction)?;
    let (mut transcript, pairs, out) = match (&a.session, a.simulate) {
        (Some(dir), _) => {
            let (t, pairs) = load_session(dir)?;
            (t, pairs, ctx.out_dir(&a.out, "challenge", a)?)
        }
        (None, Some(kind)) => {
            let script = generate_challenge(a.script_len, ctx.global.seed)?;
            let pairs = simulate(ctx, kind, &script)?;
            let out = ctx.out_dir(&a.out, "challenge", a)?;
            let t: SessionTranscript = write_session(out.join("session"), &script, &pairs)?;
            (t, pairs, out)
        }
        (None, None) => unreachable!("clap requires --session or --simulate"),
    };
    let verdict = verify_challenge(&transcript.script, &pairs, &liveness, &direction, a.margin_floor);
    match verdict.failure_reason {
        None => log::info!("session {} accepted", transcript.nonce),
        Some(r) => log::info!(
            "session {} rejected: {r} at step {}",
            transcript.nonce,
            verdict.failed_step.map_or("-".into(), |s| s.to_string())
        ),
    }
    transcript.verdict = Some(verdict);
    write_json(&out.join("transcript.json"), &transcript)?;
    Ok(())
}
