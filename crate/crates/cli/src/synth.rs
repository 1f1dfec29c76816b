use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;

use liveness_core::sim::{synth_dataset, Modality, SynthConfig};

use crate::Context;

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub subjects: usize,
    #[arg(long, default_value_t = 0)]
    pub live: usize,
    #[arg(long, default_value_t = 0)]
    pub spoof_flat: usize,
    #[arg(long, default_value_t = 0)]
    pub spoof_curved: usize,
    #[arg(long, default_value_t = 0)]
    pub spoof_screen: usize,
    /// Stereo pairs instead of flash pairs.
    #[arg(long, conflicts_with = "flash")]
    pub stereo: bool,
    /// Flash pairs (the default).
    #[arg(long)]
    pub flash: bool,
    /// Fire the flash from the left or right (half each) instead of near the lens.
    #[arg(long, conflicts_with = "stereo")]
    pub flash_sides: bool,
    /// Sensor noise standard deviation.
    #[arg(long, default_value_t = 0.005)]
    pub noise: f64,
    /// Skip the normal/height/albedo maps.
    #[arg(long)]
    pub no_ground_truth: bool,
}

/// Simulator configuration for the shared flags.
pub fn config(ctx: &Context, a: &SynthArgs) -> SynthConfig {
    SynthConfig {
        subjects: a.subjects,
        live: a.live,
        spoof_flat: a.spoof_flat,
        spoof_curved: a.spoof_curved,
        spoof_screen: a.spoof_screen,
        modality: if a.stereo {
            Modality::StereoPair
        } else {
            Modality::FlashPair
        },
        flash_left_fraction: a.flash_sides.then_some(0.5),
        width: ctx.global.width,
        height: ctx.global.height,
        noise_sigma: a.noise,
        ground_truth_maps: !a.no_ground_truth,
        ..SynthConfig::default()
    }
}

pub fn run(ctx: &Context, a: &SynthArgs) -> Result<()> {
    let cfg = config(ctx, a);
    cfg.validate()?;
    let out = ctx.out_dir(&a.out, "synth", a)?;
    let manifest = synth_dataset(&cfg, ctx.global.seed, &out)?;
    log::info!("wrote {} records to {}", manifest.records.len(), out.display());
    Ok(())
}
