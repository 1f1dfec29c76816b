use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use serde::Serialize;

use liveness_core::features::{extract_manifest, write_features_jsonl, ExtractOptions, FeatureKind, RegionKind};
use liveness_core::sim::DatasetManifest;

use crate::Context;

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    /// Dataset manifest written by `synth`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// i3d, da3d, lbp or chan.
    #[arg(long)]
    pub feature: FeatureKind,
    /// face or nose.
    #[arg(long, default_value = "face")]
    pub region: RegionKind,
    /// Feature file (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(ctx: &Context, a: &ExtractArgs) -> Result<()> {
    let manifest = DatasetManifest::read(&a.manifest)?;
    let opts = ExtractOptions::new(a.feature, a.region);
    let (features, skipped) = extract_manifest(&manifest, &opts)?;
    for s in &skipped {
        log::warn!("skipped {}: {}", s.sample_id, s.error);
    }
    if features.is_empty() && !manifest.records.is_empty() {
        bail!("every record failed extraction");
    }
    let out = ctx.out_file(&a.out, "extract", a)?;
    write_features_jsonl(&out, &features)?;
    log::info!(
        "extracted {} {} vectors, skipped {}",
        features.len(),
        a.feature,
        skipped.len()
    );
    Ok(())
}
