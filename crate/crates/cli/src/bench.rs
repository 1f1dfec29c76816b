use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;

use liveness_core::eval::{bench_latency, LatencyFixture, Stage};

use crate::output::write_json;
use crate::Context;

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    /// Stages to time (repeatable); all when omitted.
    #[arg(long)]
    pub stage: Vec<Stage>,
    /// Timed runs per stage.
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    /// Output directory for `latency.json`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(ctx: &Context, a: &BenchArgs) -> Result<()> {
    let stages = if a.stage.is_empty() {
        Stage::ALL.to_vec()
    } else {
        a.stage.clone()
    };
    let fixture = LatencyFixture::new(ctx.global.seed)?;
    let mut stats = Vec::with_capacity(stages.len());
    for stage in stages {
        let s = bench_latency(&fixture, stage, a.iters)?;
        log::info!("{stage}: median {:.3} ms, p95 {:.3} ms", s.median_ms, s.p95_ms);
        stats.push(s);
    }
    let out = ctx.out_dir(&a.out, "bench", a)?;
    write_json(&out.join("latency.json"), &stats)?;
    Ok(())
}
