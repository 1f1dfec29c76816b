use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use serde::Serialize;

use liveness_core::classifiers::{Classifier, ClassifierKind};
use liveness_core::eval::{
    labeled, leave_one_subject_out, metrics, repeated_holdout, resolution_sweep, HoldoutConfig, Target,
};
use liveness_core::features::{FeatureKind, RegionKind};

use crate::output::{usage, write_json, write_text};
use crate::synth::{self, SynthArgs};
use crate::train::{read_features, Hyper};
use crate::Context;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Repeated stratified train/test splits.
    Holdout,
    /// One fold per subject.
    Loso,
    /// Holdout accuracy per resolution on one synthesized corpus.
    Resolution,
    /// Score a trained model on a feature file.
    Test,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Feature file (holdout, loso, test).
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// svm or cnn (holdout, loso, resolution).
    #[arg(long, default_value = "svm")]
    pub model: ClassifierKind,
    /// Trained model file (test).
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    #[arg(long, default_value = "liveness")]
    pub target: Target,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0.8)]
    pub frac_train: f64,
    /// Pick the threshold minimizing training HTER instead of zero.
    #[arg(long)]
    pub tune_threshold: bool,
    #[command(flatten)]
    pub hyper: Hyper,
    /// Resolutions to sweep, e.g. 1920x1080,480x270 (resolution).
    #[arg(long, value_delimiter = ',', default_value = "1920x1080,480x270")]
    pub resolutions: Vec<String>,
    /// Features to compare (resolution).
    #[arg(long = "feature", value_delimiter = ',', default_value = "i3d,chan")]
    pub kinds: Vec<FeatureKind>,
    #[arg(long, default_value = "face")]
    pub region: RegionKind,
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
    /// Sweep stereo captures instead of flash pairs.
    #[arg(long)]
    pub stereo: bool,
}

fn parse_resolution(s: &str) -> Result<(usize, usize)> {
    let bad = || usage(format!("resolution '{s}' is not WIDTHxHEIGHT"));
    let (w, h) = s.split_once('x').ok_or_else(bad)?;
    Ok((w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?))
}

fn holdout_config(ctx: &Context, a: &EvalArgs) -> HoldoutConfig {
    HoldoutConfig {
        classifier: a.model,
        target: a.target,
        frac_train: a.frac_train,
        repeats: a.repeats,
        seed: ctx.global.seed,
        tune_threshold: a.tune_threshold,
        train: a.hyper.options(),
    }
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str, mode: Mode) -> Result<&'a PathBuf> {
    value
        .as_ref()
        .ok_or_else(|| usage(format!("--{flag} is required with --mode {mode:?}").to_lowercase()))
}

pub fn run(ctx: &Context, a: &EvalArgs) -> Result<()> {
    match a.mode {
        Mode::Holdout => {
            let features = read_features(required(&a.features, "features", a.mode)?)?;
            let report = repeated_holdout(&features, &holdout_config(ctx, a))?;
            let out = ctx.out_dir(&a.out, "eval", a)?;
            report.write_json(out.join("report.json"))?;
            write_text(&out.join("report.csv"), &report.to_csv())?;
            let g = &report.aggregate;
            log::info!("holdout accuracy {:.4} ± {:.4} over {} runs", g.mean_acc, g.std_acc, report.runs.len());
        }
        Mode::Loso => {
            let features = read_features(required(&a.features, "features", a.mode)?)?;
            let report = leave_one_subject_out(&features, &holdout_config(ctx, a))?;
            let out = ctx.out_dir(&a.out, "eval", a)?;
            write_json(&out.join("report.json"), &report)?;
            write_text(&out.join("report.csv"), &report.to_csv())?;
            log::info!(
                "leave-one-subject-out accuracy {:.4} over {} folds",
                report.mean_accuracy,
                report.folds.len()
            );
        }
        Mode::Resolution => {
            let resolutions = a
                .resolutions
                .iter()
                .map(|s| parse_resolution(s))
                .collect::<Result<Vec<_>>>()?;
            let cfg = synth::config(
                ctx,
                &SynthArgs {
                    out: a.out.clone(),
                    subjects: a.subjects,
                    live: a.live,
                    spoof_flat: a.spoof_flat,
                    spoof_curved: a.spoof_curved,
                    spoof_screen: a.spoof_screen,
                    stereo: a.stereo,
                    flash: !a.stereo,
                    flash_sides: false,
                    noise: 0.005,
                    no_ground_truth: true,
                },
            );
            cfg.validate()?;
            let table = resolution_sweep(
                &cfg,
                ctx.global.seed,
                &resolutions,
                &a.kinds,
                a.region,
                &holdout_config(ctx, a),
            )?;
            let out = ctx.out_dir(&a.out, "eval", a)?;
            write_json(&out.join("report.json"), &table)?;
            write_text(&out.join("report.csv"), &table.to_csv())?;
            for r in &table.rows {
                log::info!("{}x{} {}: {:.4}", r.width, r.height, r.feature, r.report.aggregate.mean_acc);
            }
        }
        Mode::Test => {
            let model = Classifier::load(required(&a.model_file, "model-file", a.mode)?)?;
            let features = read_features(required(&a.features, "features", a.mode)?)?;
            let (x, y) = labeled(&features, a.target);
            let pred = x
                .iter()
                .map(|f| model.predict(f).map(|p| p.0))
                .collect::<liveness_core::Result<Vec<i8>>>()?;
            let m = metrics(&pred, &y)?;
            let out = ctx.out_dir(&a.out, "eval", a)?;
            write_json(&out.join("report.json"), &m)?;
            log::info!("test accuracy {:.4} on {} vectors", m.accuracy, y.len());
        }
    }
    Ok(())
}
