use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;

use liveness_core::classifiers::{train_classifier, ClassifierKind, TrainOptions};
use liveness_core::eval::{labeled, Target};
use liveness_core::features::{read_features_jsonl, FeatureVector};

use crate::output::usage;
use crate::Context;

/// Hyperparameter overrides shared by `train` and `eval`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Hyper {
    /// SVM regularization strength.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Training epochs (either model).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// CNN learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
}

impl Hyper {
    pub fn options(&self) -> TrainOptions {
        let mut o = TrainOptions::default();
        if let Some(l) = self.lambda {
            o.svm.lambda = l;
        }
        if let Some(e) = self.epochs {
            o.svm.epochs = e;
            o.cnn.epochs = e;
        }
        if let Some(lr) = self.lr {
            o.cnn.lr = lr;
        }
        o
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Feature file written by `extract`.
    #[arg(long)]
    pub features: PathBuf,
    /// svm or cnn.
    #[arg(long)]
    pub model: ClassifierKind,
    /// liveness (live vs attack) or direction (left vs right flash).
    #[arg(long, default_value = "liveness")]
    pub target: Target,
    /// Model file (JSON).
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub hyper: Hyper,
}

pub fn read_features(path: &PathBuf) -> Result<Vec<FeatureVector>> {
    let features = read_features_jsonl(path)?;
    if features.is_empty() {
        return Err(usage(format!("{} holds no feature vectors", path.display())));
    }
    Ok(features)
}

pub fn run(ctx: &Context, a: &TrainArgs) -> Result<()> {
    let features = read_features(&a.features)?;
    let (x, y) = labeled(&features, a.target);
    let x: Vec<FeatureVector> = x.into_iter().cloned().collect();
    let model = train_classifier(a.model, &x, &y, &a.hyper.options(), ctx.global.seed)?;
    let out = ctx.out_file(&a.out, "train", a)?;
    model.save(&out)?;
    log::info!(
        "trained {} {} model on {} of {} vectors",
        a.model,
        a.target,
        x.len(),
        features.len()
    );
    Ok(())
}
