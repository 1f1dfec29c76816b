use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics, tune_threshold};
use crate::classifiers::{train_classifier, Classifier, ClassifierKind, TrainOptions};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::sim::stream_rng;

/// Fewest samples per class a holdout accepts.
pub const MIN_PER_CLASS: usize = 20;

/// What the binary label of a sample is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Live (+1) against every attack (-1).
    #[default]
    Liveness,
    /// Right flash (+1) against left flash (-1), live samples only.
    Direction,
}

impl Target {
    pub fn as_str(self) -> &'static str {
        match self {
            Target::Liveness => "liveness",
            Target::Direction => "direction",
        }
    }

    pub fn label(self, fv: &FeatureVector) -> Option<i8> {
        match self {
            Target::Liveness => fv.liveness_label(),
            Target::Direction => {
                if fv.label.is_some_and(|l| !l.is_live()) {
                    None
                } else {
                    fv.side_label()
                }
            }
        }
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "liveness" => Ok(Target::Liveness),
            "direction" => Ok(Target::Direction),
            _ => Err(Error::Argument(format!("unknown target '{s}'"))),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Samples usable for `target` with their labels, in input order.
pub fn labeled(features: &[FeatureVector], target: Target) -> (Vec<&FeatureVector>, Vec<i8>) {
    features
        .iter()
        .filter_map(|f| target.label(f).map(|y| (f, y)))
        .unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldoutConfig {
    pub classifier: ClassifierKind,
    pub target: Target,
    pub frac_train: f64,
    pub repeats: usize,
    pub seed: u64,
    /// Pick the decision threshold minimizing HTER on the training split
    /// instead of using zero.
    pub tune_threshold: bool,
    pub train: TrainOptions,
}

impl Default for HoldoutConfig {
    fn default() -> Self {
        HoldoutConfig {
            classifier: ClassifierKind::Svm,
            target: Target::Liveness,
            frac_train: 0.8,
            repeats: 10,
            seed: 0,
            tune_threshold: false,
            train: TrainOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub threshold: f64,
    pub accuracy: f64,
    pub far: Option<f64>,
    pub frr: Option<f64>,
    pub hter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_acc: f64,
    /// Sample standard deviation over runs (zero for a single run).
    pub std_acc: f64,
    pub mean_hter: Option<f64>,
    pub std_hter: Option<f64>,
}

impl Aggregate {
    fn of(runs: &[RunResult]) -> Self {
        let acc: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
        let hter: Option<Vec<f64>> = runs.iter().map(|r| r.hter).collect();
        let (mean_acc, std_acc) = mean_std(&acc);
        let (mean_hter, std_hter) = match hter {
            Some(h) if !h.is_empty() => {
                let (m, s) = mean_std(&h);
                (Some(m), Some(s))
            }
            _ => (None, None),
        };
        Aggregate {
            mean_acc,
            std_acc,
            mean_hter,
            std_hter,
        }
    }
}

pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub runs: Vec<RunResult>,
    pub aggregate: Aggregate,
    /// Settings that produced the report.
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn new(runs: Vec<RunResult>, config: serde_json::Value) -> Self {
        let aggregate = Aggregate::of(&runs);
        EvalReport { runs, aggregate, config }
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    /// One row per run.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,n_train,n_test,threshold,accuracy,far,frr,hter\n");
        for r in &self.runs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.seed,
                r.n_train,
                r.n_test,
                r.threshold,
                r.accuracy,
                opt(r.far),
                opt(r.frr),
                opt(r.hter)
            ));
        }
        out
    }
}

pub(crate) fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn class_counts(y: &[i8]) -> (usize, usize) {
    let pos = y.iter().filter(|&&v| v == 1).count();
    (pos, y.len() - pos)
}

/// Trains on `train`, picks the threshold, and scores `test`.
pub(crate) fn fit_and_score(
    train: &[FeatureVector],
    y_train: &[i8],
    test: &[FeatureVector],
    y_test: &[i8],
    cfg: &HoldoutConfig,
    seed: u64,
) -> Result<RunResult> {
    let model = train_classifier(cfg.classifier, train, y_train, &cfg.train, seed)?;
    let threshold = if cfg.tune_threshold {
        let m = margins(&model, train)?;
        tune_threshold(&m, y_train)?
    } else {
        0.0
    };
    let pred: Vec<i8> = margins(&model, test)?
        .into_iter()
        .map(|m| if m >= threshold { 1 } else { -1 })
        .collect();
    let m = metrics(&pred, y_test)?;
    Ok(RunResult {
        seed,
        n_train: train.len(),
        n_test: test.len(),
        threshold,
        accuracy: m.accuracy,
        far: m.far,
        frr: m.frr,
        hter: m.hter,
    })
}

fn margins(model: &Classifier, x: &[FeatureVector]) -> Result<Vec<f64>> {
    x.iter().map(|f| model.predict(f).map(|p| p.1)).collect()
}

/// Seed of run `run` under master seed `seed`.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    use rand::Rng;
    stream_rng(seed, run as u64, 5).random()
}

/// Repeated stratified train/test splits: each repeat shuffles every class
/// with its own seeded stream, trains on the first `frac_train` of each,
/// and tests on the rest.
pub fn repeated_holdout(features: &[FeatureVector], cfg: &HoldoutConfig) -> Result<EvalReport> {
    if !(cfg.frac_train > 0.0 && cfg.frac_train < 1.0) {
        return Err(Error::Argument(format!("frac_train {} outside (0, 1)", cfg.frac_train)));
    }
    if cfg.repeats == 0 {
        return Err(Error::Argument("repeats must be positive".into()));
    }
    let (x, y) = labeled(features, cfg.target);
    let (pos, neg) = class_counts(&y);
    if pos.min(neg) < MIN_PER_CLASS {
        return Err(Error::InsufficientData {
            needed: MIN_PER_CLASS,
            got: pos.min(neg),
        });
    }
    let classes: Vec<Vec<usize>> = [1i8, -1]
        .iter()
        .map(|&c| (0..y.len()).filter(|&i| y[i] == c).collect())
        .collect();
    let runs = (0..cfg.repeats)
        .into_par_iter()
        .map(|run| {
            let seed = run_seed(cfg.seed, run);
            let mut rng = stream_rng(cfg.seed, run as u64, 6);
            let (mut tr, mut te) = (Vec::new(), Vec::new());
            for class in &classes {
                let mut idx = class.clone();
                idx.shuffle(&mut rng);
                let k = ((cfg.frac_train * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
                tr.extend_from_slice(&idx[..k]);
                te.extend_from_slice(&idx[k..]);
            }
            let pick = |ix: &[usize]| -> (Vec<FeatureVector>, Vec<i8>) {
                ix.iter().map(|&i| (x[i].clone(), y[i])).unzip()
            };
            let (xtr, ytr) = pick(&tr);
            let (xte, yte) = pick(&te);
            fit_and_score(&xtr, &ytr, &xte, &yte, cfg, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::new(runs, serde_json::to_value(cfg)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub subject_id: String,
    pub n_test: usize,
    pub accuracy: f64,
    pub far: Option<f64>,
    pub frr: Option<f64>,
    pub hter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosoReport {
    pub mean_accuracy: f64,
    pub folds: Vec<Fold>,
    pub config: serde_json::Value,
}

impl LosoReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subject_id,n_test,accuracy,far,frr,hter\n");
        for f in &self.folds {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                f.subject_id,
                f.n_test,
                f.accuracy,
                opt(f.far),
                opt(f.frr),
                opt(f.hter)
            ));
        }
        out
    }
}

/// One fold per subject, in subject-id order: train on everyone else,
/// test on that subject. Every fold trains with the same seed.
pub fn leave_one_subject_out(features: &[FeatureVector], cfg: &HoldoutConfig) -> Result<LosoReport> {
    let (x, y) = labeled(features, cfg.target);
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, f) in x.iter().enumerate() {
        let id = f
            .subject_id
            .as_deref()
            .ok_or_else(|| Error::Argument(format!("sample {} has no subject id", f.sample_id)))?;
        by_subject.entry(id).or_default().push(i);
    }
    if by_subject.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: by_subject.len(),
        });
    }
    let seed = run_seed(cfg.seed, 0);
    let subjects: Vec<(&str, Vec<usize>)> = by_subject.into_iter().collect();
    let folds = subjects
        .par_iter()
        .map(|(id, test)| {
            let mut in_test = vec![false; x.len()];
            test.iter().for_each(|&i| in_test[i] = true);
            let (mut xtr, mut ytr, mut xte, mut yte) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for i in 0..x.len() {
                if in_test[i] {
                    xte.push(x[i].clone());
                    yte.push(y[i]);
                } else {
                    xtr.push(x[i].clone());
                    ytr.push(y[i]);
                }
            }
            let r = fit_and_score(&xtr, &ytr, &xte, &yte, cfg, seed)?;
            Ok(Fold {
                subject_id: id.to_string(),
                n_test: r.n_test,
                accuracy: r.accuracy,
                far: r.far,
                frr: r.frr,
                hter: r.hter,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_accuracy = folds.iter().map(|f| f.accuracy).sum::<f64>() / folds.len() as f64;
    Ok(LosoReport {
        mean_accuracy,
        folds,
        config: serde_json::to_value(cfg)?,
    })
}
