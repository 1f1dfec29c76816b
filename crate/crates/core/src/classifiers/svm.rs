use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::blob;
use crate::error::{Error, Result};
use crate::features::{FeatureLayout, FeatureVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
    /// Initial step size; capped at `1 / lambda`.
    pub eta0: f64,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            lambda: 1e-3,
            epochs: 20,
            eta0: 0.05,
            seed: 0,
        }
    }
}

/// Per-dimension z-score fitted on a training set. Constant dimensions get
/// a zero scale and drop out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    #[serde(with = "blob::f64s")]
    pub mean: Vec<f64>,
    #[serde(with = "blob::f64s")]
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
        let d = first.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("rows differ in length".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, &x) in mean.iter_mut().zip(r.iter()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, &x), &m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((&v, &m), &s)| (v - m) * s)
            .collect()
    }
}

/// Linear SVM in standardized feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub layout: FeatureLayout,
    #[serde(with = "blob::f64s")]
    pub weights: Vec<f64>,
    pub bias: f64,
    pub standardizer: Standardizer,
    pub params: SvmParams,
    /// Objective of the returned iterate after each epoch.
    pub objective_trace: Vec<f64>,
}

impl LinearModel {
    pub fn validate(&self) -> Result<()> {
        let d = self.layout.len();
        if self.weights.len() != d || self.standardizer.dim() != d {
            return Err(Error::Shape(format!(
                "{} model expects {d} weights, has {} (standardizer {})",
                self.layout.name(),
                self.weights.len(),
                self.standardizer.dim()
            )));
        }
        let finite = self.weights.iter().all(|w| w.is_finite())
            && self.bias.is_finite()
            && self.standardizer.mean.iter().all(|v| v.is_finite())
            && self.standardizer.scale.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Shape("non-finite model parameter".into()));
        }
        Ok(())
    }

    /// `w . z(x) + b` on raw (unstandardized) values.
    pub fn margin(&self, values: &[f64]) -> f64 {
        let mut s = self.bias;
        for (((&x, &m), &k), &w) in values
            .iter()
            .zip(&self.standardizer.mean)
            .zip(&self.standardizer.scale)
            .zip(&self.weights)
        {
            s += w * (x - m) * k;
        }
        s
    }
}

/// `lambda/2 |w|^2 + mean hinge` over standardized rows.
pub fn svm_objective(weights: &[f64], bias: f64, rows: &[Vec<f64>], y: &[i8], lambda: f64) -> f64 {
    let hinge: f64 = rows
        .iter()
        .zip(y)
        .map(|(r, &yi)| (1.0 - f64::from(yi) * (dot(weights, r) + bias)).max(0.0))
        .sum();
    0.5 * lambda * dot(weights, weights) + hinge / rows.len() as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn check_training_set(x: &[FeatureVector], y: &[i8]) -> Result<FeatureLayout> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} samples but {} labels", x.len(), y.len())));
    }
    let first = x.first().ok_or(Error::InsufficientData { needed: 2, got: 0 })?;
    let layout = first.layout;
    for fv in x {
        if fv.layout != layout {
            return Err(Error::Shape(format!(
                "mixed layouts {} and {}",
                layout.name(),
                fv.layout.name()
            )));
        }
        fv.validate()?;
    }
    if let Some(&bad) = y.iter().find(|&&v| v != 1 && v != -1) {
        return Err(Error::Argument(format!("labels must be +1 or -1, got {bad}")));
    }
    if !(y.contains(&1) && y.contains(&-1)) {
        return Err(Error::DegenerateData("training set has a single class".into()));
    }
    Ok(layout)
}

/// Indices in an order that depends only on the sample multiset.
pub(crate) fn canonical_order(x: &[FeatureVector], y: &[i8]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| {
        x[a].sample_id
            .cmp(&x[b].sample_id)
            .then_with(|| {
                x[a].values
                    .iter()
                    .zip(&x[b].values)
                    .map(|(p, q)| p.total_cmp(q))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal)
            })
            .then_with(|| y[a].cmp(&y[b]))
    });
    idx
}

/// Stochastic sub-gradient descent on the L2-regularized hinge loss with
/// step `eta0 / (1 + lambda eta0 t)` and an unregularized bias. After each
/// epoch the running average of the iterates is scored on the full
/// objective and kept if it improves on the best so far.
pub fn svm_train(x: &[FeatureVector], y: &[i8], params: &SvmParams) -> Result<LinearModel> {
    let layout = check_training_set(x, y)?;
    if !(params.lambda > 0.0 && params.lambda.is_finite()) {
        return Err(Error::Argument(format!("lambda must be positive, got {}", params.lambda)));
    }
    if params.epochs == 0 || !(params.eta0 > 0.0) {
        return Err(Error::Argument("epochs and eta0 must be positive".into()));
    }
    let order = canonical_order(x, y);
    let raw: Vec<&[f64]> = order.iter().map(|&i| x[i].values.as_slice()).collect();
    let standardizer = Standardizer::fit(&raw)?;
    let rows: Vec<Vec<f64>> = raw.iter().map(|r| standardizer.apply(r)).collect();
    let y: Vec<i8> = order.iter().map(|&i| y[i]).collect();
    let y = y.as_slice();
    let d = layout.len();
    let lambda = params.lambda;
    let eta0 = params.eta0.min(1.0 / lambda);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (mut w, mut b) = (vec![0.0; d], 0.0);
    let (mut avg_w, mut avg_b) = (vec![0.0; d], 0.0);
    let mut best_w = vec![0.0; d];
    let mut best_b = 0.0;
    let mut best = svm_objective(&best_w, best_b, &rows, y, lambda);
    let mut trace = Vec::with_capacity(params.epochs);
    let mut t = 0usize;
    let mut perm: Vec<usize> = (0..rows.len()).collect();
    for _ in 0..params.epochs {
        perm.shuffle(&mut rng);
        for &i in &perm {
            let eta = eta0 / (1.0 + lambda * eta0 * t as f64);
            let yi = f64::from(y[i]);
            let r = &rows[i];
            let violated = yi * (dot(&w, r) + b) < 1.0;
            let shrink = 1.0 - eta * lambda;
            if violated {
                for (wj, &xj) in w.iter_mut().zip(r) {
                    *wj = *wj * shrink + eta * yi * xj;
                }
                b += eta * yi;
            } else {
                w.iter_mut().for_each(|wj| *wj *= shrink);
            }
            t += 1;
            let k = 1.0 / t as f64;
            for (a, &wj) in avg_w.iter_mut().zip(&w) {
                *a += (wj - *a) * k;
            }
            avg_b += (b - avg_b) * k;
        }
        let obj = svm_objective(&avg_w, avg_b, &rows, y, lambda);
        if !obj.is_finite() {
            return Err(Error::Training {
                epoch: trace.len(),
                reason: "non-finite objective".into(),
            });
        }
        if obj <= best {
            best = obj;
            best_w.copy_from_slice(&avg_w);
            best_b = avg_b;
        }
        trace.push(best);
    }
    let model = LinearModel {
        layout,
        weights: best_w,
        bias: best_b,
        standardizer,
        params: *params,
        objective_trace: trace,
    };
    model.validate()?;
    Ok(model)
}

/// `(label, margin)`; a margin of exactly zero is labeled +1.
pub fn svm_predict(model: &LinearModel, x: &FeatureVector) -> Result<(i8, f64)> {
    if x.layout != model.layout {
        return Err(Error::Shape(format!(
            "model expects {} features, got {}",
            model.layout.name(),
            x.layout.name()
        )));
    }
    x.validate()?;
    let m = model.margin(&x.values);
    Ok((if m >= 0.0 { 1 } else { -1 }, m))
}
