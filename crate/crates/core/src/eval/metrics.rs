use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary decision rates with live (+1) as the positive class. FAR and FRR
/// are absent when the set has no attacks or no live samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub far: Option<f64>,
    pub frr: Option<f64>,
    pub hter: Option<f64>,
}

/// `far` = attacks accepted / attacks, `frr` = live rejected / live,
/// `hter` = their mean.
pub fn metrics(predictions: &[i8], labels: &[i8]) -> Result<Metrics> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let (mut correct, mut live, mut attacks, mut rejected, mut accepted) = (0u64, 0u64, 0u64, 0u64, 0u64);
    for (&p, &y) in predictions.iter().zip(labels) {
        if p == y {
            correct += 1;
        }
        if y == 1 {
            live += 1;
            if p != 1 {
                rejected += 1;
            }
        } else {
            attacks += 1;
            if p == 1 {
                accepted += 1;
            }
        }
    }
    let rate = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let far = rate(accepted, attacks);
    let frr = rate(rejected, live);
    let hter = match (far, frr) {
        (Some(a), Some(r)) => Some((a + r) / 2.0),
        _ => None,
    };
    Ok(Metrics {
        accuracy: correct as f64 / labels.len() as f64,
        far,
        frr,
        hter,
    })
}

/// Threshold on `margins` minimizing HTER, ties broken toward the
/// threshold closest to zero. Candidates are midpoints between
/// consecutive distinct margins plus zero.
pub fn tune_threshold(margins: &[f64], labels: &[i8]) -> Result<f64> {
    if margins.len() != labels.len() {
        return Err(Error::Shape("margins and labels differ in length".into()));
    }
    let mut sorted: Vec<f64> = margins.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut candidates = vec![0.0];
    candidates.extend(sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    if let (Some(&lo), Some(&hi)) = (sorted.first(), sorted.last()) {
        candidates.push(lo - 1.0);
        candidates.push(hi + 1.0);
    }
    let mut best: (f64, f64) = (f64::INFINITY, 0.0);
    for t in candidates {
        let pred: Vec<i8> = margins.iter().map(|&m| if m >= t { 1 } else { -1 }).collect();
        let m = metrics(&pred, labels)?;
        let h = m.hter.unwrap_or(1.0 - m.accuracy);
        if h < best.0 || (h == best.0 && t.abs() < best.1.abs()) {
            best = (h, t);
        }
    }
    Ok(best.1)
}
