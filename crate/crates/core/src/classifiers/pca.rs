use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

const MAX_ITERS: usize = 5_000;
const TOL: f64 = 1e-11;

/// Principal axes of a feature set and the projected samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaEmbedding {
    pub mean: Vec<f64>,
    /// Unit eigenvectors of the covariance, by decreasing eigenvalue.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Total variance (trace of the covariance).
    pub total_variance: f64,
    /// One row of `k` coordinates per sample.
    pub projections: Vec<Vec<f64>>,
}

impl PcaEmbedding {
    /// Fraction of the total variance carried by each component.
    pub fn explained_ratio(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|&l| if self.total_variance > 0.0 { l / self.total_variance } else { 0.0 })
            .collect()
    }

    pub fn project(&self, values: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(values).zip(&self.mean).map(|((a, x), m)| a * (x - m)).sum())
            .collect()
    }

    /// Maps coordinates back to feature space.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &t) in self.components.iter().zip(coords) {
            for (o, &a) in out.iter_mut().zip(c) {
                *o += t * a;
            }
        }
        out
    }
}

fn matvec(m: &[f64], d: usize, v: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(m.chunks_exact(d)) {
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
    }
}

/// Top-`k` principal components by power iteration on the covariance,
/// deflating after each one. Each iterate is re-orthogonalized against the
/// components already found, so the basis stays orthonormal even where
/// the spectrum is flat.
pub fn pca_embed(x: &[FeatureVector], k: usize) -> Result<PcaEmbedding> {
    let d = x.first().map_or(0, |f| f.values.len());
    if x.iter().any(|f| f.values.len() != d) {
        return Err(Error::Shape("feature vectors differ in length".into()));
    }
    if k == 0 || k > d {
        return Err(Error::Shape(format!("k = {k} must lie in 1..={d}")));
    }
    if x.len() < k + 1 {
        return Err(Error::InsufficientData {
            needed: k + 1,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mut mean = vec![0.0; d];
    for f in x {
        mean.iter_mut().zip(&f.values).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![0.0; d * d];
    let mut c = vec![0.0; d];
    for f in x {
        c.iter_mut().zip(&f.values).zip(&mean).for_each(|((c, v), m)| *c = v - m);
        for i in 0..d {
            let ci = c[i];
            if ci == 0.0 {
                continue;
            }
            for (dst, &cj) in cov[i * d..(i + 1) * d].iter_mut().zip(&c) {
                *dst += ci * cj;
            }
        }
    }
    cov.iter_mut().for_each(|v| *v /= n);
    let total_variance: f64 = (0..d).map(|i| cov[i * d + i]).sum();

    let mut rng = ChaCha8Rng::seed_from_u64(0x9ca);
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    let mut next = vec![0.0; d];
    for _ in 0..k {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        orthogonalize(&mut v, &components);
        normalize(&mut v);
        let mut lambda = 0.0;
        for _ in 0..MAX_ITERS {
            matvec(&cov, d, &v, &mut next);
            orthogonalize(&mut next, &components);
            lambda = v.iter().zip(&next).map(|(a, b)| a * b).sum::<f64>();
            if normalize(&mut next) == 0.0 {
                // v spans the null space of what is left; any unit vector
                // orthogonal to the basis is an eigenvector
                break;
            }
            let delta = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            std::mem::swap(&mut v, &mut next);
            if delta < TOL {
                break;
            }
        }
        let lambda = lambda.max(0.0);
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] -= lambda * v[i] * v[j];
            }
        }
        eigenvalues.push(lambda);
        components.push(v);
    }
    let mut emb = PcaEmbedding {
        mean,
        components,
        eigenvalues,
        total_variance,
        projections: Vec::new(),
    };
    emb.projections = x.iter().map(|f| emb.project(&f.values)).collect();
    Ok(emb)
}
