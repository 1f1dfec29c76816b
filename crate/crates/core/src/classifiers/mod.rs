//! Linear SVM, the two-convolution network, and PCA over feature vectors.
//! Binary labels are `+1` (live, or flash from the right) and `-1`.

mod blob;
pub mod cnn;
mod pca;
mod svm;

pub use cnn::{
    cnn_forward, cnn_forward_batch, cnn_predict, cnn_train, grad_check, grad_check_with, Activations,
    BackwardFault, CnnModel, CnnParams, CnnWeights, GradCheckOptions, GradCheckReport,
};
pub use pca::{pca_embed, PcaEmbedding};
pub use svm::{svm_objective, svm_predict, svm_train, LinearModel, Standardizer, SvmParams};

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureLayout, FeatureVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Svm,
    Cnn,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Svm => "svm",
            ClassifierKind::Cnn => "cnn",
        }
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svm" => Ok(ClassifierKind::Svm),
            "cnn" => Ok(ClassifierKind::Cnn),
            _ => Err(Error::Argument(format!("unknown classifier '{s}'"))),
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Hyperparameters for either classifier; the seed of the run overrides
/// the ones stored here.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainOptions {
    pub svm: SvmParams,
    pub cnn: CnnParams,
}

/// A trained model of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Classifier {
    Svm(LinearModel),
    Cnn(CnnModel),
}

impl Classifier {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Classifier::Svm(_) => ClassifierKind::Svm,
            Classifier::Cnn(_) => ClassifierKind::Cnn,
        }
    }

    pub fn layout(&self) -> FeatureLayout {
        match self {
            Classifier::Svm(m) => m.layout,
            Classifier::Cnn(m) => m.layout,
        }
    }

    /// `(label, margin)`; positive margins mean +1.
    pub fn predict(&self, x: &FeatureVector) -> Result<(i8, f64)> {
        match self {
            Classifier::Svm(m) => svm_predict(m, x),
            Classifier::Cnn(m) => cnn_predict(m, x),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Classifier::Svm(m) => m.validate(),
            Classifier::Cnn(m) => m.validate(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Classifier = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        model.validate().map_err(|e| Error::parse(path, e.to_string()))?;
        Ok(model)
    }
}

/// Trains a classifier of `kind`; the CNN starts from a fresh seeded
/// initialization.
pub fn train_classifier(
    kind: ClassifierKind,
    x: &[FeatureVector],
    y: &[i8],
    opts: &TrainOptions,
    seed: u64,
) -> Result<Classifier> {
    match kind {
        ClassifierKind::Svm => {
            let params = SvmParams { seed, ..opts.svm };
            Ok(Classifier::Svm(svm_train(x, y, &params)?))
        }
        ClassifierKind::Cnn => {
            let layout = x.first().map(|f| f.layout).ok_or(Error::InsufficientData { needed: 2, got: 0 })?;
            let init = CnnModel::new(layout, seed)?;
            let params = CnnParams { seed, ..opts.cnn };
            Ok(Classifier::Cnn(cnn_train(&init, x, y, &params)?))
        }
    }
}
