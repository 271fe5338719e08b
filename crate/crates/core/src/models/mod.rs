//! Classifiers behind a single probability-of-home-win interface.
//!
//! White-box: [`logreg`] and the beam-search DNF learner in [`brcg`].
//! Black-box: [`svm`] (linear, Platt-scaled), [`mlp`] (one tanh hidden layer)
//! and [`lda`].

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{FeatureVector, FEATURE_NAMES};

pub mod brcg;
pub mod lda;
pub mod logreg;
pub mod mlp;
pub mod svm;

pub use brcg::{
    fit_brcg_model, train_brcg, BrcgConfig, BrcgModel, Clause, Comparator, Literal, RuleSet,
};
pub use lda::{train_lda, LdaConfig, LdaModel};
pub use logreg::{logreg_feature_importance, train_logreg, LogRegConfig, LogRegModel};
pub use mlp::{train_mlp, MlpConfig, MlpModel};
pub use svm::{train_svm, SvmConfig, SvmModel};

/// Version tag written into every serialized model.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training data contains a single class")]
    SingleClassData,
    #[error("pooled covariance is singular even after ridge regularisation")]
    SingularCovariance,
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(u8),
    #[error("operation requires a {expected} model, got {found}")]
    WrongModelKind {
        expected: ModelKind,
        found: ModelKind,
    },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("model serialization: {0}")]
    Serialization(String),
}

/// Anything that maps a feature row to a real-valued output.
///
/// Explainers and metrics consume models through this trait so that tests can
/// plug in closed-form scorers.
pub trait Scorer {
    fn score(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64> Scorer for F {
    fn score(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Feature matrix (row-major) with binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        rows: Vec<Vec<f64>>,
        labels: Vec<u8>,
        feature_names: Vec<String>,
    ) -> Result<Self, ModelError> {
        if rows.len() != labels.len() {
            return Err(ModelError::LengthMismatch {
                rows: rows.len(),
                labels: labels.len(),
            });
        }
        let d = feature_names.len();
        for row in &rows {
            if row.len() != d {
                return Err(ModelError::DimensionMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFiniteInput);
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(ModelError::InvalidLabel(bad));
        }
        Ok(Dataset {
            rows,
            labels,
            feature_names,
        })
    }

    /// Dataset with generic `x0..x{d-1}` column names.
    pub fn unnamed(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self, ModelError> {
        let d = rows.first().map_or(0, Vec::len);
        Self::new(rows, labels, (0..d).map(|j| format!("x{j}")).collect())
    }

    pub fn from_feature_vectors(vectors: &[FeatureVector]) -> Result<Self, ModelError> {
        Self::new(
            vectors.iter().map(|v| v.values.to_vec()).collect(),
            vectors.iter().map(|v| v.label).collect(),
            FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub(crate) fn require_both_classes(&self) -> Result<(), ModelError> {
        if self.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let pos = self.n_positive();
        if pos == 0 || pos == self.n_rows() {
            return Err(ModelError::SingleClassData);
        }
        Ok(())
    }

    /// SHA-256 over the feature bits and labels; identifies the training data a model saw.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.rows.len() as u64).to_le_bytes());
        h.update((self.n_features() as u64).to_le_bytes());
        for (row, label) in self.rows.iter().zip(&self.labels) {
            for v in row {
                h.update(v.to_bits().to_le_bytes());
            }
            h.update([*label]);
        }
        hex::encode(h.finalize())
    }

    pub fn map_rows(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Dataset {
        Dataset {
            rows: self.rows.iter().map(|r| f(r)).collect(),
            labels: self.labels.clone(),
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Per-column affine transform captured from training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1 for constant columns.
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(data: &Dataset) -> Result<Self, ModelError> {
        if data.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let n = data.n_rows() as f64;
        let d = data.n_features();
        let mut mean = vec![0.0; d];
        for row in &data.rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in &data.rows {
            for j in 0..d {
                let c = row[j] - mean[j];
                var[j] += c * c;
            }
        }
        let mut std = Vec::with_capacity(d);
        let mut constant = Vec::with_capacity(d);
        for v in var {
            let s = (v / n).sqrt();
            if s > 1e-12 {
                std.push(s);
                constant.push(false);
            } else {
                std.push(1.0);
                constant.push(true);
            }
        }
        Ok(Standardizer {
            mean,
            std,
            constant,
        })
    }

    pub fn transform_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn transform(&self, data: &Dataset) -> Dataset {
        data.map_rows(|r| self.transform_row(r))
    }
}

/// Fit a [`Standardizer`] on `train` and return the transformed data with it.
pub fn standardize(train: &Dataset) -> Result<(Dataset, Standardizer), ModelError> {
    let s = Standardizer::fit(train)?;
    Ok((s.transform(train), s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    LogReg,
    #[serde(rename = "BRCG")]
    Brcg,
    LinearSVM,
    #[serde(rename = "MLP")]
    Mlp,
    #[serde(rename = "LDA")]
    Lda,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::LogReg,
        ModelKind::Brcg,
        ModelKind::LinearSVM,
        ModelKind::Mlp,
        ModelKind::Lda,
    ];

    /// Short identifier used for file names and CLI flags.
    pub fn slug(self) -> &'static str {
        match self {
            ModelKind::LogReg => "logreg",
            ModelKind::Brcg => "brcg",
            ModelKind::LinearSVM => "svm",
            ModelKind::Mlp => "mlp",
            ModelKind::Lda => "lda",
        }
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.slug() == s)
    }

    /// Row label in the model comparison table.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::LogReg => "Logistic Regression",
            ModelKind::Brcg => "BRCG",
            ModelKind::LinearSVM => "SVM",
            ModelKind::Mlp => "Artificial Neural Network",
            ModelKind::Lda => "LinearDiscriminantAnalysis",
        }
    }

    pub fn is_white_box(self) -> bool {
        matches!(self, ModelKind::LogReg | ModelKind::Brcg)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::LogReg => "LogReg",
            ModelKind::Brcg => "BRCG",
            ModelKind::LinearSVM => "LinearSVM",
            ModelKind::Mlp => "MLP",
            ModelKind::Lda => "LDA",
        })
    }
}

/// Kind-specific fitted parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ModelParams {
    LogReg(LogRegModel),
    #[serde(rename = "BRCG")]
    Brcg(BrcgModel),
    LinearSVM(SvmModel),
    #[serde(rename = "MLP")]
    Mlp(MlpModel),
    #[serde(rename = "LDA")]
    Lda(LdaModel),
}

/// A fitted classifier. Immutable after construction.
///
/// Inputs to [`TrainedModel::predict_proba`] are raw feature rows; the stored
/// standardizer (if any) is applied internally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub standardizer: Option<Standardizer>,
    /// SHA-256 of the training data, see [`Dataset::fingerprint`].
    pub training_fingerprint: String,
    #[serde(flatten)]
    pub params: ModelParams,
}

impl TrainedModel {
    pub(crate) fn new(
        data: &Dataset,
        standardizer: Option<Standardizer>,
        params: ModelParams,
    ) -> Self {
        TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            feature_names: data.feature_names.clone(),
            standardizer,
            training_fingerprint: data.fingerprint(),
            params,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.params {
            ModelParams::LogReg(_) => ModelKind::LogReg,
            ModelParams::Brcg(_) => ModelKind::Brcg,
            ModelParams::LinearSVM(_) => ModelKind::LinearSVM,
            ModelParams::Mlp(_) => ModelKind::Mlp,
            ModelParams::Lda(_) => ModelKind::Lda,
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Probability that the home team wins (label 1).
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.n_features() {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_features(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteInput);
        }
        Ok(self.proba_unchecked(x))
    }

    pub fn predict(&self, x: &[f64], threshold: f64) -> Result<u8, ModelError> {
        Ok(u8::from(self.predict_proba(x)? >= threshold))
    }

    fn proba_unchecked(&self, x: &[f64]) -> f64 {
        let scaled;
        let z = match &self.standardizer {
            Some(s) => {
                scaled = s.transform_row(x);
                &scaled[..]
            }
            None => x,
        };
        let p = match &self.params {
            ModelParams::LogReg(m) => m.proba(z),
            ModelParams::Brcg(m) => m.proba(z),
            ModelParams::LinearSVM(m) => m.proba(z),
            ModelParams::Mlp(m) => m.proba(z),
            ModelParams::Lda(m) => m.proba(z),
        };
        p.clamp(0.0, 1.0)
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        serde_json::to_string_pretty(self).map_err(|e| ModelError::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let model: TrainedModel =
            serde_json::from_str(text).map_err(|e| ModelError::Serialization(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion(model.format_version));
        }
        Ok(model)
    }
}

/// Hyperparameters for every model kind.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfigs {
    pub logreg: LogRegConfig,
    pub brcg: BrcgConfig,
    pub svm: SvmConfig,
    pub mlp: MlpConfig,
    pub lda: LdaConfig,
}

/// Train one model of the given kind.
pub fn train_model(
    kind: ModelKind,
    data: &Dataset,
    cfg: &ModelConfigs,
) -> Result<TrainedModel, ModelError> {
    match kind {
        ModelKind::LogReg => train_logreg(data, &cfg.logreg),
        ModelKind::Brcg => fit_brcg_model(data, &cfg.brcg),
        ModelKind::LinearSVM => train_svm(data, &cfg.svm),
        ModelKind::Mlp => train_mlp(data, &cfg.mlp),
        ModelKind::Lda => train_lda(data, &cfg.lda),
    }
}

impl Scorer for TrainedModel {
    fn score(&self, x: &[f64]) -> f64 {
        self.proba_unchecked(x)
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
