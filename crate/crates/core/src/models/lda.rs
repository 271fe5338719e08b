//! Two-class linear discriminant analysis with a ridge-regularised pooled covariance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{dot, sigmoid, Dataset, ModelError, ModelParams, Standardizer, TrainedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaConfig {
    /// Ridge `eps = ridge_scale * trace(S) / d` added to the pooled covariance `S`.
    pub ridge_scale: f64,
    pub standardize: bool,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            ridge_scale: 1e-6,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    /// Discriminant direction `(S + eps I)^-1 (mu1 - mu0)`.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub ridge: f64,
    pub config: LdaConfig,
}

impl LdaModel {
    /// Posterior of class 1 under shared-covariance Gaussians: a logistic in `w.x + b`.
    pub(crate) fn proba(&self, x: &[f64]) -> f64 {
        sigmoid(dot(&self.weights, x) + self.bias)
    }
}

pub fn train_lda(data: &Dataset, cfg: &LdaConfig) -> Result<TrainedModel, ModelError> {
    data.require_both_classes()?;
    if !(cfg.ridge_scale >= 0.0 && cfg.ridge_scale.is_finite()) {
        return Err(ModelError::InvalidHyperparameter(format!(
            "ridge_scale must be >= 0, got {}",
            cfg.ridge_scale
        )));
    }
    let (train, standardizer) = if cfg.standardize {
        let s = Standardizer::fit(data)?;
        (s.transform(data), Some(s))
    } else {
        (data.clone(), None)
    };
    let d = train.n_features();
    let n = train.n_rows();

    let mut means = [vec![0.0; d], vec![0.0; d]];
    let mut counts = [0usize; 2];
    for (x, &y) in train.rows.iter().zip(&train.labels) {
        let c = usize::from(y);
        counts[c] += 1;
        for (m, v) in means[c].iter_mut().zip(x) {
            *m += v;
        }
    }
    for c in 0..2 {
        means[c].iter_mut().for_each(|m| *m /= counts[c] as f64);
    }

    let mut pooled = DMatrix::<f64>::zeros(d, d);
    for (x, &y) in train.rows.iter().zip(&train.labels) {
        let centered =
            DVector::from_iterator(d, x.iter().zip(&means[usize::from(y)]).map(|(v, m)| v - m));
        pooled.syger(1.0, &centered, &centered, 1.0);
    }
    let dof = n.saturating_sub(2).max(1) as f64;
    pooled /= dof;
    let ridge = cfg.ridge_scale * pooled.trace() / d as f64;
    for i in 0..d {
        pooled[(i, i)] += ridge;
    }
    // syger only fills the lower triangle.
    pooled.fill_upper_triangle_with_lower_triangle();

    let chol = pooled.cholesky().ok_or(ModelError::SingularCovariance)?;
    let delta = DVector::from_iterator(d, means[1].iter().zip(&means[0]).map(|(a, b)| a - b));
    let w = chol.solve(&delta);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::SingularCovariance);
    }
    let weights: Vec<f64> = w.iter().copied().collect();
    let midpoint: Vec<f64> = means[0]
        .iter()
        .zip(&means[1])
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let prior_log_odds = (counts[1] as f64 / counts[0] as f64).ln();
    let bias = -dot(&weights, &midpoint) + prior_log_odds;

    let model = LdaModel {
        weights,
        bias,
        ridge,
        config: cfg.clone(),
    };
    Ok(TrainedModel::new(
        data,
        standardizer,
        ModelParams::Lda(model),
    ))
}
