//! L2-regularised logistic regression fitted by damped Newton iterations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    dot, sigmoid, softplus, Dataset, ModelError, ModelKind, ModelParams, Standardizer, TrainedModel,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegConfig {
    /// Penalty on the weights (not the bias).
    pub l2: f64,
    pub max_iter: usize,
    /// Convergence threshold on the Euclidean norm of the gradient.
    pub tol: f64,
    pub standardize: bool,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            l2: 1e-2,
            max_iter: 100,
            tol: 1e-8,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub config: LogRegConfig,
}

impl LogRegModel {
    pub(crate) fn proba(&self, x: &[f64]) -> f64 {
        sigmoid(dot(&self.weights, x) + self.bias)
    }
}

/// Mean negative log-likelihood plus `l2/2 * |w|^2` and its gradient.
///
/// `params` holds the weights followed by the bias.
pub fn logreg_loss_grad(
    params: &[f64],
    rows: &[Vec<f64>],
    labels: &[u8],
    l2: f64,
) -> (f64, Vec<f64>) {
    let d = params.len() - 1;
    let (w, b) = (&params[..d], params[d]);
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; d + 1];
    for (x, &y) in rows.iter().zip(labels) {
        let z = dot(w, x) + b;
        let y = f64::from(y);
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, xi) in grad[..d].iter_mut().zip(x) {
            *g += r * xi;
        }
        grad[d] += r;
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    loss += 0.5 * l2 * dot(w, w);
    for (g, wi) in grad[..d].iter_mut().zip(w) {
        *g += l2 * wi;
    }
    (loss, grad)
}

fn hessian(params: &[f64], rows: &[Vec<f64>], l2: f64) -> DMatrix<f64> {
    let d = params.len() - 1;
    let n = rows.len() as f64;
    let mut h = DMatrix::<f64>::zeros(d + 1, d + 1);
    let mut xt = vec![0.0; d + 1];
    for x in rows {
        let z = dot(&params[..d], x) + params[d];
        let p = sigmoid(z);
        let s = p * (1.0 - p) / n;
        xt[..d].copy_from_slice(x);
        xt[d] = 1.0;
        for i in 0..=d {
            let si = s * xt[i];
            for j in i..=d {
                h[(i, j)] += si * xt[j];
            }
        }
    }
    for i in 0..=d {
        for j in 0..i {
            h[(i, j)] = h[(j, i)];
        }
    }
    for i in 0..d {
        h[(i, i)] += l2;
    }
    h
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Minimise the regularised log-loss from a zero start.
///
/// Newton directions with Armijo backtracking; falls back to the negative
/// gradient when the Hessian is not positive definite. Stops once the gradient
/// norm drops to `tol` or after `max_iter` iterations (then `converged` is false).
pub fn fit_logreg_params(
    rows: &[Vec<f64>],
    labels: &[u8],
    cfg: &LogRegConfig,
) -> (Vec<f64>, bool, usize, f64) {
    let d = rows.first().map_or(0, Vec::len);
    let mut params = vec![0.0; d + 1];
    let (mut loss, mut grad) = logreg_loss_grad(&params, rows, labels, cfg.l2);
    let mut gnorm = norm(&grad);
    let mut iterations = 0;
    while gnorm > cfg.tol && iterations < cfg.max_iter {
        iterations += 1;
        let h = hessian(&params, rows, cfg.l2);
        let g = DVector::from_column_slice(&grad);
        let direction: Vec<f64> = match h.cholesky() {
            Some(ch) => (-ch.solve(&g)).iter().copied().collect(),
            None => grad.iter().map(|v| -v).collect(),
        };
        let slope = dot(&grad, &direction);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = params
                .iter()
                .zip(&direction)
                .map(|(p, dv)| p + step * dv)
                .collect();
            let (trial_loss, trial_grad) = logreg_loss_grad(&trial, rows, labels, cfg.l2);
            // Slack of a few ulps so that steps near the optimum are not rejected by rounding.
            if trial_loss <= loss + 1e-4 * step * slope + 1e-15 * loss.abs().max(1.0) {
                params = trial;
                loss = trial_loss;
                grad = trial_grad;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        let new_norm = norm(&grad);
        if !accepted || (new_norm >= gnorm && step < 1e-12) {
            gnorm = new_norm;
            break;
        }
        gnorm = new_norm;
    }
    (params, gnorm <= cfg.tol, iterations, gnorm)
}

pub fn train_logreg(data: &Dataset, cfg: &LogRegConfig) -> Result<TrainedModel, ModelError> {
    data.require_both_classes()?;
    if !(cfg.l2 >= 0.0 && cfg.l2.is_finite()) {
        return Err(ModelError::InvalidHyperparameter(format!(
            "l2 must be >= 0, got {}",
            cfg.l2
        )));
    }
    if cfg.tol.is_nan() || cfg.tol <= 0.0 {
        return Err(ModelError::InvalidHyperparameter(format!(
            "tol must be > 0, got {}",
            cfg.tol
        )));
    }
    let (train, standardizer) = if cfg.standardize {
        let s = Standardizer::fit(data)?;
        (s.transform(data), Some(s))
    } else {
        (data.clone(), None)
    };
    let (params, converged, iterations, gradient_norm) =
        fit_logreg_params(&train.rows, &train.labels, cfg);
    let d = params.len() - 1;
    let model = LogRegModel {
        weights: params[..d].to_vec(),
        bias: params[d],
        converged,
        iterations,
        gradient_norm,
        config: cfg.clone(),
    };
    Ok(TrainedModel::new(
        data,
        standardizer,
        ModelParams::LogReg(model),
    ))
}

/// Features ranked by `|weight|` (standardized scale when the model standardizes),
/// descending, ties broken by column index.
pub fn logreg_feature_importance(model: &TrainedModel) -> Result<Vec<(String, f64)>, ModelError> {
    let ModelParams::LogReg(m) = &model.params else {
        return Err(ModelError::WrongModelKind {
            expected: ModelKind::LogReg,
            found: model.kind(),
        });
    };
    Ok(rank_by_magnitude(&m.weights)
        .into_iter()
        .map(|(j, w)| (model.feature_names[j].clone(), w))
        .collect())
}

/// `(index, |w|)` sorted by magnitude descending, ties by index.
pub fn rank_by_magnitude(weights: &[f64]) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = weights.iter().map(|w| w.abs()).enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use rand::Rng;

    fn separable(n: usize, seed: u64) -> Dataset {
        let mut rng = rng_from_seed(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        while rows.len() < n {
            let x: f64 = rng.random_range(-1.0..1.0);
            let y: f64 = rng.random_range(-1.0..1.0);
            let margin = x + 0.5 * y;
            if margin.abs() < 0.1 {
                continue;
            }
            rows.push(vec![x, y]);
            labels.push(u8::from(margin > 0.0));
        }
        Dataset::unnamed(rows, labels).unwrap()
    }

    fn noisy(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = rng_from_seed(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let labels = rows
            .iter()
            .map(|r| {
                let z: f64 = r
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * (j as f64 - 1.0))
                    .sum();
                u8::from(rng.random::<f64>() < sigmoid(z))
            })
            .collect();
        Dataset::unnamed(rows, labels).unwrap()
    }

    fn accuracy(model: &TrainedModel, data: &Dataset) -> f64 {
        let correct = data
            .rows
            .iter()
            .zip(&data.labels)
            .filter(|(r, &l)| model.predict(r, 0.5).unwrap() == l)
            .count();
        correct as f64 / data.n_rows() as f64
    }

    #[test]
    fn separable_toy_fits_perfectly() {
        let data = separable(200, 1);
        let model = train_logreg(
            &data,
            &LogRegConfig {
                l2: 0.01,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(accuracy(&model, &data), 1.0);
    }

    #[test]
    fn converges_to_tolerance() {
        let data = noisy(300, 4, 3);
        let model = train_logreg(&data, &LogRegConfig::default()).unwrap();
        let ModelParams::LogReg(m) = &model.params else {
            unreachable!()
        };
        assert!(m.converged, "gradient norm {}", m.gradient_norm);
        assert!(m.gradient_norm <= 1e-8);
    }

    #[test]
    fn flipped_labels_negate_weights() {
        let data = noisy(300, 4, 5);
        let flipped = Dataset {
            labels: data.labels.iter().map(|l| 1 - l).collect(),
            ..data.clone()
        };
        let cfg = LogRegConfig::default();
        let a = train_logreg(&data, &cfg).unwrap();
        let b = train_logreg(&flipped, &cfg).unwrap();
        let (ModelParams::LogReg(a), ModelParams::LogReg(b)) = (&a.params, &b.params) else {
            unreachable!()
        };
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert!((wa + wb).abs() < 1e-8, "{wa} vs {wb}");
        }
        assert!((a.bias + b.bias).abs() < 1e-8);
    }

    #[test]
    fn gradient_at_optimum_matches_finite_differences() {
        let data = noisy(200, 3, 9);
        let cfg = LogRegConfig {
            standardize: false,
            ..Default::default()
        };
        let (params, ..) = fit_logreg_params(&data.rows, &data.labels, &cfg);
        let (_, grad) = logreg_loss_grad(&params, &data.rows, &data.labels, cfg.l2);
        let h = 1e-5;
        for k in 0..params.len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus[k] += h;
            minus[k] -= h;
            let fd = (logreg_loss_grad(&plus, &data.rows, &data.labels, cfg.l2).0
                - logreg_loss_grad(&minus, &data.rows, &data.labels, cfg.l2).0)
                / (2.0 * h);
            assert!(
                (fd - grad[k]).abs() <= 1e-4,
                "param {k}: fd {fd} analytic {}",
                grad[k]
            );
        }
    }

    #[test]
    fn importance_orders_by_magnitude() {
        let ranked = rank_by_magnitude(&[0.5, -2.0, 1.0]);
        assert_eq!(
            ranked.iter().map(|r| r.0).collect::<Vec<_>>(),
            vec![1, 2, 0]
        );
        let ranked = rank_by_magnitude(&[0.0, 0.0, 0.0]);
        assert_eq!(
            ranked.iter().map(|r| r.0).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn planted_signal_ranks_first() {
        let mut rng = rng_from_seed(11);
        let rows: Vec<Vec<f64>> = (0..400)
            .map(|_| (0..10).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels = rows
            .iter()
            .map(|r| u8::from(rng.random::<f64>() < sigmoid(4.0 * r[7])))
            .collect();
        let data = Dataset::unnamed(rows, labels).unwrap();
        let model = train_logreg(&data, &LogRegConfig::default()).unwrap();
        let ranked = logreg_feature_importance(&model).unwrap();
        assert_eq!(ranked[0].0, "x7");
    }

    #[test]
    fn zero_model_predicts_half() {
        let data = separable(20, 2);
        let mut model = train_logreg(&data, &LogRegConfig::default()).unwrap();
        if let ModelParams::LogReg(m) = &mut model.params {
            m.weights.iter_mut().for_each(|w| *w = 0.0);
            m.bias = 0.0;
        }
        assert_eq!(model.predict_proba(&[3.0, -7.0]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_rejected() {
        let data = Dataset::unnamed(vec![vec![1.0], vec![2.0]], vec![1, 1]).unwrap();
        assert_eq!(
            train_logreg(&data, &LogRegConfig::default()).unwrap_err(),
            ModelError::SingleClassData
        );
    }

    #[test]
    fn separable_without_penalty_reports_no_convergence() {
        let data = separable(50, 4);
        let cfg = LogRegConfig {
            l2: 0.0,
            max_iter: 30,
            ..Default::default()
        };
        let model = train_logreg(&data, &cfg).unwrap();
        let ModelParams::LogReg(m) = &model.params else {
            unreachable!()
        };
        assert!(!m.converged || m.gradient_norm <= cfg.tol);
        assert_eq!(accuracy(&model, &data), 1.0);
    }
}
