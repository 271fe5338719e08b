//! One-hidden-layer perceptron: tanh hidden units, sigmoid output, mean
//! cross-entropy, full-batch gradient descent.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, softplus, Dataset, ModelError, ModelParams, Standardizer, TrainedModel};
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: 8,
            lr: 0.05,
            epochs: 500,
            seed: 0,
        }
    }
}

/// Parameters are stored flat in the order `W1 (hidden x d, row-major), b1, w2, b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub n_inputs: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
    pub final_loss: f64,
    pub config: MlpConfig,
}

/// Borrowed views into the flat parameter vector.
struct Layers<'a> {
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: f64,
}

pub fn mlp_param_count(d: usize, hidden: usize) -> usize {
    hidden * d + hidden + hidden + 1
}

fn split(params: &[f64], d: usize, h: usize) -> Layers<'_> {
    let (w1, rest) = params.split_at(h * d);
    let (b1, rest) = rest.split_at(h);
    let (w2, rest) = rest.split_at(h);
    Layers {
        w1,
        b1,
        w2,
        b2: rest[0],
    }
}

fn forward(l: &Layers<'_>, x: &[f64], d: usize, hidden_out: &mut [f64]) -> f64 {
    let mut z = l.b2;
    for (k, a) in hidden_out.iter_mut().enumerate() {
        let row = &l.w1[k * d..(k + 1) * d];
        let pre: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + l.b1[k];
        *a = pre.tanh();
        z += l.w2[k] * *a;
    }
    z
}

impl MlpModel {
    pub(crate) fn proba(&self, x: &[f64]) -> f64 {
        let l = split(&self.params, self.n_inputs, self.hidden);
        let mut h = vec![0.0; self.hidden];
        sigmoid(forward(&l, x, self.n_inputs, &mut h))
    }
}

/// Mean cross-entropy and its gradient by backpropagation.
pub fn mlp_loss_grad(
    params: &[f64],
    rows: &[Vec<f64>],
    labels: &[u8],
    hidden: usize,
) -> (f64, Vec<f64>) {
    let d = rows.first().map_or(0, Vec::len);
    let l = split(params, d, hidden);
    let n = rows.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let mut act = vec![0.0; hidden];
    let (b1_at, w2_at, b2_at) = (hidden * d, hidden * d + hidden, hidden * d + 2 * hidden);
    for (x, &y) in rows.iter().zip(labels) {
        let z = forward(&l, x, d, &mut act);
        let y = f64::from(y);
        loss += softplus(z) - y * z;
        let dz = sigmoid(z) - y;
        grad[b2_at] += dz;
        for k in 0..hidden {
            grad[w2_at + k] += dz * act[k];
            let dpre = dz * l.w2[k] * (1.0 - act[k] * act[k]);
            grad[b1_at + k] += dpre;
            for (g, v) in grad[k * d..(k + 1) * d].iter_mut().zip(x) {
                *g += dpre * v;
            }
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}

/// Seeded uniform(-0.1, 0.1) weights, zero biases.
pub fn mlp_init(d: usize, hidden: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let mut params = vec![0.0; mlp_param_count(d, hidden)];
    for w in &mut params[..hidden * d] {
        *w = rng.random_range(-0.1..0.1);
    }
    let w2 = hidden * d + hidden;
    for w in &mut params[w2..w2 + hidden] {
        *w = rng.random_range(-0.1..0.1);
    }
    params
}

pub fn train_mlp(data: &Dataset, cfg: &MlpConfig) -> Result<TrainedModel, ModelError> {
    data.require_both_classes()?;
    if cfg.hidden == 0 {
        return Err(ModelError::InvalidHyperparameter(
            "hidden must be >= 1".into(),
        ));
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(ModelError::InvalidHyperparameter(format!(
            "lr must be > 0, got {}",
            cfg.lr
        )));
    }
    let standardizer = Standardizer::fit(data)?;
    let train = standardizer.transform(data);
    let d = train.n_features();
    let mut params = mlp_init(d, cfg.hidden, cfg.seed);
    for _ in 0..cfg.epochs {
        let (_, grad) = mlp_loss_grad(&params, &train.rows, &train.labels, cfg.hidden);
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= cfg.lr * g;
        }
    }
    let final_loss = mlp_loss_grad(&params, &train.rows, &train.labels, cfg.hidden).0;
    let model = MlpModel {
        n_inputs: d,
        hidden: cfg.hidden,
        params,
        final_loss,
        config: cfg.clone(),
    };
    Ok(TrainedModel::new(
        data,
        Some(standardizer),
        ModelParams::Mlp(model),
    ))
}
