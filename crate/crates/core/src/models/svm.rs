//! Linear soft-margin SVM trained by subgradient descent on the primal, with
//! Platt scaling for probabilities.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{dot, sigmoid, softplus, Dataset, ModelError, ModelParams, Standardizer, TrainedModel};
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial step size; epoch `e` uses `eta0 / sqrt(e)`.
    pub eta0: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            epochs: 200,
            batch_size: 32,
            eta0: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Platt sigmoid: `P(y=1 | m) = sigmoid(platt_a * m + platt_b)`.
    pub platt_a: f64,
    pub platt_b: f64,
    /// Primal objective at the end of each epoch (entry 0 is the starting point).
    pub objective_trace: Vec<f64>,
    pub config: SvmConfig,
}

impl SvmModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub(crate) fn proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.platt_a * self.margin(x) + self.platt_b)
    }
}

fn signed(label: u8) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// `lambda/2 |w|^2 + mean hinge`, with `lambda = 1 / (C n)` (the usual
/// `1/2 |w|^2 + C sum hinge` divided by `C n`).
pub fn svm_objective(w: &[f64], b: f64, rows: &[Vec<f64>], labels: &[u8], lambda: f64) -> f64 {
    let hinge: f64 = rows
        .iter()
        .zip(labels)
        .map(|(x, &y)| (1.0 - signed(y) * (dot(w, x) + b)).max(0.0))
        .sum::<f64>()
        / rows.len() as f64;
    0.5 * lambda * dot(w, w) + hinge
}

fn subgradient(
    w: &[f64],
    b: f64,
    rows: &[Vec<f64>],
    labels: &[u8],
    batch: &[usize],
    lambda: f64,
) -> (Vec<f64>, f64) {
    let mut gw: Vec<f64> = w.iter().map(|wi| lambda * wi).collect();
    let mut gb = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for &i in batch {
        let y = signed(labels[i]);
        if y * (dot(w, &rows[i]) + b) < 1.0 {
            for (g, xi) in gw.iter_mut().zip(&rows[i]) {
                *g -= scale * y * xi;
            }
            gb -= scale * y;
        }
    }
    (gw, gb)
}

/// Runs seeded mini-batch epochs. An epoch whose end point has a higher primal
/// objective than its start is discarded and replaced by a backtracking
/// full-batch step, so the per-epoch objective never increases.
pub(crate) fn fit_svm_primal(
    rows: &[Vec<f64>],
    labels: &[u8],
    cfg: &SvmConfig,
) -> (Vec<f64>, f64, Vec<f64>) {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let lambda = 1.0 / (cfg.c * n as f64);
    let mut rng = rng_from_seed(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let all: Vec<usize> = (0..n).collect();

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut obj = svm_objective(&w, b, rows, labels, lambda);
    let mut trace = vec![obj];

    for epoch in 1..=cfg.epochs {
        let eta = cfg.eta0 / (epoch as f64).sqrt();
        order.shuffle(&mut rng);
        let (mut tw, mut tb) = (w.clone(), b);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let (gw, gb) = subgradient(&tw, tb, rows, labels, batch, lambda);
            for (wi, g) in tw.iter_mut().zip(&gw) {
                *wi -= eta * g;
            }
            tb -= eta * gb;
        }
        let trial = svm_objective(&tw, tb, rows, labels, lambda);
        if trial <= obj {
            w = tw;
            b = tb;
            obj = trial;
        } else {
            let (gw, gb) = subgradient(&w, b, rows, labels, &all, lambda);
            let mut step = eta;
            for _ in 0..40 {
                let cw: Vec<f64> = w.iter().zip(&gw).map(|(wi, g)| wi - step * g).collect();
                let cb = b - step * gb;
                let cand = svm_objective(&cw, cb, rows, labels, lambda);
                if cand <= obj {
                    w = cw;
                    b = cb;
                    obj = cand;
                    break;
                }
                step *= 0.5;
            }
        }
        trace.push(obj);
    }
    (w, b, trace)
}

/// Fit `P(y=1|m) = sigmoid(a m + b)` by Newton's method on the cross-entropy,
/// using Platt's smoothed targets `(N+ + 1)/(N+ + 2)` and `1/(N- + 2)`.
pub fn platt_scale(margins: &[f64], labels: &[u8]) -> (f64, f64) {
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let targets: Vec<f64> = labels
        .iter()
        .map(|&l| if l == 1 { hi } else { lo })
        .collect();

    let loss = |a: f64, b: f64| -> f64 {
        margins
            .iter()
            .zip(&targets)
            .map(|(&m, &t)| {
                let z = a * m + b;
                softplus(z) - t * z
            })
            .sum()
    };

    let (mut a, mut b) = (1.0, ((n_pos + 1.0) / (n_neg + 1.0)).ln());
    let mut f = loss(a, b);
    for _ in 0..100 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 1e-12, 0.0, 1e-12);
        for (&m, &t) in margins.iter().zip(&targets) {
            let p = sigmoid(a * m + b);
            let r = p - t;
            let s = p * (1.0 - p);
            ga += r * m;
            gb += r;
            haa += s * m * m;
            hab += s * m;
            hbb += s;
        }
        if ga.abs().max(gb.abs()) < 1e-10 {
            break;
        }
        let det = haa * hbb - hab * hab;
        let (da, db) = if det > 0.0 {
            (-(hbb * ga - hab * gb) / det, -(haa * gb - hab * ga) / det)
        } else {
            (-ga, -gb)
        };
        let mut step = 1.0;
        let mut moved = false;
        while step > 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = loss(na, nb);
            if nf < f + 1e-4 * step * (ga * da + gb * db) {
                a = na;
                b = nb;
                f = nf;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (a, b)
}

pub fn train_svm(data: &Dataset, cfg: &SvmConfig) -> Result<TrainedModel, ModelError> {
    data.require_both_classes()?;
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(ModelError::InvalidHyperparameter(format!(
            "c must be > 0, got {}",
            cfg.c
        )));
    }
    if cfg.eta0.is_nan() || cfg.eta0 <= 0.0 {
        return Err(ModelError::InvalidHyperparameter(format!(
            "eta0 must be > 0, got {}",
            cfg.eta0
        )));
    }
    let standardizer = Standardizer::fit(data)?;
    let train = standardizer.transform(data);
    let (weights, bias, objective_trace) = fit_svm_primal(&train.rows, &train.labels, cfg);
    let margins: Vec<f64> = train.rows.iter().map(|x| dot(&weights, x) + bias).collect();
    let (platt_a, platt_b) = platt_scale(&margins, &train.labels);
    let model = SvmModel {
        weights,
        bias,
        platt_a,
        platt_b,
        objective_trace,
        config: cfg.clone(),
    };
    Ok(TrainedModel::new(
        data,
        Some(standardizer),
        ModelParams::LinearSVM(model),
    ))
}
