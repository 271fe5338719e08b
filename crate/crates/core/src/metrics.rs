//! Classification metrics, the faithfulness score for attributions, and the
//! model comparison report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::explain::Attribution;
use crate::models::{Dataset, ModelError, ModelKind, Scorer, TrainedModel};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("predictions and labels differ in length ({preds} vs {labels})")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("no samples to evaluate")]
    Empty,
    #[error("AUC needs both classes among the labels")]
    SingleClassLabels,
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn check_lengths(a: usize, b: usize) -> Result<(), MetricsError> {
    if a != b {
        return Err(MetricsError::LengthMismatch {
            preds: a,
            labels: b,
        });
    }
    if a == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Fraction of positions where `preds` equals `labels`.
pub fn accuracy(preds: &[u8], labels: &[u8]) -> Result<f64, MetricsError> {
    check_lengths(preds.len(), labels.len())?;
    let correct = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / preds.len() as f64)
}

/// True positive, false positive, false negative and true negative counts.
pub fn confusion(preds: &[u8], labels: &[u8], positive: u8) -> (usize, usize, usize, usize) {
    let mut c = (0, 0, 0, 0);
    for (&p, &y) in preds.iter().zip(labels) {
        match (p == positive, y == positive) {
            (true, true) => c.0 += 1,
            (true, false) => c.1 += 1,
            (false, true) => c.2 += 1,
            (false, false) => c.3 += 1,
        }
    }
    c
}

/// F1 score `2 TP / (2 TP + FP + FN)` of class `positive`; 0 when undefined.
pub fn f1(preds: &[u8], labels: &[u8], positive: u8) -> Result<f64, MetricsError> {
    check_lengths(preds.len(), labels.len())?;
    let (tp, fp, fn_, _) = confusion(preds, labels, positive);
    let denom = 2 * tp + fp + fn_;
    Ok(if denom == 0 || tp == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    })
}

/// Area under the ROC curve as the Mann-Whitney statistic: the probability a
/// random positive outscores a random negative, ties counting one half.
/// Computed from midranks in `O(n log n)`.
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricsError> {
    check_lengths(scores.len(), labels.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(MetricsError::NonFiniteInput);
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClassLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of (1-based) midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Pearson correlation of two equal-length samples, `None` when either has
/// zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Faithfulness {
    /// Correlation in `[-1, 1]`; 0 when degenerate.
    pub value: f64,
    /// Either the attributions or the output drops had zero variance.
    pub degenerate: bool,
}

/// Pearson correlation between attributions and the output drop
/// `f(x) - f(x with feature i set to baseline_i)` of each single feature.
pub fn faithfulness<S: Scorer + ?Sized>(
    model: &S,
    x: &[f64],
    attribution: &Attribution,
    baseline: &[f64],
) -> Result<Faithfulness, MetricsError> {
    check_lengths(attribution.phi.len(), x.len())?;
    check_lengths(baseline.len(), x.len())?;
    if x.iter()
        .chain(baseline)
        .chain(&attribution.phi)
        .any(|v| !v.is_finite())
    {
        return Err(MetricsError::NonFiniteInput);
    }
    let full = model.score(x);
    let mut perturbed = x.to_vec();
    let drops: Vec<f64> = (0..x.len())
        .map(|i| {
            perturbed[i] = baseline[i];
            let d = full - model.score(&perturbed);
            perturbed[i] = x[i];
            d
        })
        .collect();
    if drops.iter().any(|d| !d.is_finite()) {
        return Err(MetricsError::NonFiniteInput);
    }
    Ok(match pearson(&attribution.phi, &drops) {
        Some(value) => Faithfulness {
            value,
            degenerate: false,
        },
        None => Faithfulness {
            value: 0.0,
            degenerate: true,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub kind: ModelKind,
    pub accuracy: f64,
    pub f1: f64,
    pub auc_roc: f64,
    pub n_test: usize,
}

/// Score `test` with `model`; predictions are `proba >= threshold`.
/// AUC falls back to 0.5 when the test labels hold a single class.
pub fn evaluate_model(
    model: &TrainedModel,
    test: &Dataset,
    threshold: f64,
) -> Result<MetricsReport, MetricsError> {
    if test.n_rows() == 0 {
        return Err(MetricsError::Empty);
    }
    let probs = test
        .rows
        .iter()
        .map(|x| model.predict_proba(x))
        .collect::<Result<Vec<f64>, _>>()?;
    let preds: Vec<u8> = probs.iter().map(|&p| u8::from(p >= threshold)).collect();
    let auc = match auc_roc(&probs, &test.labels) {
        Err(MetricsError::SingleClassLabels) => 0.5,
        other => other?,
    };
    Ok(MetricsReport {
        kind: model.kind(),
        accuracy: accuracy(&preds, &test.labels)?,
        f1: f1(&preds, &test.labels, 1)?,
        auc_roc: auc,
        n_test: test.n_rows(),
    })
}

/// Accuracy of always predicting the more frequent label of `labels`.
pub fn majority_baseline(labels: &[u8]) -> Result<f64, MetricsError> {
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    Ok(pos.max(labels.len() - pos) as f64 / labels.len() as f64)
}

/// Reports sorted by accuracy, best first; ties keep their input order.
pub fn sort_reports(reports: &mut [MetricsReport]) {
    reports.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy));
}

/// Aligned plain-text comparison table, one row per report in the given order.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let header = ["Models", "Type of Model", "Accuracy", "F1-Score", "AUC-ROC"];
    let rows: Vec<[String; 5]> = reports
        .iter()
        .map(|r| {
            [
                r.kind.display_name().to_string(),
                if r.kind.is_white_box() {
                    "White-box"
                } else {
                    "Black-box"
                }
                .to_string(),
                format!("{:.4}", r.accuracy),
                format!("{:.4}", r.f1),
                format!("{:.4}", r.auc_roc),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: &[&str], out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i < 2 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", parts.join(" | ").trim_end());
    };
    line(&header, &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("-|-"));
    for row in &rows {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&cells, &mut out);
    }
    out
}
