//! Local post-hoc explanations.
//!
//! Attributions use interventional ("replace by background") semantics: the
//! value of a coalition `S` is the mean model output over background rows with
//! the features in `S` fixed to the explained row,
//!
//! ```text
//! v(S) = mean_b f(x_S, b_{not S})
//! ```
//!
//! [`exact_shapley`] enumerates every coalition and is the reference for
//! [`kernel_shap`], which solves the Shapley-kernel weighted least squares
//! problem over enumerated or sampled coalitions. [`protodash`] picks weighted
//! training prototypes for a single target row.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::models::Scorer;
use crate::seed::{child_seed, rng_from_seed};

/// Default cap on `2^M * |background|` model evaluations for [`exact_shapley`].
pub const DEFAULT_EXACT_BUDGET: usize = (1 << 12) * 50;
pub const DEFAULT_BACKGROUND_SIZE: usize = 50;
pub const DEFAULT_PROTOTYPES: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("background set is empty")]
    EmptyBackground,
    #[error("exact Shapley needs {needed} model evaluations, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: usize },
    #[error("coalition design matrix is rank deficient")]
    DegenerateSystem,
    #[error("expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("need at least {min} coalitions for {features} features, got {got}")]
    TooFewCoalitions {
        min: usize,
        features: usize,
        got: usize,
    },
    #[error("number of prototypes must be between 1 and {candidates}, got {m}")]
    InvalidM { m: usize, candidates: usize },
    #[error("kernel width gamma must be finite and > 0, got {0}")]
    InvalidGamma(f64),
}

/// Additive decomposition of one prediction: `base_value + sum(phi) = predicted`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub match_id: String,
    /// Mean model output over the background set.
    pub base_value: f64,
    pub phi: Vec<f64>,
    /// Model output at the explained row.
    pub predicted: f64,
}

impl Attribution {
    pub fn with_match_id(mut self, id: impl Into<String>) -> Self {
        self.match_id = id.into();
        self
    }

    /// `|base_value + sum(phi) - predicted|`.
    pub fn additivity_gap(&self) -> f64 {
        (self.base_value + self.phi.iter().sum::<f64>() - self.predicted).abs()
    }

    /// JSON document `{match_id, base_value, predicted, phi: {name: value}}`
    /// with values rounded to six decimals and `phi` in column order.
    pub fn to_json(&self, feature_names: &[&str]) -> serde_json::Value {
        let phi: serde_json::Map<String, serde_json::Value> = feature_names
            .iter()
            .zip(&self.phi)
            .map(|(name, v)| (name.to_string(), round6(*v).into()))
            .collect();
        serde_json::json!({
            "match_id": self.match_id,
            "base_value": round6(self.base_value),
            "predicted": round6(self.predicted),
            "phi": phi,
        })
    }
}

pub fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn validate_inputs(x: &[f64], background: &[Vec<f64>]) -> Result<(), ExplainError> {
    if background.is_empty() {
        return Err(ExplainError::EmptyBackground);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ExplainError::NonFiniteInput);
    }
    for b in background {
        if b.len() != x.len() {
            return Err(ExplainError::DimensionMismatch {
                expected: x.len(),
                found: b.len(),
            });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(ExplainError::NonFiniteInput);
        }
    }
    Ok(())
}

/// Coalition value function over a fixed row and background.
pub struct CoalitionValue<'a, S: Scorer + ?Sized> {
    model: &'a S,
    x: &'a [f64],
    background: &'a [Vec<f64>],
    scratch: Vec<f64>,
}

impl<'a, S: Scorer + ?Sized> CoalitionValue<'a, S> {
    pub fn new(model: &'a S, x: &'a [f64], background: &'a [Vec<f64>]) -> Self {
        CoalitionValue {
            model,
            x,
            background,
            scratch: vec![0.0; x.len()],
        }
    }

    /// `v(S)` for the coalition whose members satisfy `present(j)`.
    pub fn value(&mut self, present: impl Fn(usize) -> bool) -> f64 {
        let mut total = 0.0;
        for b in self.background {
            for (j, slot) in self.scratch.iter_mut().enumerate() {
                *slot = if present(j) { self.x[j] } else { b[j] };
            }
            total += self.model.score(&self.scratch);
        }
        total / self.background.len() as f64
    }

    pub fn value_of_mask(&mut self, mask: u64) -> f64 {
        self.value(|j| mask >> j & 1 == 1)
    }
}

/// Exact Shapley values by enumerating all `2^M` coalitions:
///
/// `phi_i = sum_{S not containing i} |S|! (M-|S|-1)! / M! * (v(S + i) - v(S))`.
///
/// Errors with [`ExplainError::BudgetExceeded`] when `2^M * |background|`
/// exceeds `budget`.
pub fn exact_shapley<S: Scorer + ?Sized>(
    model: &S,
    x: &[f64],
    background: &[Vec<f64>],
    budget: usize,
) -> Result<Attribution, ExplainError> {
    validate_inputs(x, background)?;
    let m = x.len();
    let needed = if m >= 64 {
        u128::MAX
    } else {
        (1u128 << m) * background.len() as u128
    };
    if m > 30 || needed > budget as u128 {
        return Err(ExplainError::BudgetExceeded { needed, budget });
    }
    let mut value = CoalitionValue::new(model, x, background);
    let values: Vec<f64> = (0..1u64 << m)
        .map(|mask| value.value_of_mask(mask))
        .collect();

    // weight[s] = s! (M - s - 1)! / M! = 1 / (M * C(M-1, s))
    let weight: Vec<f64> = (0..m)
        .map(|s| 1.0 / (m as f64 * binomial(m - 1, s)))
        .collect();
    let mut phi = vec![0.0; m];
    for (mask, &v) in values.iter().enumerate() {
        let size = (mask as u64).count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if mask >> i & 1 == 0 {
                *p += weight[size] * (values[mask | 1 << i] - v);
            }
        }
    }
    Ok(Attribution {
        match_id: String::new(),
        base_value: values[0],
        phi,
        predicted: values[(1usize << m) - 1],
    })
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley kernel weight of a coalition of size `s` out of `m` features.
pub fn shapley_kernel(m: usize, s: usize) -> f64 {
    (m as f64 - 1.0) / (binomial(m, s) * s as f64 * (m - s) as f64)
}

/// Coalition masks with their regression weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionPlan {
    pub masks: Vec<u64>,
    pub weights: Vec<f64>,
}

/// Every proper, non-empty coalition weighted by the Shapley kernel.
pub fn enumerate_coalitions(m: usize) -> CoalitionPlan {
    let full = (1u64 << m) - 1;
    let masks: Vec<u64> = (1..full).collect();
    let weights = masks
        .iter()
        .map(|mask| shapley_kernel(m, mask.count_ones() as usize))
        .collect();
    CoalitionPlan { masks, weights }
}

/// Draw `draws` coalitions from the Shapley kernel distribution restricted to
/// the sizes in `sizes`: the size `s` with probability proportional to
/// `(M-1) / (s (M-s))`, then a uniform subset of that size. Draws come in
/// complementary pairs, so `sizes` must be closed under `s -> M - s`.
/// Each draw carries weight `mass / draws`, where `mass` is the total kernel
/// weight of the sampled sizes; repeated coalitions are merged.
fn sample_sizes<R: Rng>(
    m: usize,
    sizes: &[usize],
    draws: usize,
    rng: &mut R,
    counts: &mut BTreeMap<u64, f64>,
) {
    let size_weights: Vec<f64> = sizes
        .iter()
        .map(|&s| (m as f64 - 1.0) / (s * (m - s)) as f64)
        .collect();
    let total: f64 = size_weights.iter().sum();
    if draws == 0 || total == 0.0 {
        return;
    }
    let per_draw = total / draws as f64;
    let full = (1u64 << m) - 1;
    let mut drawn = 0;
    while drawn < draws {
        let mut u = rng.random::<f64>() * total;
        let mut size = *sizes.last().expect("non-empty sizes");
        for (&s, w) in sizes.iter().zip(&size_weights) {
            if u < *w {
                size = s;
                break;
            }
            u -= w;
        }
        let mask = sample(rng, m, size)
            .iter()
            .fold(0u64, |acc, j| acc | 1 << j);
        *counts.entry(mask).or_default() += per_draw;
        drawn += 1;
        if drawn < draws {
            *counts.entry(full & !mask).or_default() += per_draw;
            drawn += 1;
        }
    }
}

fn plan_from_counts(counts: BTreeMap<u64, f64>) -> CoalitionPlan {
    CoalitionPlan {
        masks: counts.keys().copied().collect(),
        weights: counts.values().copied().collect(),
    }
}

/// `draws` coalitions sampled from the Shapley kernel over all proper sizes,
/// in complementary pairs (see [`sample_sizes`]).
pub fn sample_coalitions<R: Rng>(m: usize, draws: usize, rng: &mut R) -> CoalitionPlan {
    let sizes: Vec<usize> = (1..m).collect();
    let mut counts = BTreeMap::new();
    sample_sizes(m, &sizes, draws, rng, &mut counts);
    plan_from_counts(counts)
}

/// Coalition plan for a budget of `draws` proper coalitions.
///
/// Size tiers `{s, M-s}` are taken smallest first and enumerated completely,
/// with exact kernel weights, while the budget covers them. The remaining
/// budget is sampled from the sizes that were not enumerated.
pub fn plan_coalitions<R: Rng>(m: usize, draws: usize, rng: &mut R) -> CoalitionPlan {
    let mut counts: BTreeMap<u64, f64> = BTreeMap::new();
    let mut remaining = draws;
    let mut s = 1;
    while s <= m / 2 {
        let tier = if 2 * s == m {
            binomial(m, s)
        } else {
            2.0 * binomial(m, s)
        };
        if tier > remaining as f64 {
            break;
        }
        let full = (1u64 << m) - 1;
        let w = shapley_kernel(m, s);
        for mask in 1..full {
            let size = mask.count_ones() as usize;
            if size == s || size == m - s {
                counts.insert(mask, w);
            }
        }
        remaining -= tier as usize;
        s += 1;
    }
    let leftover: Vec<usize> = (s..=m - s).collect();
    if !leftover.is_empty() {
        sample_sizes(m, &leftover, remaining, rng, &mut counts);
    }
    plan_from_counts(counts)
}

/// Weighted least squares for `phi` subject to `sum(phi) = v(all) - v(none)`.
///
/// The constraint eliminates the last coefficient; the reduced normal equations
/// are solved by Cholesky, which fails on rank-deficient designs.
fn solve_constrained(
    m: usize,
    plan: &CoalitionPlan,
    values: &[f64],
    v0: f64,
    v1: f64,
) -> Result<Vec<f64>, ExplainError> {
    let total = v1 - v0;
    let last = m - 1;
    let k = m - 1;
    let mut ata = DMatrix::<f64>::zeros(k, k);
    let mut aty = DVector::<f64>::zeros(k);
    let mut row = vec![0.0; k];
    for ((&mask, &w), &v) in plan.masks.iter().zip(&plan.weights).zip(values) {
        let z_last = (mask >> last & 1) as f64;
        for (j, r) in row.iter_mut().enumerate() {
            *r = (mask >> j & 1) as f64 - z_last;
        }
        let y = v - v0 - z_last * total;
        for a in 0..k {
            if row[a] == 0.0 {
                continue;
            }
            let wa = w * row[a];
            aty[a] += wa * y;
            for b in 0..k {
                ata[(a, b)] += wa * row[b];
            }
        }
    }
    let scale = (0..k).map(|i| ata[(i, i)]).fold(0.0_f64, f64::max);
    if scale <= 0.0 {
        return Err(ExplainError::DegenerateSystem);
    }
    // Rank check: the smallest pivot of a Cholesky factor of a singular design is ~0.
    let chol = ata
        .clone()
        .cholesky()
        .ok_or(ExplainError::DegenerateSystem)?;
    let min_pivot = (0..k)
        .map(|i| chol.l_dirty()[(i, i)])
        .fold(f64::INFINITY, f64::min);
    if min_pivot * min_pivot < 1e-12 * scale {
        return Err(ExplainError::DegenerateSystem);
    }
    let beta = chol.solve(&aty);
    let mut phi: Vec<f64> = beta.iter().copied().collect();
    phi.push(total - phi.iter().sum::<f64>());
    Ok(phi)
}

/// Kernel SHAP.
///
/// With `n_coalitions >= 2^M` every coalition is enumerated (the result then
/// equals the exact Shapley values up to rounding); otherwise the all-ones and
/// all-zeros coalitions are pinned through the constraint and the remaining
/// `n_coalitions - 2` follow [`plan_coalitions`]. A rank-deficient plan is
/// redrawn once with a derived seed before giving up.
pub fn kernel_shap<S: Scorer + ?Sized>(
    model: &S,
    x: &[f64],
    background: &[Vec<f64>],
    n_coalitions: usize,
    seed: u64,
) -> Result<Attribution, ExplainError> {
    validate_inputs(x, background)?;
    let m = x.len();
    if m < 64 && (n_coalitions as u128) >= (1u128 << m) {
        return kernel_shap_with_plan(model, x, background, &enumerate_coalitions(m));
    }
    regress_with_retry(model, x, background, n_coalitions, seed, plan_coalitions)
}

/// Kernel SHAP over `n_coalitions - 2` coalitions drawn by
/// [`sample_coalitions`], with no enumerated tiers, whatever the budget.
pub fn kernel_shap_sampled<S: Scorer + ?Sized>(
    model: &S,
    x: &[f64],
    background: &[Vec<f64>],
    n_coalitions: usize,
    seed: u64,
) -> Result<Attribution, ExplainError> {
    validate_inputs(x, background)?;
    regress_with_retry(model, x, background, n_coalitions, seed, sample_coalitions)
}

fn regress_with_retry<S: Scorer + ?Sized>(
    model: &S,
    x: &[f64],
    background: &[Vec<f64>],
    n_coalitions: usize,
    seed: u64,
    planner: fn(usize, usize, &mut rand_chacha::ChaCha8Rng) -> CoalitionPlan,
) -> Result<Attribution, ExplainError> {
    let m = x.len();
    if !(2..=63).contains(&m) {
        return kernel_shap_with_plan(
            model,
            x,
            background,
            &CoalitionPlan {
                masks: vec![],
                weights: vec![],
            },
        );
    }
    if n_coalitions < m + 2 {
        return Err(ExplainError::TooFewCoalitions {
            min: m + 2,
            features: m,
            got: n_coalitions,
        });
    }
    let mut rng = rng_from_seed(seed);
    let plan = planner(m, n_coalitions - 2, &mut rng);
    match kernel_shap_with_plan(model, x, background, &plan) {
        Err(ExplainError::DegenerateSystem) => {
            let mut rng = rng_from_seed(child_seed(seed, "kernel-shap-resample"));
            let plan = planner(m, n_coalitions - 2, &mut rng);
            kernel_shap_with_plan(model, x, background, &plan)
        }
        other => other,
    }
}

/// Kernel SHAP regression on an explicit coalition plan.
pub fn kernel_shap_with_plan<S: Scorer + ?Sized>(
    model: &S,
    x: &[f64],
    background: &[Vec<f64>],
    plan: &CoalitionPlan,
) -> Result<Attribution, ExplainError> {
    validate_inputs(x, background)?;
    let m = x.len();
    let mut value = CoalitionValue::new(model, x, background);
    let v0 = value.value(|_| false);
    let v1 = value.value(|_| true);
    let phi = match m {
        0 => Vec::new(),
        1 => vec![v1 - v0],
        _ => {
            let values: Vec<f64> = plan
                .masks
                .iter()
                .map(|&mask| value.value_of_mask(mask))
                .collect();
            solve_constrained(m, plan, &values, v0, v1)?
        }
    };
    Ok(Attribution {
        match_id: String::new(),
        base_value: v0,
        phi,
        predicted: v1,
    })
}

/// Up to `size` rows drawn without replacement, in their original order.
pub fn sample_background(rows: &[Vec<f64>], size: usize, seed: u64) -> Vec<Vec<f64>> {
    if rows.len() <= size {
        return rows.to_vec();
    }
    let mut rng = rng_from_seed(seed);
    let mut picked = sample(&mut rng, rows.len(), size).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| rows[i].clone()).collect()
}

/// Column means of `rows`.
pub fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
    mean
}

/// Stream seed for explaining one match, derived from the root seed.
pub fn explanation_seed(root: u64, match_id: &str) -> u64 {
    child_seed(root, &format!("explain/{match_id}"))
}

// ---------------------------------------------------------------------------
// ProtoDash
// ---------------------------------------------------------------------------

/// `exp(-gamma * |a - b|^2)`.
pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * sq).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtoDashConfig {
    pub m: usize,
    pub gamma: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl ProtoDashConfig {
    pub fn new(m: usize, gamma: f64) -> Self {
        ProtoDashConfig {
            m,
            gamma,
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

/// Selected candidate indices (selection order) with their non-negative weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtoDashSelection {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    /// Objective `w.mu - w.K.w / 2` after each greedy step.
    pub objective_trace: Vec<f64>,
}

fn protodash_objective(w: &[f64], mu: &[f64], k: &[Vec<f64>]) -> f64 {
    let linear: f64 = w.iter().zip(mu).map(|(a, b)| a * b).sum();
    let mut quad = 0.0;
    for (i, wi) in w.iter().enumerate() {
        for (j, wj) in w.iter().enumerate() {
            quad += wi * k[i][j] * wj;
        }
    }
    linear - 0.5 * quad
}

/// Projected gradient ascent of `w.mu - w.K.w / 2` over `w >= 0`, step `1/L`
/// with `L` the largest absolute row sum of `K` (a bound on its top eigenvalue).
fn nonneg_quadratic_max(mu: &[f64], k: &[Vec<f64>], w: &mut [f64], tol: f64, max_iter: usize) {
    let lipschitz = k
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let step = 1.0 / lipschitz;
    let n = w.len();
    let mut grad = vec![0.0; n];
    for _ in 0..max_iter {
        for i in 0..n {
            grad[i] = mu[i] - (0..n).map(|j| k[i][j] * w[j]).sum::<f64>();
        }
        let pg_norm = w
            .iter()
            .zip(&grad)
            .map(|(&wi, &g)| if wi > 0.0 { g * g } else { g.max(0.0).powi(2) })
            .sum::<f64>()
            .sqrt();
        if pg_norm <= tol {
            break;
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi = (*wi + step * g).max(0.0);
        }
    }
}

/// Greedy ProtoDash selection of `m` prototypes for a single target row.
///
/// With `mu_j = k(candidate_j, target)` and `K` the kernel among selected
/// candidates, each step adds the unselected candidate with the largest
/// gradient `mu_j - sum_s k(j, s) w_s` of the objective at the current weights
/// (lowest index on ties), then re-optimises the weights over `w >= 0`.
pub fn protodash(
    target: &[f64],
    candidates: &[Vec<f64>],
    cfg: &ProtoDashConfig,
) -> Result<ProtoDashSelection, ExplainError> {
    if cfg.m == 0 || cfg.m > candidates.len() {
        return Err(ExplainError::InvalidM {
            m: cfg.m,
            candidates: candidates.len(),
        });
    }
    if !(cfg.gamma > 0.0 && cfg.gamma.is_finite()) {
        return Err(ExplainError::InvalidGamma(cfg.gamma));
    }
    if target
        .iter()
        .chain(candidates.iter().flatten())
        .any(|v| !v.is_finite())
    {
        return Err(ExplainError::NonFiniteInput);
    }
    if let Some(bad) = candidates.iter().find(|c| c.len() != target.len()) {
        return Err(ExplainError::DimensionMismatch {
            expected: target.len(),
            found: bad.len(),
        });
    }

    let mu_all: Vec<f64> = candidates
        .iter()
        .map(|c| rbf_kernel(c, target, cfg.gamma))
        .collect();
    let mut selected: Vec<usize> = Vec::with_capacity(cfg.m);
    let mut is_selected = vec![false; candidates.len()];
    let mut weights: Vec<f64> = Vec::with_capacity(cfg.m);
    // Kernel columns against the selected set, one Vec per candidate.
    let mut k_cols: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.m); candidates.len()];
    let mut trace = Vec::with_capacity(cfg.m);

    for _ in 0..cfg.m {
        let mut best: Option<(usize, f64)> = None;
        for (j, cand_k) in k_cols.iter().enumerate() {
            if is_selected[j] {
                continue;
            }
            let g = mu_all[j] - cand_k.iter().zip(&weights).map(|(k, w)| k * w).sum::<f64>();
            if best.is_none_or(|(_, bg)| g > bg) {
                best = Some((j, g));
            }
        }
        let (pick, _) = best.expect("m <= candidate count");
        selected.push(pick);
        is_selected[pick] = true;
        weights.push(0.0);
        for (j, col) in k_cols.iter_mut().enumerate() {
            col.push(rbf_kernel(&candidates[j], &candidates[pick], cfg.gamma));
        }

        let mu: Vec<f64> = selected.iter().map(|&s| mu_all[s]).collect();
        let k: Vec<Vec<f64>> = selected.iter().map(|&s| k_cols[s].clone()).collect();
        nonneg_quadratic_max(&mu, &k, &mut weights, cfg.tol, cfg.max_iter);
        trace.push(protodash_objective(&weights, &mu, &k));
    }

    Ok(ProtoDashSelection {
        indices: selected,
        weights,
        objective_trace: trace,
    })
}

/// Per-feature similarity `exp(-|p_i - t_i| / scale_i)` in `[0, 1]`.
/// A zero scale (constant training column) gives 1 when equal, else 0.
pub fn feature_similarity(prototype: &[f64], target: &[f64], scales: &[f64]) -> Vec<f64> {
    prototype
        .iter()
        .zip(target)
        .zip(scales)
        .map(|((p, t), s)| {
            let diff = (p - t).abs();
            if *s > 0.0 {
                (-diff / s).exp()
            } else if diff == 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub match_id: String,
    pub candidate_index: usize,
    pub weight: f64,
    /// Weight divided by the total weight of all selected prototypes.
    pub normalized_weight: f64,
    pub similarity: Vec<f64>,
}

/// Prototypes for one target match, in selection order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeResult {
    pub target_match_id: String,
    pub prototypes: Vec<Prototype>,
    /// True when the first prototype carries more than half of the total weight.
    pub dominant_first: bool,
}

/// Attach match ids and per-feature similarities to a selection.
/// `*_raw` rows are on the original feature scale; `scales` are the training
/// standard deviations (0 for constant columns).
pub fn prototype_result(
    target_match_id: &str,
    target_raw: &[f64],
    selection: &ProtoDashSelection,
    candidate_ids: &[String],
    candidates_raw: &[Vec<f64>],
    scales: &[f64],
) -> PrototypeResult {
    let total: f64 = selection.weights.iter().sum();
    let prototypes: Vec<Prototype> = selection
        .indices
        .iter()
        .zip(&selection.weights)
        .map(|(&i, &w)| Prototype {
            match_id: candidate_ids[i].clone(),
            candidate_index: i,
            weight: w,
            normalized_weight: if total > 0.0 { w / total } else { 0.0 },
            similarity: feature_similarity(&candidates_raw[i], target_raw, scales),
        })
        .collect();
    let dominant_first = prototypes
        .first()
        .is_some_and(|p| p.normalized_weight > 0.5);
    PrototypeResult {
        target_match_id: target_match_id.to_string(),
        prototypes,
        dominant_first,
    }
}
