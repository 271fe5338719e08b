//! Boolean rule sets in disjunctive normal form, learned by a greedy cover loop
//! whose clauses come from a beam search over threshold literals.
//!
//! Rules run on unstandardized features so the thresholds read in the units of
//! the data (positions, percentages, set differentials).

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Dataset, ModelError, ModelParams, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparator::Le => "<=",
            Comparator::Gt => ">",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Literal {
    pub feature: usize,
    pub op: Comparator,
    pub threshold: f64,
}

impl Literal {
    pub fn holds(&self, x: &[f64]) -> bool {
        match self.op {
            Comparator::Le => x[self.feature] <= self.threshold,
            Comparator::Gt => x[self.feature] > self.threshold,
        }
    }
}

/// Conjunction of literals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub literals: Vec<Literal>,
}

impl Clause {
    pub fn holds(&self, x: &[f64]) -> bool {
        self.literals.iter().all(|l| l.holds(x))
    }
}

/// OR of clauses. An empty clause list never fires, so it predicts 0 everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub clauses: Vec<Clause>,
    pub feature_names: Vec<String>,
}

impl RuleSet {
    pub fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.clauses.iter().any(|c| c.holds(x)))
    }

    /// Index of the first clause satisfied by `x`.
    pub fn first_match(&self, x: &[f64]) -> Option<usize> {
        self.clauses.iter().position(|c| c.holds(x))
    }

    pub fn literal_count(&self) -> usize {
        self.clauses.iter().map(|c| c.literals.len()).sum()
    }

    /// `Predict Y=1 if [a > 3.00 AND b <= 10.00] OR [...], else predict Y=0`, with
    /// feature names taken from `names`.
    pub fn describe(&self, names: &[&str]) -> String {
        let body = if self.clauses.is_empty() {
            "[FALSE]".to_string()
        } else {
            self.clauses
                .iter()
                .map(|c| {
                    let lits: Vec<String> = c
                        .literals
                        .iter()
                        .map(|l| {
                            let name = names.get(l.feature).copied().unwrap_or("?");
                            format!("{name} {} {:.2}", l.op, l.threshold)
                        })
                        .collect();
                    format!("[{}]", lits.join(" AND "))
                })
                .collect::<Vec<_>>()
                .join(" OR ")
        };
        format!("Predict Y=1 if {body}, else predict Y=0")
    }
}

impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        f.write_str(&self.describe(&names))
    }
}

/// Parameters of the greedy cover and the clause beam search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BrcgConfig {
    pub beam_width: usize,
    pub max_clause_len: usize,
    pub max_clauses: usize,
    /// Cost per literal, in units of misclassified training rows.
    pub lambda_complexity: f64,
}

impl Default for BrcgConfig {
    fn default() -> Self {
        BrcgConfig {
            beam_width: 5,
            max_clause_len: 4,
            max_clauses: 3,
            lambda_complexity: 0.5,
        }
    }
}

/// Fitted rule set plus the training counts used to turn rule firings into scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrcgModel {
    pub rules: RuleSet,
    /// (true positives, false positives) of each clause over the full training set.
    pub clause_counts: Vec<(usize, usize)>,
    /// (positives, rows) among training rows no clause covers.
    pub uncovered_counts: (usize, usize),
    pub config: BrcgConfig,
}

impl BrcgModel {
    /// Laplace-smoothed precision of the first satisfied clause, otherwise the
    /// smoothed positive rate of the uncovered region.
    pub(crate) fn proba(&self, x: &[f64]) -> f64 {
        let (pos, total) = match self.rules.first_match(x) {
            Some(c) => {
                let (tp, fp) = self.clause_counts[c];
                (tp, tp + fp)
            }
            None => self.uncovered_counts,
        };
        (pos as f64 + 1.0) / (total as f64 + 2.0)
    }
}

/// Row-membership bitset.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Bits(Vec<u64>);

impl Bits {
    fn zeros(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }

    fn ones(n: usize) -> Self {
        let mut b = Self::zeros(n);
        for i in 0..n {
            b.set(i);
        }
        b
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn and(&self, other: &Bits) -> Bits {
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }

    fn and_count(&self, other: &Bits) -> usize {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    fn and_not_assign(&mut self, other: &Bits) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a &= !b;
        }
    }

    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }
}

struct LiteralTable {
    literals: Vec<Literal>,
    cover: Vec<Bits>,
}

/// Candidate literals on midpoints between consecutive distinct values of each
/// feature, ordered by (feature, comparator, threshold).
fn literal_table(data: &Dataset) -> LiteralTable {
    let n = data.n_rows();
    let mut literals = Vec::new();
    let mut cover = Vec::new();
    for j in 0..data.n_features() {
        let mut values: Vec<f64> = data.rows.iter().map(|r| r[j]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let thresholds: Vec<f64> = values.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        for op in [Comparator::Le, Comparator::Gt] {
            for &t in &thresholds {
                let lit = Literal {
                    feature: j,
                    op,
                    threshold: t,
                };
                let mut bits = Bits::zeros(n);
                for (i, row) in data.rows.iter().enumerate() {
                    if lit.holds(row) {
                        bits.set(i);
                    }
                }
                literals.push(lit);
                cover.push(bits);
            }
        }
    }
    LiteralTable { literals, cover }
}

#[derive(Debug, Clone)]
struct Candidate {
    /// Sorted literal ids; lexicographic order is the tie-break.
    lits: Vec<usize>,
    cover: Bits,
    score: f64,
    bound: f64,
}

fn cmp_by(
    a: &Candidate,
    b: &Candidate,
    primary: fn(&Candidate) -> f64,
    secondary: fn(&Candidate) -> f64,
) -> Ordering {
    primary(b)
        .total_cmp(&primary(a))
        .then_with(|| secondary(b).total_cmp(&secondary(a)))
        .then_with(|| a.lits.cmp(&b.lits))
}

fn by_score(a: &Candidate, b: &Candidate) -> Ordering {
    cmp_by(a, b, |c| c.score, |c| c.bound)
}

fn by_bound(a: &Candidate, b: &Candidate) -> Ordering {
    cmp_by(a, b, |c| c.bound, |c| c.score)
}

/// Keeps the best `k` candidates under `order`, skipping duplicates.
struct TopK {
    k: usize,
    order: fn(&Candidate, &Candidate) -> Ordering,
    items: Vec<Candidate>,
}

impl TopK {
    fn new(k: usize, order: fn(&Candidate, &Candidate) -> Ordering) -> Self {
        TopK {
            k,
            order,
            items: Vec::with_capacity(k + 1),
        }
    }

    fn offer(&mut self, c: &Candidate) {
        if self.items.len() == self.k {
            if let Some(last) = self.items.last() {
                if (self.order)(c, last) != Ordering::Less {
                    return;
                }
            }
        }
        if self.items.iter().any(|x| x.lits == c.lits) {
            return;
        }
        let pos = self
            .items
            .iter()
            .position(|x| (self.order)(c, x) == Ordering::Less)
            .unwrap_or(self.items.len());
        self.items.insert(pos, c.clone());
        self.items.truncate(self.k);
    }
}

/// Beam search for the conjunction with the best marginal objective
/// `new true positives - new false positives - lambda * length`.
///
/// Each level expands the `beam_width` best clauses by objective plus the
/// `beam_width` best by optimistic bound (`true positives - lambda * length`,
/// what the clause could reach if refinement removed all its false positives).
fn search_clause(
    table: &LiteralTable,
    remaining_pos: &Bits,
    uncovered_neg: &Bits,
    n: usize,
    cfg: &BrcgConfig,
) -> Option<Candidate> {
    let root = Candidate {
        lits: Vec::new(),
        cover: Bits::ones(n),
        score: f64::NEG_INFINITY,
        bound: f64::INFINITY,
    };
    let mut beam = vec![root];
    let mut best: Option<Candidate> = None;

    for depth in 1..=cfg.max_clause_len {
        let mut top_score = TopK::new(cfg.beam_width, by_score);
        let mut top_bound = TopK::new(cfg.beam_width, by_bound);
        for parent in &beam {
            let parent_count = parent.cover.count();
            for (id, lit) in table.literals.iter().enumerate() {
                if parent.lits.iter().any(|&p| {
                    table.literals[p].feature == lit.feature && table.literals[p].op == lit.op
                }) {
                    continue;
                }
                let cover = parent.cover.and(&table.cover[id]);
                let tp = cover.and_count(remaining_pos);
                if tp == 0 || cover.count() == parent_count {
                    continue;
                }
                let fp = cover.and_count(uncovered_neg);
                let penalty = cfg.lambda_complexity * depth as f64;
                let mut lits = parent.lits.clone();
                let at = lits.partition_point(|&x| x < id);
                lits.insert(at, id);
                let cand = Candidate {
                    lits,
                    cover,
                    score: tp as f64 - fp as f64 - penalty,
                    bound: tp as f64 - penalty,
                };
                if best
                    .as_ref()
                    .is_none_or(|b| by_score(&cand, b) == Ordering::Less)
                {
                    best = Some(cand.clone());
                }
                top_score.offer(&cand);
                top_bound.offer(&cand);
            }
        }
        let mut next = top_score.items;
        for c in top_bound.items {
            if !next.iter().any(|x| x.lits == c.lits) {
                next.push(c);
            }
        }
        if next.is_empty() {
            break;
        }
        beam = next;
    }
    best
}

/// Learn a DNF rule set by greedy covering.
///
/// Up to `max_clauses` times: find the clause maximising the marginal objective,
/// keep it if the objective is positive, and drop the positives it covers (and
/// the negatives it already misclassifies) from further consideration. With no
/// positive labels the result is the empty, never-firing rule set.
pub fn train_brcg(data: &Dataset, cfg: &BrcgConfig) -> Result<RuleSet, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if cfg.beam_width == 0 || cfg.max_clause_len == 0 {
        return Err(ModelError::InvalidHyperparameter(
            "beam_width and max_clause_len must be >= 1".into(),
        ));
    }
    if !(cfg.lambda_complexity >= 0.0 && cfg.lambda_complexity.is_finite()) {
        return Err(ModelError::InvalidHyperparameter(format!(
            "lambda_complexity must be >= 0, got {}",
            cfg.lambda_complexity
        )));
    }
    let n = data.n_rows();
    let n_pos = data.n_positive();
    let feature_names = data.feature_names.clone();
    if n_pos == 0 {
        return Ok(RuleSet {
            clauses: Vec::new(),
            feature_names,
        });
    }
    if n_pos == n {
        return Err(ModelError::SingleClassData);
    }

    let table = literal_table(data);
    let mut remaining_pos = Bits::zeros(n);
    let mut uncovered_neg = Bits::zeros(n);
    for (i, &l) in data.labels.iter().enumerate() {
        if l == 1 {
            remaining_pos.set(i);
        } else {
            uncovered_neg.set(i);
        }
    }

    let mut clauses = Vec::new();
    while clauses.len() < cfg.max_clauses && remaining_pos.count() > 0 {
        let Some(best) = search_clause(&table, &remaining_pos, &uncovered_neg, n, cfg) else {
            break;
        };
        if best.score <= 0.0 {
            break;
        }
        remaining_pos.and_not_assign(&best.cover);
        uncovered_neg.and_not_assign(&best.cover);
        clauses.push(Clause {
            literals: best.lits.iter().map(|&id| table.literals[id]).collect(),
        });
    }
    Ok(RuleSet {
        clauses,
        feature_names,
    })
}

/// Train the rule set and wrap it with the counts needed for probability output.
pub fn fit_brcg_model(data: &Dataset, cfg: &BrcgConfig) -> Result<TrainedModel, ModelError> {
    data.require_both_classes()?;
    let rules = train_brcg(data, cfg)?;
    let mut clause_counts = vec![(0usize, 0usize); rules.clauses.len()];
    let mut uncovered = (0usize, 0usize);
    for (row, &label) in data.rows.iter().zip(&data.labels) {
        match rules.first_match(row) {
            Some(c) => {
                if label == 1 {
                    clause_counts[c].0 += 1;
                } else {
                    clause_counts[c].1 += 1;
                }
            }
            None => {
                uncovered.0 += usize::from(label);
                uncovered.1 += 1;
            }
        }
    }
    let model = BrcgModel {
        rules,
        clause_counts,
        uncovered_counts: uncovered,
        config: cfg.clone(),
    };
    Ok(TrainedModel::new(data, None, ModelParams::Brcg(model)))
}
