//! The `synth`, `run` and `explain` commands.
//!
//! A run directory has a fixed layout:
//!
//! ```text
//! run.toml                resolved configuration
//! run.json                manifest: sizes, derived seeds, training fingerprint
//! data/                   matches.csv, train_features.csv, test_features.csv
//! models/                 one JSON file per model kind
//! reports/                metrics table (text and JSON), rule set, importance ranking
//! explanations/           written by `explain`
//! ```
//!
//! `run` writes into a staging directory and moves the result into place only
//! after every step succeeded.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use volleyxai::data::{self, RawMatch};
use volleyxai::explain::{
    self, column_means, exact_shapley, kernel_shap, protodash, round6, sample_background,
    Attribution, ExplainError, ProtoDashConfig, PrototypeResult, DEFAULT_EXACT_BUDGET,
};
use volleyxai::features::{self, FeatureVector, FEATURE_LABELS, FEATURE_NAMES};
use volleyxai::metrics::{self, Faithfulness, MetricsReport};
use volleyxai::models::{self, Dataset, ModelConfigs, ModelKind, Standardizer, TrainedModel};
use volleyxai::seed::child_seed;
use volleyxai::Scorer;

use crate::config::RunConfig;
use crate::error::CliError;

const RUN_ENTRIES: [&str; 6] = [
    "run.toml",
    "run.json",
    "data",
    "models",
    "reports",
    "explanations",
];
/// Largest feature count accepted by `shap-exact`.
pub const MAX_EXACT_FEATURES: usize = 12;

pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<usize, CliError> {
    cfg.validate()?;
    let matches = data::generate_synthetic_league(&cfg.league())?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    data::write_matches_csv(BufWriter::new(File::create(out)?), &matches)?;
    Ok(matches.len())
}

pub fn load_matches(cfg: &RunConfig) -> Result<Vec<RawMatch>, CliError> {
    match &cfg.input {
        Some(path) => Ok(data::parse_matches_csv(path)?),
        None => Ok(data::generate_synthetic_league(&cfg.league())?),
    }
}

/// Chronological train/test split of the engineered features.
pub fn featurize(
    cfg: &RunConfig,
    matches: &[RawMatch],
) -> Result<(Vec<FeatureVector>, Vec<FeatureVector>), CliError> {
    let rows = features::build_features(matches, cfg.alpha)?;
    Ok(data::chronological_split(&rows, cfg.test_fraction)?)
}

/// Train every model kind on the training set only.
pub fn train_all(train: &Dataset, cfg: &ModelConfigs) -> Result<Vec<TrainedModel>, CliError> {
    ModelKind::ALL
        .iter()
        .map(|&k| {
            models::train_model(k, train, cfg).map_err(|e| CliError::Training(format!("{k}: {e}")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n_matches: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub majority_baseline: f64,
    /// Sorted by accuracy, best first.
    pub reports: Vec<MetricsReport>,
    pub brcg_rule: String,
    pub logreg_importance: Vec<(String, f64)>,
}

impl RunSummary {
    pub fn table(&self) -> String {
        metrics::render_table(&self.reports)
    }
}

pub fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let staging = out.join(".staging");
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;
    match run_into(cfg, &staging) {
        Ok(summary) => {
            for entry in RUN_ENTRIES {
                let target = out.join(entry);
                if target.is_dir() {
                    fs::remove_dir_all(&target)?;
                } else if target.exists() {
                    fs::remove_file(&target)?;
                }
                fs::rename(staging.join(entry), target)?;
            }
            fs::remove_dir_all(&staging)?;
            Ok(summary)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn run_into(cfg: &RunConfig, dir: &Path) -> Result<RunSummary, CliError> {
    for sub in ["data", "models", "reports", "explanations"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let matches = load_matches(cfg)?;
    let (train_rows, test_rows) = featurize(cfg, &matches)?;
    data::write_matches_csv(
        BufWriter::new(File::create(dir.join("data/matches.csv"))?),
        &matches,
    )?;
    features::write_features_csv(
        BufWriter::new(File::create(dir.join("data/train_features.csv"))?),
        &train_rows,
    )?;
    features::write_features_csv(
        BufWriter::new(File::create(dir.join("data/test_features.csv"))?),
        &test_rows,
    )?;

    let train = Dataset::from_feature_vectors(&train_rows)?;
    let trained = train_all(&train, &cfg.seeded_models())?;
    for model in &trained {
        let path = dir
            .join("models")
            .join(format!("{}.json", model.kind().slug()));
        fs::write(path, model.to_json()? + "\n")?;
    }

    // Test labels are first read here, after every model is fixed.
    let test = Dataset::from_feature_vectors(&test_rows)?;
    let mut reports = trained
        .iter()
        .map(|m| metrics::evaluate_model(m, &test, cfg.threshold))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Training(e.to_string()))?;
    metrics::sort_reports(&mut reports);
    let majority =
        metrics::majority_baseline(&test.labels).map_err(|e| CliError::Data(e.to_string()))?;

    let brcg = trained
        .iter()
        .find(|m| m.kind() == ModelKind::Brcg)
        .expect("trained");
    let brcg_rule = match &brcg.params {
        models::ModelParams::Brcg(b) => b.rules.to_string(),
        _ => unreachable!("kind checked"),
    };
    let logreg = trained
        .iter()
        .find(|m| m.kind() == ModelKind::LogReg)
        .expect("trained");
    let logreg_importance = models::logreg_feature_importance(logreg)?;

    let summary = RunSummary {
        n_matches: matches.len(),
        n_train: train_rows.len(),
        n_test: test_rows.len(),
        majority_baseline: majority,
        reports,
        brcg_rule,
        logreg_importance,
    };
    fs::write(dir.join("reports/metrics.txt"), summary.table())?;
    write_json(&dir.join("reports/metrics.json"), &summary)?;
    fs::write(
        dir.join("reports/brcg_rule.txt"),
        format!("{}\n", summary.brcg_rule),
    )?;
    let ranking: String = summary
        .logreg_importance
        .iter()
        .enumerate()
        .map(|(i, (name, w))| format!("{:>2}. {name:<32} {w:.6}\n", i + 1))
        .collect();
    fs::write(dir.join("reports/logreg_importance.txt"), ranking)?;

    fs::write(dir.join("run.toml"), cfg.to_toml_string())?;
    let manifest = json!({
        "seed": cfg.seed,
        "derived_seeds": {
            "svm": child_seed(cfg.seed, "svm"),
            "mlp": child_seed(cfg.seed, "mlp"),
            "background": cfg.background_seed(),
        },
        "n_matches": summary.n_matches,
        "n_train": summary.n_train,
        "n_test": summary.n_test,
        "training_fingerprint": train.fingerprint(),
        "models": ModelKind::ALL.iter().map(|k| format!("models/{}.json", k.slug())).collect::<Vec<_>>(),
    });
    write_json(&dir.join("run.json"), &manifest)?;
    Ok(summary)
}

/// A finished run loaded back from disk.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub train: Vec<FeatureVector>,
    pub test: Vec<FeatureVector>,
}

impl RunArtifacts {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let config_path = dir.join("run.toml");
        if !config_path.exists() {
            return Err(CliError::Data(format!(
                "{} is not a run directory",
                dir.display()
            )));
        }
        let config = RunConfig::load(&config_path)?;
        let read = |name: &str| -> Result<Vec<FeatureVector>, CliError> {
            let file = File::open(dir.join("data").join(name))?;
            Ok(features::read_features_csv(file)?)
        };
        Ok(RunArtifacts {
            dir: dir.to_path_buf(),
            config,
            train: read("train_features.csv")?,
            test: read("test_features.csv")?,
        })
    }

    pub fn model(&self, kind: ModelKind) -> Result<TrainedModel, CliError> {
        let path = self
            .dir
            .join("models")
            .join(format!("{}.json", kind.slug()));
        let text = fs::read_to_string(&path).map_err(|_| {
            CliError::MissingModel(format!("{kind} ({} not found)", path.display()))
        })?;
        Ok(TrainedModel::from_json(&text)?)
    }

    pub fn test_match(&self, match_id: &str) -> Result<&FeatureVector, CliError> {
        self.test
            .iter()
            .find(|f| f.match_id == match_id)
            .ok_or_else(|| CliError::UnknownMatch(format!("{match_id} is not in the test set")))
    }

    pub fn train_rows(&self) -> Vec<Vec<f64>> {
        self.train.iter().map(|f| f.values.to_vec()).collect()
    }

    pub fn background(&self) -> Vec<Vec<f64>> {
        sample_background(
            &self.train_rows(),
            self.config.explain.background_size,
            self.config.background_seed(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Shap,
    ShapExact,
    Protodash,
}

impl Method {
    pub fn slug(self) -> &'static str {
        match self {
            Method::Shap => "shap",
            Method::ShapExact => "shap-exact",
            Method::Protodash => "protodash",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapExplanation {
    pub attribution: Attribution,
    pub faithfulness: Faithfulness,
    pub feature_names: Vec<String>,
}

impl ShapExplanation {
    pub fn to_json(&self, model: ModelKind, method: Method) -> serde_json::Value {
        let names: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        let mut value = self.attribution.to_json(&names);
        let obj = value.as_object_mut().expect("object");
        obj.insert("model".into(), model.slug().into());
        obj.insert("method".into(), method.slug().into());
        obj.insert(
            "faithfulness".into(),
            round6(self.faithfulness.value).into(),
        );
        obj.insert(
            "faithfulness_degenerate".into(),
            self.faithfulness.degenerate.into(),
        );
        value
    }
}

fn explain_error(e: ExplainError) -> CliError {
    match e {
        ExplainError::BudgetExceeded { .. } | ExplainError::TooFewCoalitions { .. } => {
            CliError::Config(e.to_string())
        }
        ExplainError::InvalidM { .. } | ExplainError::InvalidGamma(_) => {
            CliError::Config(e.to_string())
        }
        other => CliError::Training(other.to_string()),
    }
}

/// Kernel SHAP for one match with its faithfulness score. The random stream is
/// keyed by the root seed and the match id.
pub fn shap_for(
    run: &RunArtifacts,
    model: &TrainedModel,
    background: &[Vec<f64>],
    row: &FeatureVector,
) -> Result<ShapExplanation, CliError> {
    let seed = explain::explanation_seed(run.config.seed, &row.match_id);
    let attribution = kernel_shap(
        model,
        &row.values,
        background,
        run.config.explain.n_coalitions,
        seed,
    )
    .map_err(explain_error)?
    .with_match_id(&row.match_id);
    let faithfulness =
        metrics::faithfulness(model, &row.values, &attribution, &column_means(background))
            .map_err(|e| CliError::Training(e.to_string()))?;
    Ok(ShapExplanation {
        attribution,
        faithfulness,
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
    })
}

/// The model restricted to its first `k` inputs, the rest pinned to `rest`.
struct Pinned<'a> {
    model: &'a TrainedModel,
    rest: &'a [f64],
}

impl Scorer for Pinned<'_> {
    fn score(&self, x: &[f64]) -> f64 {
        let mut full = x.to_vec();
        full.extend_from_slice(self.rest);
        self.model.score(&full)
    }
}

/// Exact Shapley values over the first `k` features, the others held at the
/// explained row's values.
pub fn exact_for(
    model: &TrainedModel,
    background: &[Vec<f64>],
    row: &FeatureVector,
    k: usize,
) -> Result<ShapExplanation, CliError> {
    if k == 0 || k > MAX_EXACT_FEATURES {
        return Err(CliError::Config(format!(
            "--debug-reduced-features must be in 1..={MAX_EXACT_FEATURES}, got {k}"
        )));
    }
    let pinned = Pinned {
        model,
        rest: &row.values[k..],
    };
    let x = &row.values[..k];
    let bg: Vec<Vec<f64>> = background.iter().map(|b| b[..k].to_vec()).collect();
    let attribution = exact_shapley(&pinned, x, &bg, DEFAULT_EXACT_BUDGET)
        .map_err(explain_error)?
        .with_match_id(&row.match_id);
    let faithfulness = metrics::faithfulness(&pinned, x, &attribution, &column_means(&bg))
        .map_err(|e| CliError::Training(e.to_string()))?;
    Ok(ShapExplanation {
        attribution,
        faithfulness,
        feature_names: FEATURE_NAMES[..k].iter().map(|s| s.to_string()).collect(),
    })
}

/// ProtoDash prototypes from the training set, on the training standardization.
pub fn prototypes_for(
    run: &RunArtifacts,
    row: &FeatureVector,
) -> Result<PrototypeResult, CliError> {
    let train = Dataset::from_feature_vectors(&run.train)?;
    let standardizer = Standardizer::fit(&train)?;
    let candidates = standardizer.transform(&train).rows;
    let target = standardizer.transform_row(&row.values);
    let gamma = run.config.gamma(train.n_features());
    let selection = protodash(
        &target,
        &candidates,
        &ProtoDashConfig::new(run.config.explain.prototypes, gamma),
    )
    .map_err(explain_error)?;
    let scales: Vec<f64> = standardizer
        .std
        .iter()
        .zip(&standardizer.constant)
        .map(|(s, c)| if *c { 0.0 } else { *s })
        .collect();
    let ids: Vec<String> = run.train.iter().map(|f| f.match_id.clone()).collect();
    Ok(explain::prototype_result(
        &row.match_id,
        &row.values,
        &selection,
        &ids,
        &train.rows,
        &scales,
    ))
}

pub fn prototypes_json(result: &PrototypeResult, gamma: f64) -> serde_json::Value {
    let prototypes: Vec<serde_json::Value> = result
        .prototypes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let sim: serde_json::Map<String, serde_json::Value> = FEATURE_NAMES
                .iter()
                .zip(&p.similarity)
                .map(|(n, v)| (n.to_string(), round6(*v).into()))
                .collect();
            json!({
                "rank": i + 1,
                "match_id": p.match_id,
                "weight": round6(p.weight),
                "normalized_weight": round6(p.normalized_weight),
                "similarity": sim,
            })
        })
        .collect();
    json!({
        "target_match_id": result.target_match_id,
        "gamma": gamma,
        "dominant_first": result.dominant_first,
        "prototypes": prototypes,
    })
}

/// Feature-by-prototype similarity table with a closing weight row.
pub fn prototypes_table(result: &PrototypeResult) -> String {
    let label_w = FEATURE_LABELS
        .iter()
        .map(|l| l.len())
        .max()
        .unwrap_or(0)
        .max("Match".len());
    let col_w = result
        .prototypes
        .iter()
        .map(|p| p.match_id.len())
        .max()
        .unwrap_or(0)
        .max("Prototype 10".len());
    let mut out = format!("Target match: {}\n", result.target_match_id);
    let mut line = |label: &str, cells: Vec<String>| {
        out.push_str(&format!("{label:<label_w$}"));
        for c in cells {
            out.push_str(&format!(" | {c:>col_w$}"));
        }
        out.push('\n');
    };
    let n = result.prototypes.len();
    line("", (1..=n).map(|i| format!("Prototype {i}")).collect());
    line(
        "Match",
        result
            .prototypes
            .iter()
            .map(|p| p.match_id.clone())
            .collect(),
    );
    for (j, label) in FEATURE_LABELS.iter().enumerate() {
        line(
            label,
            result
                .prototypes
                .iter()
                .map(|p| format!("{:.2}", p.similarity[j]))
                .collect(),
        );
    }
    line(
        "Weight",
        result
            .prototypes
            .iter()
            .map(|p| format!("{:.6}", p.weight))
            .collect(),
    );
    out
}

#[derive(Debug, Clone)]
pub struct ExplainRequest {
    pub model: ModelKind,
    pub method: Method,
    /// `None` with `all` explains every test match.
    pub match_id: Option<String>,
    pub all: bool,
    pub reduced_features: Option<usize>,
}

#[derive(Debug, Clone)]
pub enum ExplainOutcome {
    Shap {
        path: PathBuf,
        explanation: ShapExplanation,
    },
    ShapAll {
        path: PathBuf,
        explanations: Vec<ShapExplanation>,
        mean_faithfulness: f64,
    },
    Prototypes {
        path: PathBuf,
        result: PrototypeResult,
        table: String,
    },
}

pub fn cmd_explain(run: &RunArtifacts, req: &ExplainRequest) -> Result<ExplainOutcome, CliError> {
    run.config.validate()?;
    let out_dir = run.dir.join("explanations");
    fs::create_dir_all(&out_dir)?;
    let slug = req.model.slug();

    if req.all {
        if req.method != Method::Shap {
            return Err(CliError::Config(
                "--all is only supported with --method shap".into(),
            ));
        }
        let model = run.model(req.model)?;
        let background = run.background();
        let explanations = run
            .test
            .par_iter()
            .map(|row| shap_for(run, &model, &background, row))
            .collect::<Result<Vec<_>, _>>()?;
        for e in &explanations {
            let path = out_dir.join(format!("shap_{slug}_{}.json", e.attribution.match_id));
            write_json(&path, &e.to_json(req.model, Method::Shap))?;
        }
        let scores: Vec<f64> = explanations.iter().map(|e| e.faithfulness.value).collect();
        let mean = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
        let max_gap = explanations
            .iter()
            .map(|e| e.attribution.additivity_gap())
            .fold(0.0, f64::max);
        let per_match: Vec<serde_json::Value> = explanations
            .iter()
            .map(|e| json!({"match_id": e.attribution.match_id, "faithfulness": round6(e.faithfulness.value)}))
            .collect();
        let path = out_dir.join(format!("shap_{slug}_summary.json"));
        write_json(
            &path,
            &json!({
                "model": slug,
                "n_matches": explanations.len(),
                "mean_faithfulness": round6(mean),
                "n_degenerate": explanations.iter().filter(|e| e.faithfulness.degenerate).count(),
                "max_additivity_gap": max_gap,
                "per_match": per_match,
            }),
        )?;
        return Ok(ExplainOutcome::ShapAll {
            path,
            explanations,
            mean_faithfulness: mean,
        });
    }

    let match_id = req
        .match_id
        .as_deref()
        .ok_or_else(|| CliError::Config("either --match-id or --all is required".into()))?;
    let row = run.test_match(match_id)?;
    match req.method {
        Method::Shap | Method::ShapExact => {
            let model = run.model(req.model)?;
            let background = run.background();
            let explanation = if req.method == Method::Shap {
                shap_for(run, &model, &background, row)?
            } else {
                let k = req.reduced_features.ok_or_else(|| {
                    CliError::Config(
                        "shap-exact needs --debug-reduced-features K (at most 12)".into(),
                    )
                })?;
                exact_for(&model, &background, row, k)?
            };
            let path = out_dir.join(format!(
                "{}_{slug}_{match_id}.json",
                req.method.slug().replace('-', "_")
            ));
            write_json(&path, &explanation.to_json(req.model, req.method))?;
            Ok(ExplainOutcome::Shap { path, explanation })
        }
        Method::Protodash => {
            let result = prototypes_for(run, row)?;
            let gamma = run.config.gamma(FEATURE_NAMES.len());
            let path = out_dir.join(format!("protodash_{match_id}.json"));
            write_json(&path, &prototypes_json(&result, gamma))?;
            let table = prototypes_table(&result);
            fs::write(out_dir.join(format!("protodash_{match_id}.txt")), &table)?;
            Ok(ExplainOutcome::Prototypes {
                path,
                result,
                table,
            })
        }
    }
}
