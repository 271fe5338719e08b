//! Explainable match-outcome prediction for volleyball leagues.
//!
//! The crate is organised as a pipeline:
//!
//! - [`data`]: match records (CSV ingestion, synthetic leagues, chronological splits)
//! - [`features`]: a single forward pass turning matches into 19-feature vectors
//! - [`models`]: logistic regression, a beam-search DNF rule learner, a linear SVM,
//!   a one-hidden-layer MLP and LDA behind one probability interface
//! - [`explain`]: Kernel SHAP, an exact Shapley oracle and ProtoDash prototypes
//! - [`metrics`]: accuracy, F1, AUC-ROC and attribution faithfulness
//!
//! Everything is deterministic given its inputs and seeds; see [`seed`] for how
//! child seeds are derived from one root seed.

pub mod data;
pub mod explain;
pub mod features;
pub mod metrics;
pub mod models;
pub mod seed;

pub use data::{LeagueConfig, RawMatch, Stage};
pub use explain::{Attribution, PrototypeResult, Scorer};
pub use features::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
pub use metrics::MetricsReport;
pub use models::{Dataset, ModelKind, RuleSet, TrainedModel};
