//! Run configuration: a TOML file with command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use volleyxai::data::LeagueConfig;
use volleyxai::features::DEFAULT_ALPHA;
use volleyxai::models::ModelConfigs;
use volleyxai::seed::child_seed;

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;
/// Enumerated tiers `{1, 18}` (38 coalitions) plus 2048 sampled ones.
pub const DEFAULT_N_COALITIONS: usize = 2 * 19 + 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSection {
    pub n_teams: usize,
    pub n_seasons: usize,
    pub home_advantage: f64,
    pub strength_spread: f64,
    pub drift: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let l = LeagueConfig::default();
        SynthSection {
            n_teams: l.n_teams,
            n_seasons: l.n_seasons,
            home_advantage: l.home_advantage,
            strength_spread: l.strength_spread,
            drift: l.drift,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainSection {
    pub background_size: usize,
    pub n_coalitions: usize,
    pub prototypes: usize,
    /// RBF width for ProtoDash; `None` means `1 / n_features`.
    pub gamma: Option<f64>,
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection {
            background_size: volleyxai::explain::DEFAULT_BACKGROUND_SIZE,
            n_coalitions: DEFAULT_N_COALITIONS,
            prototypes: volleyxai::explain::DEFAULT_PROTOTYPES,
            gamma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Match CSV to ingest; a synthetic league is generated when absent.
    pub input: Option<PathBuf>,
    pub alpha: f64,
    pub test_fraction: f64,
    pub threshold: f64,
    pub synth: SynthSection,
    pub models: ModelConfigs,
    pub explain: ExplainSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            input: None,
            alpha: DEFAULT_ALPHA,
            test_fraction: DEFAULT_TEST_FRACTION,
            threshold: 0.5,
            synth: SynthSection::default(),
            models: ModelConfigs::default(),
            explain: ExplainSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn league(&self) -> LeagueConfig {
        LeagueConfig {
            n_teams: self.synth.n_teams,
            n_seasons: self.synth.n_seasons,
            home_advantage: self.synth.home_advantage,
            strength_spread: self.synth.strength_spread,
            drift: self.synth.drift,
            seed: self.seed,
        }
    }

    /// Model hyperparameters with the stochastic trainers seeded from the root seed.
    pub fn seeded_models(&self) -> ModelConfigs {
        let mut m = self.models.clone();
        m.svm.seed = child_seed(self.seed, "svm");
        m.mlp.seed = child_seed(self.seed, "mlp");
        m
    }

    pub fn background_seed(&self) -> u64 {
        child_seed(self.seed, "background")
    }

    pub fn gamma(&self, n_features: usize) -> f64 {
        self.explain.gamma.unwrap_or(1.0 / n_features as f64)
    }

    /// Range checks for every numeric field.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.seed > i64::MAX as u64 {
            return bad(format!("seed must be <= {}, got {}", i64::MAX, self.seed));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must be in (0, 1], got {}", self.alpha));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!(
                "test_fraction must be in (0, 1), got {}",
                self.test_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!(
                "threshold must be in [0, 1], got {}",
                self.threshold
            ));
        }
        self.league()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.explain.background_size == 0 {
            return bad("explain.background_size must be >= 1".into());
        }
        if self.explain.prototypes == 0 {
            return bad("explain.prototypes must be >= 1".into());
        }
        if let Some(g) = self.explain.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("explain.gamma must be > 0, got {g}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg =
            RunConfig::from_toml_str("seed = 3\n[synth]\nn_teams = 8\n[models.mlp]\nhidden = 4\n")
                .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.synth.n_teams, 8);
        assert_eq!(cfg.synth.n_seasons, 3);
        assert_eq!(cfg.models.mlp.hidden, 4);
        assert_eq!(cfg.models.mlp.epochs, 500);
    }

    #[test]
    fn round_trip_and_unknown_keys() {
        let cfg = RunConfig::default();
        assert_eq!(
            RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap(),
            cfg
        );
        assert!(RunConfig::from_toml_str("sede = 3").is_err());
    }

    #[test]
    fn validation_names_the_bound() {
        let mut cfg = RunConfig::default();
        cfg.synth.n_teams = 2;
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains(">= 4"), "{msg}");
        let cfg = RunConfig {
            test_fraction: 1.0,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
