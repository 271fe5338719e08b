//! Command-line front end: `synth`, `run` and `explain`.
//!
//! Exit codes: 0 ok, 2 config, 3 data, 4 training, 5 lookup.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use volleyxai::ModelKind;

use commands::{ExplainOutcome, ExplainRequest, Method, RunArtifacts};
pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "volleyxai",
    version,
    about = "Explainable volleyball match prediction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic league and write its matches CSV.
    Synth(SynthArgs),
    /// Featurize, train all models, evaluate and write a run directory.
    Run(RunArgs),
    /// Explain test matches of a finished run.
    Explain(ExplainArgs),
}

/// Settings shared by `synth` and `run`; flags override the config file.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub teams: Option<usize>,
    #[arg(long)]
    pub seasons: Option<usize>,
    #[arg(long)]
    pub home_advantage: Option<f64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.teams {
            cfg.synth.n_teams = v;
        }
        if let Some(v) = self.seasons {
            cfg.synth.n_seasons = v;
        }
        if let Some(v) = self.home_advantage {
            cfg.synth.home_advantage = v;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Match CSV; a synthetic league is generated when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Probability threshold for the class predictions.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = self.common.resolve()?;
        if let Some(p) = &self.input {
            cfg.input = Some(p.clone());
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.test_fraction {
            cfg.test_fraction = v;
        }
        if let Some(v) = self.threshold {
            cfg.threshold = v;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Shap,
    ShapExact,
    Protodash,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Logreg,
    Brcg,
    Svm,
    Mlp,
    Lda,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Logreg => ModelKind::LogReg,
            ModelArg::Brcg => ModelKind::Brcg,
            ModelArg::Svm => ModelKind::LinearSVM,
            ModelArg::Mlp => ModelKind::Mlp,
            ModelArg::Lda => ModelKind::Lda,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Directory written by `run`.
    #[arg(long)]
    pub run_dir: PathBuf,
    /// Test-set match to explain.
    #[arg(long, required_unless_present = "all")]
    pub match_id: Option<String>,
    /// Explain every test match and report the mean faithfulness (shap only).
    #[arg(long, conflicts_with = "match_id")]
    pub all: bool,
    #[arg(long, value_enum, default_value = "shap")]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value = "svm")]
    pub model: ModelArg,
    /// Restrict exact Shapley to the first K features (required for shap-exact).
    #[arg(long, value_name = "K")]
    pub debug_reduced_features: Option<usize>,
    #[arg(long)]
    pub n_coalitions: Option<usize>,
    #[arg(long)]
    pub prototypes: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(args) => {
            let cfg = args.common.resolve()?;
            let n = commands::cmd_synth(&cfg, &args.out)?;
            println!("wrote {n} matches to {}", args.out.display());
        }
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let summary = commands::cmd_run(&cfg, &args.out)?;
            println!(
                "{} matches: {} train, {} test (majority baseline {:.4})\n",
                summary.n_matches, summary.n_train, summary.n_test, summary.majority_baseline
            );
            print!("{}", summary.table());
            println!("\nBRCG: {}", summary.brcg_rule);
            println!("\nLogistic regression feature importance:");
            for (i, (name, w)) in summary.logreg_importance.iter().enumerate() {
                println!("{:>2}. {name:<32} {w:.4}", i + 1);
            }
            println!("\nwrote {}", args.out.display());
        }
        Command::Explain(args) => {
            let mut run = RunArtifacts::load(&args.run_dir)?;
            if let Some(v) = args.n_coalitions {
                run.config.explain.n_coalitions = v;
            }
            if let Some(v) = args.prototypes {
                run.config.explain.prototypes = v;
            }
            if let Some(v) = args.gamma {
                run.config.explain.gamma = Some(v);
            }
            let req = ExplainRequest {
                model: args.model.into(),
                method: match args.method {
                    MethodArg::Shap => Method::Shap,
                    MethodArg::ShapExact => Method::ShapExact,
                    MethodArg::Protodash => Method::Protodash,
                },
                match_id: args.match_id,
                all: args.all,
                reduced_features: args.debug_reduced_features,
            };
            match commands::cmd_explain(&run, &req)? {
                ExplainOutcome::Shap { path, explanation } => {
                    let a = &explanation.attribution;
                    println!(
                        "match {}: base value {:.4}, predicted {:.4}",
                        a.match_id, a.base_value, a.predicted
                    );
                    let mut order: Vec<usize> = (0..a.phi.len()).collect();
                    order.sort_by(|&i, &j| a.phi[j].abs().total_cmp(&a.phi[i].abs()));
                    for i in order {
                        println!("  {:<32} {:+.4}", explanation.feature_names[i], a.phi[i]);
                    }
                    println!(
                        "faithfulness {:.4} (scale -1..+1)",
                        explanation.faithfulness.value
                    );
                    println!("wrote {}", path.display());
                }
                ExplainOutcome::ShapAll {
                    path,
                    explanations,
                    mean_faithfulness,
                } => {
                    println!(
                        "explained {} test matches; mean faithfulness {:.4} (scale -1..+1)",
                        explanations.len(),
                        mean_faithfulness
                    );
                    println!("wrote {}", path.display());
                }
                ExplainOutcome::Prototypes {
                    path,
                    result,
                    table,
                } => {
                    print!("{table}");
                    if result.dominant_first {
                        println!("prototype 1 carries most of the weight");
                    }
                    println!("wrote {}", path.display());
                }
            }
        }
    }
    Ok(())
}
