use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::simulation::Design;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset with its latent table and metadata.
    Simulate(SimulateArgs),
    /// Fit bounds on a CSV dataset and write per-subject bounds.
    Fit(FitArgs),
    /// RMSE of fitted bounds against simulation oracles.
    Evaluate(EvaluateArgs),
    /// Full report on a dataset: bounds, subgroup fractions, tree, bootstrap, curves.
    Audit(AuditArgs),
    /// Cell-wise plug-in bounds widened for hidden confounding.
    Gmsm(GmsmArgs),
    /// Re-run a recorded effective_config.json.
    Replay(ReplayArgs),
}

/// A subcommand with its output directory split off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunCommand {
    Simulate(SimulateArgs),
    Fit(FitArgs),
    Evaluate(EvaluateArgs),
    Audit(AuditArgs),
    Gmsm(GmsmArgs),
}

fn absolute(p: &mut PathBuf) -> Result<(), CliError> {
    *p = std::path::absolute(&*p).map_err(|e| CliError::io(p, e))?;
    Ok(())
}

impl Command {
    /// Resolves relative input paths and separates the output directory.
    pub(crate) fn into_parts(self) -> Result<(RunCommand, PathBuf), CliError> {
        Ok(match self {
            Command::Simulate(mut a) => {
                let out = std::mem::take(&mut a.out);
                (RunCommand::Simulate(a), out)
            }
            Command::Fit(mut a) => {
                a.data.resolve()?;
                a.case.resolve()?;
                let out = std::mem::take(&mut a.out);
                (RunCommand::Fit(a), out)
            }
            Command::Evaluate(mut a) => {
                if let Some(m) = a.model.as_mut() {
                    absolute(m)?;
                }
                let out = std::mem::take(&mut a.out);
                (RunCommand::Evaluate(a), out)
            }
            Command::Audit(mut a) => {
                a.data.resolve()?;
                a.case.resolve()?;
                let out = std::mem::take(&mut a.report);
                (RunCommand::Audit(a), out)
            }
            Command::Gmsm(mut a) => {
                a.data.resolve()?;
                let out = std::mem::take(&mut a.out);
                (RunCommand::Gmsm(a), out)
            }
            Command::Replay(_) => unreachable!("replay is dispatched before conversion"),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioArg {
    Exp,
    Sin,
    Logsin,
    Planted,
    /// Continuous dose with a kernel-smoothed target.
    Dose,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignArg {
    Rct,
    Obs,
}

impl From<DesignArg> for Design {
    fn from(d: DesignArg) -> Self {
        match d {
            DesignArg::Rct => Design::Rct,
            DesignArg::Obs => Design::Observational,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: ScenarioArg,
    /// Target overall censoring probability in (0, 1).
    #[arg(long)]
    pub xi: f64,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, value_enum, default_value = "rct")]
    pub design: DesignArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub noise_sd: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusArg {
    /// 1 = censored.
    Censored,
    /// 1 = event observed.
    Event,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentArg {
    Discrete,
    Continuous,
}

/// Input CSV and its column mapping. Columns not named here are covariates.
#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "t_obs")]
    pub time_col: String,
    #[arg(long, default_value = "censored")]
    pub status_col: String,
    #[arg(long, value_enum, default_value = "censored")]
    pub status: StatusArg,
    #[arg(long, default_value = "a")]
    pub arm_col: String,
    /// Identifier column; used only if present in the file.
    #[arg(long, default_value = "id")]
    pub id_col: String,
    #[arg(long, value_enum, default_value = "discrete")]
    pub treatment: TreatmentArg,
    /// Maximum survival time. Defaults to the simulation metadata next to
    /// the data file, else to the largest observed time.
    #[arg(long)]
    pub tmax: Option<f64>,
}

impl DataArgs {
    fn resolve(&mut self) -> Result<(), CliError> {
        absolute(&mut self.data)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseArg {
    Domain,
    Conservative,
}

/// Which upper bound to use and its sensitivity input.
#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct CaseArgs {
    #[arg(long, value_enum, default_value = "conservative")]
    pub case: CaseArg,
    /// Constant post-dropout allowance for the domain case.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// CSV with columns bin_low, bin_high, arm, gamma.
    #[arg(long, conflicts_with = "gamma")]
    pub gamma_table: Option<PathBuf>,
    /// Covariate the gamma table bins refer to (default: the first).
    #[arg(long, requires = "gamma_table")]
    pub gamma_covariate: Option<String>,
}

impl CaseArgs {
    fn resolve(&mut self) -> Result<(), CliError> {
        match self.gamma_table.as_mut() {
            Some(p) => absolute(p),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerArg {
    Survb,
    Plugin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelArg {
    Gaussian,
    Epanechnikov,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "survb")]
    pub learner: LearnerArg,
    #[command(flatten)]
    pub case: CaseArgs,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    /// `a1,a2` for CATE bounds of a1 versus a2, a single arm for CAPO
    /// bounds. Default: highest versus lowest arm code.
    #[arg(long, value_delimiter = ',')]
    pub arms: Vec<u32>,
    /// Target dose in continuous mode.
    #[arg(long)]
    pub dose: Option<f64>,
    /// `estimate`, `known:p` (probability of the higher arm) or
    /// `known:a=p,a=p,...`.
    #[arg(long, default_value = "estimate")]
    pub propensity: String,
    /// `rf`, `knn:K`, `ridge:L` or `constant`.
    #[arg(long, default_value = "rf")]
    pub model: String,
    /// Build CATE bounds from two separately regressed CAPO bounds.
    #[arg(long)]
    pub compose: bool,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kernel: KernelArg,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyArg {
    Exp,
    Sin,
    Logsin,
    Planted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalLearnerArg {
    Survb,
    Plugin,
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    /// Output directory of `fit` on simulated data. Without it, a fresh
    /// benchmark over the scenario grid is run.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "sin")]
    pub scenario: Vec<FamilyArg>,
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.4,0.6")]
    pub xi: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "2000")]
    pub n: Vec<usize>,
    #[arg(long, value_enum, default_value = "rct")]
    pub design: DesignArg,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "conservative")]
    pub cases: Vec<CaseArg>,
    /// Gamma of the domain case.
    #[arg(long, default_value_t = 3.0)]
    pub gamma: f64,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "survb,plugin")]
    pub learners: Vec<EvalLearnerArg>,
    #[arg(long, default_value_t = 200)]
    pub grid: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct AuditArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub case: CaseArgs,
    /// `a1,a2`; default highest versus lowest arm code.
    #[arg(long, value_delimiter = ',')]
    pub arms: Vec<u32>,
    #[arg(long, default_value = "estimate")]
    pub propensity: String,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    #[arg(long, default_value = "rf")]
    pub model: String,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = 2000)]
    pub bootstrap: usize,
    /// Refit the whole pipeline in each bootstrap replicate.
    #[arg(long)]
    pub refit: bool,
    #[arg(long, default_value_t = 2)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 2)]
    pub min_leaf: usize,
    /// Points of the time grid for the bound curves.
    #[arg(long, default_value_t = 101)]
    pub curve_points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, visible_alias = "out")]
    #[serde(skip)]
    pub report: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct GmsmArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub case: CaseArgs,
    /// Confounding strengths, each ≥ 1.
    #[arg(long, value_delimiter = ',', required = true)]
    pub gamma_confounding: Vec<f64>,
    /// `none` for one cell, or `covariate:e0,e1,...` for bins `[e_i, e_{i+1})`
    /// (the last bin closed).
    #[arg(long, default_value = "none")]
    pub cells: String,
    /// `empirical` (arm share within the cell) or `known:p`.
    #[arg(long, default_value = "empirical")]
    pub propensity: String,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct ReplayArgs {
    /// A recorded effective_config.json.
    pub file: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}
