//! Evaluation against synthetic oracles, subgroup discovery, bootstrap
//! summaries and bound survival curves.

pub mod bootstrap;
pub mod curves;
pub mod subgroup;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{
    fit_composed_cate, fit_plugin, fit_survb, BoundCase, BoundModel, BoundPredictor, BoundsError, Target,
};
use crate::data::{Arm, Dataset};
use crate::models::{LearnerSpec, Matrix};
use crate::nuisance::{
    assign_folds, fit_nuisances, CrossFitPlan, DoseSmoothing, NuisanceError, NuisanceOptions, NuisanceSet,
    PropensityMode, DEFAULT_FOLDS,
};
use crate::rng::{derive_seed, Substream};
use crate::simulation::{generate, oracle_bounds, x_grid, Design, Family, OracleNuisances, Scenario, SimulationError};

pub use bootstrap::{bootstrap_subgroup, bootstrap_subgroup_refit, BootstrapSummary};
pub use curves::{bound_survival_curves, read_bound_pairs, CurveTable};
pub use subgroup::{subgroup_tree, SubgroupNode, SubgroupSplit, SubgroupTree};

pub const EVAL_GRID: usize = 200;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("evaluation grid is empty")]
    GridEmpty,
    #[error("selection is empty")]
    EmptySelection,
    #[error("subgroup is empty")]
    EmptySubgroup,
    #[error("need at least {min} subjects, got {n}")]
    TooFewSubjects { n: usize, min: usize },
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("the oracle learner needs a simulation scenario")]
    OracleNeedsScenario,
    #[error("bootstrap needs at least one replicate")]
    NoReplicates,
    #[error("{path}: {message}")]
    BoundsFile { path: String, message: String },
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Nuisance(#[from] NuisanceError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
}

/// Neumaier-compensated sum.
pub fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut c = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = stable_sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = stable_sum(values.iter().map(|v| (v - mean).powi(2))) / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rmse {
    pub lower: f64,
    pub upper: f64,
    /// Over the concatenated lower and upper residuals.
    pub joint: f64,
}

/// Root-mean-squared deviation of a model's bounds from the scenario's
/// oracle bounds over `grid`.
pub fn rmse_vs_oracle<M: BoundPredictor + ?Sized>(
    model: &M,
    s: &Scenario,
    grid: &[f64],
    case: &BoundCase,
) -> Result<Rmse, AnalysisError> {
    if grid.is_empty() {
        return Err(AnalysisError::GridEmpty);
    }
    let predicted = model.predict_bounds(&Matrix::column(grid))?;
    let mut sq_lo = Vec::with_capacity(grid.len());
    let mut sq_up = Vec::with_capacity(grid.len());
    for (&x, p) in grid.iter().zip(&predicted) {
        let o = oracle_bounds(s, x, model.target(), case)?;
        sq_lo.push((p.lower - o.lower).powi(2));
        sq_up.push((p.upper - o.upper).powi(2));
    }
    let n = grid.len() as f64;
    let lo = stable_sum(sq_lo.iter().copied());
    let up = stable_sum(sq_up.iter().copied());
    Ok(Rmse { lower: (lo / n).sqrt(), upper: (up / n).sqrt(), joint: ((lo + up) / (2.0 * n)).sqrt() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerChoice {
    Survb,
    Plugin,
    /// Plug-in with the scenario's true nuisances; only meaningful on
    /// simulated data.
    Oracle,
}

impl LearnerChoice {
    pub fn name(self) -> &'static str {
        match self {
            LearnerChoice::Survb => "survb",
            LearnerChoice::Plugin => "plugin",
            LearnerChoice::Oracle => "oracle",
        }
    }
}

/// Everything needed to go from a dataset to a fitted bound model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub learner: LearnerChoice,
    pub folds: usize,
    pub nuisance_learner: LearnerSpec,
    pub second_stage: LearnerSpec,
    pub propensity: PropensityMode,
    /// Build CATE bounds by differencing two CAPO models.
    pub compose_capo: bool,
    pub conservative_only: bool,
    #[serde(default)]
    pub smoothing: DoseSmoothing,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(learner: LearnerChoice, propensity: PropensityMode, seed: u64) -> Self {
        Self {
            learner,
            folds: DEFAULT_FOLDS,
            nuisance_learner: LearnerSpec::random_forest(derive_seed(seed, Substream::Forest, 1)),
            second_stage: LearnerSpec::random_forest(derive_seed(seed, Substream::Forest, 2)),
            propensity,
            compose_capo: false,
            conservative_only: false,
            smoothing: DoseSmoothing::default(),
            seed,
        }
    }

    /// Reference benchmark configuration: known propensity 0.5 under the
    /// randomized design, estimated otherwise.
    pub fn for_scenario(learner: LearnerChoice, s: &Scenario) -> Self {
        let propensity = match s.design {
            Design::Rct => PropensityMode::Known(vec![(Arm(0), 0.5), (Arm(1), 0.5)]),
            Design::Observational => PropensityMode::Estimate,
        };
        Self::new(learner, propensity, s.seed)
    }

    fn nuisance_options(&self) -> NuisanceOptions {
        let mut o = NuisanceOptions::new(self.nuisance_learner.clone(), self.propensity.clone());
        o.conservative_only = self.conservative_only;
        o.smoothing = self.smoothing;
        o
    }

    /// Stage 1: cross-fitted for SurvB, full-sample for the plug-in learner.
    pub fn fit_nuisances(&self, d: &Dataset) -> Result<NuisanceSet, AnalysisError> {
        let plan = match self.learner {
            LearnerChoice::Survb => assign_folds(d, self.folds, derive_seed(self.seed, Substream::Folds, 0))?,
            LearnerChoice::Plugin => CrossFitPlan::full_sample(d.len()),
            LearnerChoice::Oracle => return Err(AnalysisError::OracleNeedsScenario),
        };
        Ok(fit_nuisances(d, &plan, &self.nuisance_options())?)
    }

    /// Stage 2 (or the plug-in evaluation) on already fitted nuisances.
    pub fn fit_bounds(
        &self,
        d: &Dataset,
        ns: &NuisanceSet,
        target: Target,
        case: &BoundCase,
    ) -> Result<BoundModel, AnalysisError> {
        Ok(match (self.learner, target) {
            (LearnerChoice::Oracle, _) => return Err(AnalysisError::OracleNeedsScenario),
            (LearnerChoice::Plugin, _) => BoundModel::Plugin(fit_plugin(ns.clone(), target, case.clone())),
            (LearnerChoice::Survb, Target::Pair { treated, control }) if self.compose_capo => {
                BoundModel::Composed(fit_composed_cate(d, ns, treated, control, case.clone(), &self.second_stage)?)
            }
            (LearnerChoice::Survb, _) => BoundModel::Survb(fit_survb(d, ns, target, case.clone(), &self.second_stage)?),
        })
    }

    pub fn fit(&self, d: &Dataset, target: Target, case: &BoundCase) -> Result<BoundModel, AnalysisError> {
        let ns = self.fit_nuisances(d)?;
        self.fit_bounds(d, &ns, target, case)
    }
}

/// The contrast evaluated by the synthetic benchmarks.
pub const TREATED_VS_CONTROL: Target = Target::Pair { treated: Arm(1), control: Arm(0) };

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub name: String,
    pub case: BoundCase,
}

impl CaseSpec {
    pub fn domain(gamma: f64) -> Self {
        Self { name: "domain".into(), case: BoundCase::domain(gamma) }
    }

    pub fn conservative() -> Self {
        Self { name: "conservative".into(), case: BoundCase::Conservative }
    }
}

/// One benchmark run: per case and learner, the RMSE and the mean
/// predicted width on the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub case: String,
    pub learner: LearnerChoice,
    pub rmse: Rmse,
    pub mean_width: f64,
}

/// Simulates `s`, fits every requested learner (sharing nuisances across
/// cases) and scores the CATE bounds on a `grid_points`-point grid.
pub fn run_scenario(
    s: &Scenario,
    cases: &[CaseSpec],
    learners: &[LearnerChoice],
    grid_points: usize,
) -> Result<Vec<RunResult>, AnalysisError> {
    let (d, _) = generate(s)?;
    let grid = x_grid(grid_points);
    let gx = Matrix::column(&grid);
    let score = |model: &dyn BoundPredictor, case: &CaseSpec, learner| -> Result<RunResult, AnalysisError> {
        let rmse = rmse_vs_oracle(model, s, &grid, &case.case)?;
        let widths: Vec<f64> = model.predict_bounds(&gx)?.iter().map(|b| b.width()).collect();
        Ok(RunResult {
            case: case.name.clone(),
            learner,
            rmse,
            mean_width: stable_sum(widths.iter().copied()) / widths.len() as f64,
        })
    };
    let mut out = Vec::new();
    for &learner in learners {
        if learner == LearnerChoice::Oracle {
            for c in cases {
                let model = fit_plugin(OracleNuisances::new(s), TREATED_VS_CONTROL, c.case.clone());
                out.push(score(&model, c, learner)?);
            }
            continue;
        }
        let cfg = PipelineConfig::for_scenario(learner, s);
        let ns = cfg.fit_nuisances(&d)?;
        for c in cases {
            out.push(score(&cfg.fit_bounds(&d, &ns, TREATED_VS_CONTROL, &c.case)?, c, learner)?);
        }
    }
    Ok(out)
}

/// Mean oracle CATE width over a `grid_points`-point grid.
pub fn oracle_mean_width(s: &Scenario, case: &BoundCase, grid_points: usize) -> Result<f64, AnalysisError> {
    if grid_points == 0 {
        return Err(AnalysisError::GridEmpty);
    }
    let grid = x_grid(grid_points);
    let w = grid
        .iter()
        .map(|&x| Ok(oracle_bounds(s, x, TREATED_VS_CONTROL, case)?.width()))
        .collect::<Result<Vec<f64>, AnalysisError>>()?;
    Ok(stable_sum(w) / grid.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub family: Family,
    pub xi: f64,
    pub n: usize,
    pub case: String,
    pub learner: LearnerChoice,
    pub rmse_mean: f64,
    pub rmse_sd: f64,
    pub rmse_lower_mean: f64,
    pub rmse_upper_mean: f64,
    pub width_mean: f64,
    pub oracle_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthRow {
    pub family: Family,
    pub case: String,
    pub learner: LearnerChoice,
    pub xi: f64,
    pub estimated_width: f64,
    pub oracle_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub design: Design,
    pub seeds: Vec<u64>,
    pub cells: Vec<EvalCell>,
    pub widths: Vec<WidthRow>,
}

impl EvalReport {
    pub fn cell(&self, family: Family, xi: f64, n: usize, case: &str, learner: LearnerChoice) -> Option<&EvalCell> {
        self.cells
            .iter()
            .find(|c| c.family == family && c.xi == xi && c.n == n && c.case == case && c.learner == learner)
    }
}

/// Grid of benchmark settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPlan {
    pub families: Vec<Family>,
    pub xis: Vec<f64>,
    pub sizes: Vec<usize>,
    pub design: Design,
    pub seeds: Vec<u64>,
    pub cases: Vec<CaseSpec>,
    pub learners: Vec<LearnerChoice>,
    pub grid: usize,
}

/// Runs every `(family, ξ, n, seed)` setting in parallel and aggregates
/// mean and SD over seeds.
pub fn run_benchmark(plan: &BenchmarkPlan) -> Result<EvalReport, AnalysisError> {
    let mut settings = Vec::new();
    for &family in &plan.families {
        for &xi in &plan.xis {
            for &n in &plan.sizes {
                settings.push((family, xi, n));
            }
        }
    }
    let jobs: Vec<(usize, u64)> =
        (0..settings.len()).flat_map(|i| plan.seeds.iter().map(move |&seed| (i, seed))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let (family, xi, n) = settings[i];
            run_scenario(&Scenario::new(family, plan.design, xi, n, seed), &plan.cases, &plan.learners, plan.grid)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut cells = Vec::new();
    let mut widths = Vec::new();
    for (i, &(family, xi, n)) in settings.iter().enumerate() {
        let per_seed: Vec<&Vec<RunResult>> =
            jobs.iter().zip(&runs).filter(|((j, _), _)| *j == i).map(|(_, r)| r).collect();
        for c in &plan.cases {
            let oracle_width = oracle_mean_width(&Scenario::new(family, plan.design, xi, n, 0), &c.case, plan.grid)?;
            for &learner in &plan.learners {
                let picked: Vec<&RunResult> = per_seed
                    .iter()
                    .filter_map(|r| r.iter().find(|x| x.case == c.name && x.learner == learner))
                    .collect();
                let joint: Vec<f64> = picked.iter().map(|r| r.rmse.joint).collect();
                let (rmse_mean, rmse_sd) = mean_sd(&joint);
                let avg = |f: fn(&RunResult) -> f64| mean_sd(&picked.iter().map(|r| f(r)).collect::<Vec<_>>()).0;
                let width_mean = avg(|r| r.mean_width);
                cells.push(EvalCell {
                    family,
                    xi,
                    n,
                    case: c.name.clone(),
                    learner,
                    rmse_mean,
                    rmse_sd,
                    rmse_lower_mean: avg(|r| r.rmse.lower),
                    rmse_upper_mean: avg(|r| r.rmse.upper),
                    width_mean,
                    oracle_width,
                });
                widths.push(WidthRow {
                    family,
                    case: c.name.clone(),
                    learner,
                    xi,
                    estimated_width: width_mean,
                    oracle_width,
                });
            }
        }
    }
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        design: plan.design,
        seeds: plan.seeds.clone(),
        cells,
        widths,
    })
}

/// Mean estimated and oracle width per `ξ` for one family and case, with a
/// `ξ = 0` row carrying the oracle limit (zero width).
pub fn width_sweep(
    case: &CaseSpec,
    xis: &[f64],
    family: Family,
    n: usize,
    seeds: &[u64],
    learner: LearnerChoice,
) -> Result<Vec<WidthRow>, AnalysisError> {
    let plan = BenchmarkPlan {
        families: vec![family],
        xis: xis.to_vec(),
        sizes: vec![n],
        design: Design::Rct,
        seeds: seeds.to_vec(),
        cases: vec![case.clone()],
        learners: vec![learner],
        grid: EVAL_GRID,
    };
    let mut rows = if seeds.is_empty() {
        xis.iter()
            .map(|&xi| {
                Ok(WidthRow {
                    family,
                    case: case.name.clone(),
                    learner,
                    xi,
                    estimated_width: f64::NAN,
                    oracle_width: oracle_mean_width(
                        &Scenario::new(family, Design::Rct, xi, n, 0),
                        &case.case,
                        EVAL_GRID,
                    )?,
                })
            })
            .collect::<Result<Vec<_>, AnalysisError>>()?
    } else {
        run_benchmark(&plan)?.widths
    };
    rows.insert(
        0,
        WidthRow { family, case: case.name.clone(), learner, xi: 0.0, estimated_width: f64::NAN, oracle_width: 0.0 },
    );
    Ok(rows)
}

/// Percentage of strictly positive lower bounds among the selected rows.
pub fn fraction_lb_positive(lb: &[f64], mask: Option<&[bool]>) -> Result<f64, AnalysisError> {
    if let Some(m) = mask {
        if m.len() != lb.len() {
            return Err(AnalysisError::LengthMismatch { what: "mask", expected: lb.len(), got: m.len() });
        }
    }
    let selected: Vec<f64> = match mask {
        Some(m) => lb.iter().zip(m).filter(|(_, &keep)| keep).map(|(&v, _)| v).collect(),
        None => lb.to_vec(),
    };
    if selected.is_empty() {
        return Err(AnalysisError::EmptySelection);
    }
    let positive = selected.iter().filter(|&&v| v > 0.0).count();
    Ok(100.0 * positive as f64 / selected.len() as f64)
}
