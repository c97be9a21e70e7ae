use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::args::*;
use super::svg::{line_chart, Series};
use super::CliError;
use crate::analysis::curves::time_grid;
use crate::analysis::subgroup::Leaf;
use crate::analysis::{
    bootstrap_subgroup, bootstrap_subgroup_refit, bound_survival_curves, fraction_lb_positive, oracle_mean_width,
    rmse_vs_oracle, run_benchmark, stable_sum, subgroup_tree, BenchmarkPlan, BootstrapSummary, CaseSpec, EvalCell,
    EvalReport, LearnerChoice, PipelineConfig, SubgroupTree, WidthRow, REPORT_SCHEMA_VERSION, TREATED_VS_CONTROL,
};
use crate::bounds::{capo_lower, capo_upper_conservative, BoundCase, BoundModel, BoundPredictor, Kernel, Target};
use crate::data::{load_csv, save_csv, validate_overlap, Arm, CsvSchema, Dataset, StatusConvention, TreatmentMode};
use crate::models::persist::{read_model, write_model};
use crate::models::{LearnerSpec, Matrix};
use crate::nuisance::{DoseSmoothing, PropensityMode};
use crate::rng::{derive_seed, Substream};
use crate::sensitivity::{
    cell_ingredients, gmsm_bound_adjustment, load_gamma_table, CellUpper, GmsmSpec, SensitivityError, SensitivitySpec,
};
use crate::simulation::{generate, oracle_bounds, x_grid, DoseScenario, Family, Scenario};

pub const MODEL_FILE: &str = "model.cbnd";
pub const MODEL_KIND: &str = "bound_model";
const OVERLAP_EPSILON: f64 = 0.01;

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))
}

fn num(v: f64) -> String {
    v.to_string()
}

/// A simulated scenario as recorded next to the data it produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimulatedScenario {
    Binary(Scenario),
    Dose(DoseScenario),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimMeta {
    pub schema_version: u32,
    pub scenario: SimulatedScenario,
    pub t_max: f64,
    pub n: usize,
    pub censoring_fraction: f64,
}

fn meta_path(data: &Path) -> PathBuf {
    let stem = data.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    data.with_file_name(format!("{stem}_meta.json"))
}

fn family(f: FamilyArg) -> Family {
    match f {
        FamilyArg::Exp => Family::Exponential,
        FamilyArg::Sin => Family::Sin,
        FamilyArg::Logsin => Family::LogisticSin,
        FamilyArg::Planted => Family::Planted,
    }
}

fn censoring_fraction(d: &Dataset) -> f64 {
    d.subjects().iter().filter(|s| s.censored).count() as f64 / d.len() as f64
}

pub(crate) fn simulate(a: &SimulateArgs, out: &Path) -> Result<(), CliError> {
    let schema = CsvSchema { id_col: Some("id".into()), ..CsvSchema::default() };
    let data_path = out.join("data.csv");
    let latent_path = out.join("data_latent.csv");
    let (d, scenario, t_max) = match a.scenario {
        ScenarioArg::Dose => {
            let mut s = DoseScenario::new(a.xi, a.n, a.seed);
            s.noise_sd = a.noise_sd;
            let d = s.generate()?;
            let mut w = csv_writer(&latent_path)?;
            w.write_record(["id", "x", "a", "oracle_capo_lower", "oracle_capo_upper"])?;
            for subj in d.subjects() {
                let n = s.oracle_nuisances(subj.x[0], subj.treatment);
                w.write_record([
                    subj.id.clone(),
                    num(subj.x[0]),
                    num(subj.treatment),
                    num(capo_lower(n.nu0, n.nu1, n.xi)),
                    num(capo_upper_conservative(n.nu0, n.xi, s.t_max())),
                ])?;
            }
            w.flush().map_err(|e| CliError::io(&latent_path, e))?;
            let t_max = s.t_max();
            (d, SimulatedScenario::Dose(s), t_max)
        }
        other => {
            let f = match other {
                ScenarioArg::Exp => Family::Exponential,
                ScenarioArg::Sin => Family::Sin,
                ScenarioArg::Logsin => Family::LogisticSin,
                _ => Family::Planted,
            };
            let mut s = Scenario::new(f, a.design.into(), a.xi, a.n, a.seed);
            s.noise_sd = a.noise_sd;
            let (d, latent) = generate(&s)?;
            let mut w = csv_writer(&latent_path)?;
            w.write_record([
                "id",
                "x",
                "a",
                "t_true",
                "c",
                "censor_prob",
                "oracle_capo_lower",
                "oracle_capo_upper",
                "oracle_cate_lower",
                "oracle_cate_upper",
            ])?;
            for row in &latent {
                let capo = oracle_bounds(&s, row.x, Target::Arm { arm: Arm(row.arm) }, &BoundCase::Conservative)?;
                let cate = oracle_bounds(&s, row.x, TREATED_VS_CONTROL, &BoundCase::Conservative)?;
                w.write_record([
                    row.id.clone(),
                    num(row.x),
                    row.arm.to_string(),
                    num(row.t_true),
                    row.c.map(num).unwrap_or_default(),
                    num(row.censor_prob),
                    num(capo.lower),
                    num(capo.upper),
                    num(cate.lower),
                    num(cate.upper),
                ])?;
            }
            w.flush().map_err(|e| CliError::io(&latent_path, e))?;
            let t_max = s.t_max();
            (d, SimulatedScenario::Binary(s), t_max)
        }
    };
    save_csv(&d, &data_path, &schema)?;
    let meta = SimMeta {
        schema_version: REPORT_SCHEMA_VERSION,
        scenario,
        t_max,
        n: d.len(),
        censoring_fraction: censoring_fraction(&d),
    };
    write_json(&out.join("data_meta.json"), &meta)?;
    info!("simulated {} subjects, censoring fraction {:.3}", d.len(), meta.censoring_fraction);
    Ok(())
}

fn load_dataset(a: &DataArgs) -> Result<(Dataset, Option<SimMeta>), CliError> {
    let meta_file = meta_path(&a.data);
    let meta: Option<SimMeta> = if meta_file.exists() { Some(read_json(&meta_file)?) } else { None };
    let mut reader = csv::Reader::from_path(&a.data).map_err(|e| CliError::io(&a.data, e))?;
    let has_id = reader.headers()?.iter().any(|h| h.trim() == a.id_col);
    let t_max = match (a.tmax, &meta) {
        (Some(t), _) => Some(t),
        (None, Some(m)) => {
            warn!("t_max not given; using {} from {}", m.t_max, meta_file.display());
            Some(m.t_max)
        }
        (None, None) => None,
    };
    let schema = CsvSchema {
        arm_col: a.arm_col.clone(),
        time_col: a.time_col.clone(),
        status_col: a.status_col.clone(),
        convention: match a.status {
            StatusArg::Censored => StatusConvention::Censored,
            StatusArg::Event => StatusConvention::Event,
        },
        id_col: has_id.then(|| a.id_col.clone()),
        t_max,
        mode: match a.treatment {
            TreatmentArg::Discrete => TreatmentMode::Discrete,
            TreatmentArg::Continuous => TreatmentMode::Continuous,
        },
    };
    let d = load_csv(&a.data, &schema)?;
    let report = validate_overlap(&d, OVERLAP_EPSILON);
    for w in &report.warnings {
        warn!("{w}");
    }
    Ok((d, meta))
}

fn resolve_arms(d: &Dataset, arms: &[u32]) -> Result<Vec<Arm>, CliError> {
    let known = d.arms();
    let picked: Vec<Arm> = match arms {
        [] => match known {
            [] | [_] => return Err(CliError::Data("the data contain fewer than two arms".into())),
            _ => vec![known[known.len() - 1], known[0]],
        },
        list => list.iter().map(|&a| Arm(a)).collect(),
    };
    for a in &picked {
        if !known.contains(a) {
            return Err(CliError::Usage(format!("arm {a} does not occur in the data")));
        }
    }
    Ok(picked)
}

fn resolve_target(d: &Dataset, arms: &[u32], dose: Option<f64>) -> Result<Target, CliError> {
    match d.mode() {
        TreatmentMode::Continuous => {
            let dose = dose.ok_or_else(|| CliError::Usage("continuous treatment needs --dose".into()))?;
            Ok(Target::Dose { dose })
        }
        TreatmentMode::Discrete => {
            if dose.is_some() {
                return Err(CliError::Usage("--dose applies to continuous treatment only".into()));
            }
            match resolve_arms(d, arms)?.as_slice() {
                [arm] => Ok(Target::Arm { arm: *arm }),
                [treated, control] => Ok(Target::Pair { treated: *treated, control: *control }),
                _ => Err(CliError::Usage("--arms takes one or two arm codes".into())),
            }
        }
    }
}

fn resolve_case(c: &CaseArgs, d: &Dataset) -> Result<BoundCase, CliError> {
    match c.case {
        CaseArg::Conservative => {
            if c.gamma.is_some() || c.gamma_table.is_some() {
                warn!("gamma is ignored by the conservative case");
            }
            Ok(BoundCase::Conservative)
        }
        CaseArg::Domain => {
            let spec = match (&c.gamma, &c.gamma_table) {
                (Some(g), _) => SensitivitySpec::constant(*g),
                (None, Some(path)) => {
                    let index = match &c.gamma_covariate {
                        None => 0,
                        Some(name) => d
                            .covariate_names()
                            .iter()
                            .position(|n| n == name)
                            .ok_or_else(|| CliError::Usage(format!("unknown covariate `{name}`")))?,
                    };
                    load_gamma_table(path, index)?
                }
                (None, None) => return Err(CliError::Usage("the domain case needs --gamma or --gamma-table".into())),
            };
            spec.validate()?;
            Ok(BoundCase::Domain { gamma: spec })
        }
    }
}

fn parse_propensity(text: &str, arms: &[Arm]) -> Result<PropensityMode, CliError> {
    let text = text.trim();
    if text == "estimate" {
        return Ok(PropensityMode::Estimate);
    }
    let Some(rest) = text.strip_prefix("known:") else {
        return Err(CliError::Usage(format!("--propensity {text:?}: expected `estimate` or `known:...`")));
    };
    if !rest.contains('=') {
        let p: f64 = rest.parse().map_err(|_| CliError::Usage(format!("--propensity: bad probability {rest:?}")))?;
        return Ok(PropensityMode::known_binary(arms, p)?);
    }
    let mut values = Vec::new();
    for part in rest.split(',') {
        let (a, p) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--propensity: expected arm=p, got {part:?}")))?;
        let a: u32 = a.trim().parse().map_err(|_| CliError::Usage(format!("--propensity: bad arm {a:?}")))?;
        let p: f64 = p.trim().parse().map_err(|_| CliError::Usage(format!("--propensity: bad probability {p:?}")))?;
        values.push((Arm(a), p));
    }
    Ok(PropensityMode::Known(values))
}

fn parse_model(text: &str, seed: u64) -> Result<LearnerSpec, CliError> {
    let bad = || CliError::Usage(format!("--model {text:?}: expected rf, knn:K, ridge:L or constant"));
    let spec = match text.split_once(':') {
        None if text == "rf" => LearnerSpec::random_forest(seed),
        None if text == "constant" => LearnerSpec::constant(),
        Some(("knn", k)) => LearnerSpec::knn(k.parse().map_err(|_| bad())?),
        Some(("ridge", l)) => LearnerSpec::ridge(l.parse().map_err(|_| bad())?),
        _ => return Err(bad()),
    };
    spec.validate()?;
    Ok(spec.with_seed(seed))
}

fn pipeline(
    learner: LearnerChoice,
    model: &str,
    propensity: PropensityMode,
    folds: usize,
    case: &BoundCase,
    seed: u64,
) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::new(learner, propensity, seed);
    cfg.folds = folds;
    cfg.nuisance_learner = parse_model(model, derive_seed(seed, Substream::Forest, 1))?;
    cfg.second_stage = parse_model(model, derive_seed(seed, Substream::Forest, 2))?;
    cfg.conservative_only = matches!(case, BoundCase::Conservative);
    Ok(cfg)
}

/// Run metadata written next to a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub schema_version: u32,
    pub learner: LearnerChoice,
    pub target: Target,
    pub case: BoundCase,
    pub t_max: f64,
    pub n: usize,
    pub crossing_count: usize,
    pub scenario: Option<SimulatedScenario>,
}

fn write_bounds(path: &Path, d: &Dataset, extra: &[(&str, Vec<f64>)]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["id".to_string()];
    header.extend(d.covariate_names().iter().cloned());
    header.extend(extra.iter().map(|(name, _)| name.to_string()));
    w.write_record(&header)?;
    for (i, s) in d.subjects().iter().enumerate() {
        let mut rec = vec![s.id.clone()];
        rec.extend(s.x.iter().map(|&v| num(v)));
        rec.extend(extra.iter().map(|(_, col)| num(col[i])));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub(crate) fn fit(a: &FitArgs, out: &Path) -> Result<(), CliError> {
    let (d, meta) = load_dataset(&a.data)?;
    let target = resolve_target(&d, &a.arms, a.dose)?;
    let case = resolve_case(&a.case, &d)?;
    let propensity = parse_propensity(&a.propensity, d.arms())?;
    let learner = match a.learner {
        LearnerArg::Survb => LearnerChoice::Survb,
        LearnerArg::Plugin => LearnerChoice::Plugin,
    };
    let mut cfg = pipeline(learner, &a.model, propensity, a.folds, &case, a.seed)?;
    cfg.compose_capo = a.compose;
    cfg.smoothing = DoseSmoothing {
        kernel: match a.kernel {
            KernelArg::Gaussian => Kernel::Gaussian,
            KernelArg::Epanechnikov => Kernel::Epanechnikov,
        },
        bandwidth: a.bandwidth,
    };
    let model = cfg.fit(&d, target, &case)?;
    let pred = model.predict(&d.covariates())?;
    if pred.crossing_count() > 0 {
        warn!("{} of {} bound pairs crossed and were repaired", pred.crossing_count(), d.len());
    }
    write_bounds(
        &out.join("bounds.csv"),
        &d,
        &[
            ("lower", pred.bounds.iter().map(|b| b.lower).collect()),
            ("upper", pred.bounds.iter().map(|b| b.upper).collect()),
        ],
    )?;
    let model_path = out.join(MODEL_FILE);
    let file = File::create(&model_path).map_err(|e| CliError::io(&model_path, e))?;
    let mut w = BufWriter::new(file);
    write_model(&mut w, MODEL_KIND, &model)?;
    w.flush().map_err(|e| CliError::io(&model_path, e))?;
    let fit_meta = FitMeta {
        schema_version: REPORT_SCHEMA_VERSION,
        learner,
        target,
        case,
        t_max: d.t_max(),
        n: d.len(),
        crossing_count: pred.crossing_count(),
        scenario: meta.map(|m| m.scenario),
    };
    write_json(&out.join("run_meta.json"), &fit_meta)
}

fn case_spec(c: CaseArg, gamma: f64) -> CaseSpec {
    match c {
        CaseArg::Domain => CaseSpec::domain(gamma),
        CaseArg::Conservative => CaseSpec::conservative(),
    }
}

fn case_name(case: &BoundCase) -> &'static str {
    match case {
        BoundCase::Domain { .. } => "domain",
        BoundCase::Conservative => "conservative",
    }
}

pub(crate) fn evaluate(a: &EvaluateArgs, out: &Path) -> Result<(), CliError> {
    let report = match &a.model {
        Some(dir) => evaluate_fitted(dir, a.grid)?,
        None => {
            let plan = BenchmarkPlan {
                families: a.scenario.iter().map(|&f| family(f)).collect(),
                xis: a.xi.clone(),
                sizes: a.n.clone(),
                design: a.design.into(),
                seeds: a.seeds.clone(),
                cases: a.cases.iter().map(|&c| case_spec(c, a.gamma)).collect(),
                learners: a
                    .learners
                    .iter()
                    .map(|l| match l {
                        EvalLearnerArg::Survb => LearnerChoice::Survb,
                        EvalLearnerArg::Plugin => LearnerChoice::Plugin,
                        EvalLearnerArg::Oracle => LearnerChoice::Oracle,
                    })
                    .collect(),
                grid: a.grid,
            };
            if plan.seeds.is_empty() {
                return Err(CliError::Usage("--seeds must name at least one seed".into()));
            }
            run_benchmark(&plan)?
        }
    };
    for c in &report.cells {
        println!(
            "{:<8} xi={:<4} n={:<6} {:<12} {:<7} rmse {:.3} ± {:.3}  width {:.3} (oracle {:.3})",
            c.family.name(),
            c.xi,
            c.n,
            c.case,
            c.learner.name(),
            c.rmse_mean,
            c.rmse_sd,
            c.width_mean,
            c.oracle_width
        );
    }
    write_json(&out.join("eval_report.json"), &report)
}

fn evaluate_fitted(dir: &Path, grid_points: usize) -> Result<EvalReport, CliError> {
    let meta: FitMeta = read_json(&dir.join("run_meta.json"))?;
    let Some(SimulatedScenario::Binary(s)) = &meta.scenario else {
        return Err(CliError::Usage(format!(
            "{}: the model was not fitted on a simulated two-arm dataset",
            dir.display()
        )));
    };
    if meta.target != TREATED_VS_CONTROL {
        return Err(CliError::Usage("evaluation compares CATE bounds of arm 1 versus arm 0".into()));
    }
    let path = dir.join(MODEL_FILE);
    let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
    let model: BoundModel = read_model(std::io::BufReader::new(file), MODEL_KIND)?;
    let grid = x_grid(grid_points);
    let rmse = rmse_vs_oracle(&model, s, &grid, &meta.case)?;
    let widths: Vec<f64> = model.predict_bounds(&Matrix::column(&grid))?.iter().map(|b| b.width()).collect();
    let width_mean = stable_sum(widths.iter().copied()) / widths.len() as f64;
    let oracle_width = oracle_mean_width(s, &meta.case, grid_points)?;
    let case = case_name(&meta.case).to_string();
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        design: s.design,
        seeds: vec![s.seed],
        cells: vec![EvalCell {
            family: s.family,
            xi: s.xi_target,
            n: s.n,
            case: case.clone(),
            learner: meta.learner,
            rmse_mean: rmse.joint,
            rmse_sd: 0.0,
            rmse_lower_mean: rmse.lower,
            rmse_upper_mean: rmse.upper,
            width_mean,
            oracle_width,
        }],
        widths: vec![WidthRow {
            family: s.family,
            case,
            learner: meta.learner,
            xi: s.xi_target,
            estimated_width: width_mean,
            oracle_width,
        }],
    })
}

/// Binary view of a covariate for subgroup tables: `x == 1` for 0/1
/// columns, `x > median` otherwise.
struct Indicator {
    name: String,
    label: String,
    mask: Vec<bool>,
}

fn indicators(d: &Dataset) -> Vec<Indicator> {
    (0..d.dim())
        .map(|j| {
            let col: Vec<f64> = d.subjects().iter().map(|s| s.x[j]).collect();
            let name = d.covariate_names()[j].clone();
            if col.iter().all(|&v| v == 0.0 || v == 1.0) {
                Indicator { label: format!("{name}=1"), mask: col.iter().map(|&v| v == 1.0).collect(), name }
            } else {
                let mut sorted = col.clone();
                sorted.sort_by(f64::total_cmp);
                let median = sorted[sorted.len() / 2];
                Indicator { label: format!("{name}>{median}"), mask: col.iter().map(|&v| v > median).collect(), name }
            }
        })
        .collect()
}

fn pct_cell(lb: &[f64], mask: &[bool]) -> (usize, String) {
    let n = mask.iter().filter(|&&m| m).count();
    let pct = fraction_lb_positive(lb, Some(mask)).map(num).unwrap_or_default();
    (n, pct)
}

fn describe(leaf: &Leaf, names: &[String]) -> String {
    if leaf.path.is_empty() {
        return "all".into();
    }
    leaf.path
        .iter()
        .map(|&(c, t, left)| format!("{} {} {}", names[c], if left { "<=" } else { ">" }, t))
        .collect::<Vec<_>>()
        .join(" & ")
}

#[derive(Serialize)]
struct BootstrapGroup {
    group: String,
    n: usize,
    #[serde(flatten)]
    summary: BootstrapSummary,
}

#[derive(Serialize)]
struct BootstrapReport {
    schema_version: u32,
    replicates: usize,
    refit: bool,
    groups: Vec<BootstrapGroup>,
}

#[derive(Serialize)]
struct SubgroupReport<'a> {
    schema_version: u32,
    covariates: &'a [String],
    criterion: &'static str,
    tree: &'a SubgroupTree,
}

pub(crate) fn audit(a: &AuditArgs, out: &Path) -> Result<(), CliError> {
    let (d, _) = load_dataset(&a.data)?;
    if d.mode() != TreatmentMode::Discrete {
        return Err(CliError::Usage("audit needs discrete arms".into()));
    }
    let arms = resolve_arms(&d, &a.arms)?;
    let [treated, control] = arms[..] else {
        return Err(CliError::Usage("audit compares exactly two arms".into()));
    };
    let case = resolve_case(&a.case, &d)?;
    let propensity = parse_propensity(&a.propensity, d.arms())?;
    let cfg = pipeline(LearnerChoice::Survb, &a.model, propensity, a.folds, &case, a.seed)?;
    let target = Target::Pair { treated, control };
    let ns = cfg.fit_nuisances(&d)?;
    let x = d.covariates();
    let cate = cfg.fit_bounds(&d, &ns, target, &case)?.predict(&x)?;
    let capo_t = cfg.fit_bounds(&d, &ns, Target::Arm { arm: treated }, &case)?.predict(&x)?;
    let capo_c = cfg.fit_bounds(&d, &ns, Target::Arm { arm: control }, &case)?.predict(&x)?;
    let lb: Vec<f64> = cate.bounds.iter().map(|b| b.lower).collect();

    let col = |p: &crate::bounds::Prediction, upper: bool| -> Vec<f64> {
        p.bounds.iter().map(|b| if upper { b.upper } else { b.lower }).collect()
    };
    let (lt, ut, lc, uc) = (
        format!("capo_lower_{treated}"),
        format!("capo_upper_{treated}"),
        format!("capo_lower_{control}"),
        format!("capo_upper_{control}"),
    );
    write_bounds(
        &out.join("bounds.csv"),
        &d,
        &[
            ("cate_lower", lb.clone()),
            ("cate_upper", col(&cate, true)),
            (&lt, col(&capo_t, false)),
            (&ut, col(&capo_t, true)),
            (&lc, col(&capo_c, false)),
            (&uc, col(&capo_c, true)),
        ],
    )?;

    let inds = indicators(&d);
    let fractions = out.join("fractions.csv");
    let mut w = csv_writer(&fractions)?;
    w.write_record(["covariate", "group", "n", "pct_lb_positive"])?;
    let (n_all, pct_all) = pct_cell(&lb, &vec![true; lb.len()]);
    w.write_record(["all", "all", &n_all.to_string(), &pct_all])?;
    for ind in &inds {
        let (n, pct) = pct_cell(&lb, &ind.mask);
        w.write_record([ind.name.as_str(), ind.label.as_str(), &n.to_string(), &pct])?;
        let complement: Vec<bool> = ind.mask.iter().map(|m| !m).collect();
        let (n, pct) = pct_cell(&lb, &complement);
        w.write_record([ind.name.as_str(), &format!("not {}", ind.label), &n.to_string(), &pct])?;
    }
    w.flush().map_err(|e| CliError::io(&fractions, e))?;

    let pairs = out.join("pairs.csv");
    let mut w = csv_writer(&pairs)?;
    w.write_record(["group_a", "group_b", "n", "pct_lb_positive"])?;
    for (i, p) in inds.iter().enumerate() {
        for q in &inds[i + 1..] {
            let mask: Vec<bool> = p.mask.iter().zip(&q.mask).map(|(&u, &v)| u && v).collect();
            let (n, pct) = pct_cell(&lb, &mask);
            w.write_record([p.label.as_str(), q.label.as_str(), &n.to_string(), &pct])?;
        }
    }
    w.flush().map_err(|e| CliError::io(&pairs, e))?;

    let tree = subgroup_tree(&x, &lb, a.max_depth, a.min_leaf)?;
    write_json(
        &out.join("subgroups.json"),
        &SubgroupReport {
            schema_version: REPORT_SCHEMA_VERSION,
            covariates: d.covariate_names(),
            criterion: "max fraction of CATE lower bounds > 0",
            tree: &tree,
        },
    )?;

    let mut groups = vec![("all".to_string(), vec![true; d.len()])];
    for leaf in tree.leaves() {
        let mut mask = vec![false; d.len()];
        for &i in &leaf.rows {
            mask[i] = true;
        }
        groups.push((describe(&leaf, d.covariate_names()), mask));
    }
    let boot_seed = derive_seed(a.seed, Substream::Bootstrap, 0);
    let mut boot = Vec::new();
    for (k, (name, mask)) in groups.into_iter().enumerate() {
        let seed = derive_seed(boot_seed, Substream::Bootstrap, k as u64);
        let n = mask.iter().filter(|&&m| m).count();
        let summary = if a.refit {
            bootstrap_subgroup_refit(&d, &mask, a.bootstrap, seed, |ds: &Dataset, xs: &Matrix| {
                let m = cfg.fit(ds, target, &case)?;
                Ok::<_, crate::analysis::AnalysisError>(m.predict_bounds(xs)?.iter().map(|b| b.lower).collect())
            })?
        } else {
            bootstrap_subgroup(&lb, &mask, a.bootstrap, seed)?
        };
        boot.push(BootstrapGroup { group: name, n, summary });
    }
    write_json(
        &out.join("bootstrap.json"),
        &BootstrapReport {
            schema_version: REPORT_SCHEMA_VERSION,
            replicates: a.bootstrap,
            refit: a.refit,
            groups: boot,
        },
    )?;

    let grid = time_grid(d.t_max(), a.curve_points);
    let curves_path = out.join("curves.csv");
    let mut w = csv_writer(&curves_path)?;
    w.write_record(["arm", "t", "p_lower", "p_upper"])?;
    let mut series = Vec::new();
    for (arm, pred) in [(treated, &capo_t), (control, &capo_c)] {
        let c = bound_survival_curves(&pred.bounds, &grid);
        for ((t, l), u) in c.grid.iter().zip(&c.lower).zip(&c.upper) {
            w.write_record([arm.to_string(), num(*t), num(*l), num(*u)])?;
        }
        series.push(Series {
            name: format!("arm {arm} lower"),
            points: c.grid.iter().copied().zip(c.lower.clone()).collect(),
        });
        series.push(Series {
            name: format!("arm {arm} upper"),
            points: c.grid.iter().copied().zip(c.upper.clone()).collect(),
        });
    }
    w.flush().map_err(|e| CliError::io(&curves_path, e))?;
    let svg = line_chart("Expected survival time bounds", "t", "P(bound > t)", &series);
    let svg_path = out.join("curves.svg");
    std::fs::write(&svg_path, svg).map_err(|e| CliError::io(&svg_path, e))
}

struct CellSpec {
    covariate: Option<usize>,
    edges: Vec<f64>,
}

fn parse_cells(text: &str, d: &Dataset) -> Result<CellSpec, CliError> {
    if text.trim() == "none" {
        return Ok(CellSpec { covariate: None, edges: vec![f64::NEG_INFINITY, f64::INFINITY] });
    }
    let (name, edges) = text
        .split_once(':')
        .ok_or_else(|| CliError::Usage(format!("--cells {text:?}: expected none or covariate:e0,e1,...")))?;
    let idx = d
        .covariate_names()
        .iter()
        .position(|n| n == name.trim())
        .ok_or_else(|| CliError::Usage(format!("--cells: unknown covariate `{name}`")))?;
    let edges = edges
        .split(',')
        .map(|e| e.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("--cells: bad edge {e:?}"))))
        .collect::<Result<Vec<f64>, _>>()?;
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(CliError::Usage("--cells needs at least two strictly increasing edges".into()));
    }
    Ok(CellSpec { covariate: Some(idx), edges })
}

pub(crate) fn gmsm(a: &GmsmArgs, out: &Path) -> Result<(), CliError> {
    let (d, _) = load_dataset(&a.data)?;
    if d.mode() != TreatmentMode::Discrete {
        return Err(CliError::Usage("gmsm needs discrete arms".into()));
    }
    let mut gammas = a.gamma_confounding.clone();
    for &g in &gammas {
        if !(g >= 1.0) {
            return Err(SensitivityError::GammaBelowOne(g).into());
        }
    }
    gammas.sort_by(f64::total_cmp);
    let upper = match resolve_case(&a.case, &d)? {
        BoundCase::Conservative => CellUpper::Conservative { t_max: d.t_max() },
        BoundCase::Domain { gamma: SensitivitySpec::Constant { gamma } } => CellUpper::Domain { gamma },
        BoundCase::Domain { .. } => return Err(CliError::Usage("gmsm cells take a constant --gamma".into())),
    };
    let known = match a.propensity.trim() {
        "empirical" => None,
        other => match parse_propensity(other, d.arms())? {
            PropensityMode::Known(v) => Some(v),
            PropensityMode::Estimate => {
                return Err(CliError::Usage("gmsm propensity is `empirical` or `known:...`".into()))
            }
        },
    };
    let cells = parse_cells(&a.cells, &d)?;
    let path = out.join("gmsm.csv");
    let mut w = csv_writer(&path)?;
    let mut header: Vec<String> =
        ["covariate", "bin_low", "bin_high", "arm", "n", "pi", "plugin_lower", "plugin_upper"]
            .map(String::from)
            .to_vec();
    for g in &gammas {
        header.push(format!("lower_gamma_{g}"));
        header.push(format!("upper_gamma_{g}"));
    }
    w.write_record(&header)?;
    let last = cells.edges.len() - 2;
    for b in 0..=last {
        let (lo, hi) = (cells.edges[b], cells.edges[b + 1]);
        let in_cell: Vec<_> = d
            .subjects()
            .iter()
            .filter(|s| match cells.covariate {
                None => true,
                Some(j) => s.x[j] >= lo && (s.x[j] < hi || (b == last && s.x[j] == hi)),
            })
            .collect();
        for &arm in d.arms() {
            let members: Vec<_> = in_cell.iter().copied().filter(|s| s.arm() == arm).collect();
            let pi = match &known {
                Some(v) => v.iter().find(|(a, _)| *a == arm).map(|(_, p)| *p).unwrap_or(f64::NAN),
                None if in_cell.is_empty() => f64::NAN,
                None => members.len() as f64 / in_cell.len() as f64,
            };
            let mut rec = vec![
                cells.covariate.map(|j| d.covariate_names()[j].clone()).unwrap_or_else(|| "all".into()),
                num(lo),
                num(hi),
                arm.to_string(),
                members.len().to_string(),
                num(pi),
            ];
            let (lv, uv) = cell_ingredients(&members, upper);
            let mut widened = Vec::new();
            let mut plugin = None;
            for &g in &gammas {
                match gmsm_bound_adjustment(&lv, &uv, pi, GmsmSpec { gamma: g }) {
                    Ok(cell) => {
                        plugin = Some(cell.plugin);
                        widened.push(num(cell.widened.lower));
                        widened.push(num(cell.widened.upper));
                    }
                    Err(e) => {
                        warn!("cell [{lo}, {hi}) arm {arm}, Γ={g}: {e}");
                        widened.push(String::new());
                        widened.push(String::new());
                    }
                }
            }
            rec.push(plugin.map(|p| num(p.lower)).unwrap_or_default());
            rec.push(plugin.map(|p| num(p.upper)).unwrap_or_default());
            rec.extend(widened);
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| CliError::io(&path, e))
}
