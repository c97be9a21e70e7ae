//! The plug-in learner and the two-stage SurvB learner.

use log::warn;
use serde::{Deserialize, Serialize};

use super::continuous::pseudo_continuous;
use super::formulas::{capo_lower, capo_upper_conservative, capo_upper_domain_value, cate_bounds};
use super::pseudo::{pseudo_cate, pseudo_lower, pseudo_outcome, ArmInput, PseudoOutcomeCase};
use super::{repair, BoundPair, BoundsError};
use crate::data::{Arm, Dataset, TreatmentMode};
use crate::models::{fit_regressor, FittedRegressor, LearnerSpec, Matrix};
use crate::nuisance::{NuisanceProvider, NuisanceSet, Nuisances};
use crate::rng::{derive_seed, Substream};
use crate::sensitivity::{eval_gamma, SensitivitySpec};

/// What a bound model estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    /// CAPO bounds for one arm.
    Arm { arm: Arm },
    /// CATE bounds for `treated` versus `control`.
    Pair { treated: Arm, control: Arm },
    /// CAPO bounds at a continuous dose.
    Dose { dose: f64 },
}

impl Target {
    pub fn is_cate(&self) -> bool {
        matches!(self, Target::Pair { .. })
    }

    fn check(&self, mode: TreatmentMode) -> Result<(), BoundsError> {
        match (self, mode) {
            (Target::Dose { .. }, TreatmentMode::Continuous) => Ok(()),
            (Target::Dose { .. }, TreatmentMode::Discrete) => {
                Err(BoundsError::TargetMismatch("dose target on discrete-arm data".into()))
            }
            (_, TreatmentMode::Continuous) => {
                Err(BoundsError::TargetMismatch("arm target on continuous-dose data".into()))
            }
            (Target::Pair { treated, control }, _) if treated == control => Err(BoundsError::ArmsNotDistinct(*treated)),
            _ => Ok(()),
        }
    }

    fn limits(&self, t_max: f64) -> (f64, f64) {
        if self.is_cate() {
            (-t_max, t_max)
        } else {
            (0.0, t_max)
        }
    }
}

/// Which upper bound is targeted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum BoundCase {
    /// Domain-knowledge bound with post-dropout function `γ`.
    Domain { gamma: SensitivitySpec },
    /// Conservative bound anchored at `t_max`.
    Conservative,
}

impl BoundCase {
    pub fn domain(gamma: f64) -> Self {
        BoundCase::Domain { gamma: SensitivitySpec::constant(gamma) }
    }

    /// The per-subject upper pseudo-outcome case at `(x, arm)`, and whether
    /// `γ + ν₁` overshoots `t_max`.
    fn upper_case(
        &self,
        x: &[f64],
        arm: Arm,
        n: &Nuisances,
        t_max: f64,
    ) -> Result<(PseudoOutcomeCase, bool), BoundsError> {
        Ok(match self {
            BoundCase::Domain { gamma } => {
                let g = eval_gamma(gamma, x, arm, Some(n.nu1), t_max)?;
                (PseudoOutcomeCase::UpperDomain { gamma: g }, g + n.nu1 > t_max * (1.0 + 1e-12))
            }
            BoundCase::Conservative => (PseudoOutcomeCase::UpperConservative { t_max }, false),
        })
    }

    fn capo(&self, x: &[f64], arm: Arm, n: &Nuisances, t_max: f64) -> Result<(BoundPair, bool), BoundsError> {
        let lower = capo_lower(n.nu0, n.nu1, n.xi);
        Ok(match self {
            BoundCase::Domain { gamma } => {
                let g = eval_gamma(gamma, x, arm, Some(n.nu1), t_max)?;
                (
                    BoundPair::new(lower, capo_upper_domain_value(n.nu0, n.nu1, n.xi, g)),
                    g + n.nu1 > t_max * (1.0 + 1e-12),
                )
            }
            BoundCase::Conservative => (BoundPair::new(lower, capo_upper_conservative(n.nu0, n.xi, t_max)), false),
        })
    }
}

/// Raw predictions after the crossing policy.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub bounds: Vec<BoundPair>,
    pub crossed: Vec<bool>,
}

impl Prediction {
    pub fn crossing_count(&self) -> usize {
        self.crossed.iter().filter(|&&c| c).count()
    }
}

/// A fitted model producing bound pairs on new covariate rows.
pub trait BoundPredictor {
    fn target(&self) -> Target;

    fn t_max(&self) -> f64;

    /// Unrepaired `(lower, upper)` values.
    fn predict_raw(&self, x: &Matrix) -> Result<Vec<(f64, f64)>, BoundsError>;

    /// Predictions clamped to the support and with crossings collapsed.
    fn predict(&self, x: &Matrix) -> Result<Prediction, BoundsError> {
        let (lo, hi) = self.target().limits(self.t_max());
        let (bounds, crossed) = self.predict_raw(x)?.into_iter().map(|(l, u)| repair(l, u, lo, hi)).unzip();
        Ok(Prediction { bounds, crossed })
    }

    fn predict_bounds(&self, x: &Matrix) -> Result<Vec<BoundPair>, BoundsError> {
        Ok(self.predict(x)?.bounds)
    }
}

/// Plug-in learner: the closed-form bounds evaluated at the nuisances of
/// `provider`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PluginModel<P> {
    pub target: Target,
    pub case: BoundCase,
    pub provider: P,
}

pub fn fit_plugin<P: NuisanceProvider>(provider: P, target: Target, case: BoundCase) -> PluginModel<P> {
    PluginModel { target, case, provider }
}

impl<P: NuisanceProvider> PluginModel<P> {
    fn capo_rows(&self, x: &Matrix, treatment: f64, arm: Arm) -> Result<Vec<BoundPair>, BoundsError> {
        let t_max = self.provider.t_max();
        let ns = self.provider.evaluate(x, treatment)?;
        let mut violations = 0;
        let out = ns
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let (pair, bad) = self.case.capo(x.row(i), arm, n, t_max)?;
                violations += usize::from(bad);
                Ok(pair)
            })
            .collect::<Result<Vec<_>, BoundsError>>()?;
        if violations > 0 {
            warn!("{violations} rows have gamma + nu1 above t_max");
        }
        Ok(out)
    }
}

impl<P: NuisanceProvider> BoundPredictor for PluginModel<P> {
    fn target(&self) -> Target {
        self.target
    }

    fn t_max(&self) -> f64 {
        self.provider.t_max()
    }

    fn predict_raw(&self, x: &Matrix) -> Result<Vec<(f64, f64)>, BoundsError> {
        let pairs = match self.target {
            Target::Arm { arm } => self.capo_rows(x, f64::from(arm.0), arm)?,
            Target::Dose { dose } => self.capo_rows(x, dose, Arm(0))?,
            Target::Pair { treated, control } => {
                let a = self.capo_rows(x, f64::from(treated.0), treated)?;
                let b = self.capo_rows(x, f64::from(control.0), control)?;
                a.into_iter().zip(b).map(|(p, q)| cate_bounds(p, q)).collect()
            }
        };
        Ok(pairs.into_iter().map(|p| (p.lower, p.upper)).collect())
    }
}

/// Per-subject pseudo-outcomes with diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoTable {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Subjects where `γ + ν̂₁ > t_max`.
    pub window_violations: usize,
    /// Subjects whose density estimate was raised to the floor.
    pub floor_hits: usize,
}

/// Pseudo-outcomes for every subject of `d`, each computed with the
/// out-of-fold nuisances of its own fold.
pub fn pseudo_outcomes(
    d: &Dataset,
    ns: &NuisanceSet,
    target: Target,
    case: &BoundCase,
) -> Result<PseudoTable, BoundsError> {
    target.check(d.mode())?;
    let t_max = d.t_max();
    let n = d.len();
    let mut table =
        PseudoTable { lower: Vec::with_capacity(n), upper: Vec::with_capacity(n), window_violations: 0, floor_hits: 0 };
    match target {
        Target::Arm { arm } => {
            let nuis = ns.out_of_fold(d, f64::from(arm.0))?;
            for (s, v) in d.subjects().iter().zip(&nuis) {
                let (upper, bad) = case.upper_case(&s.x, arm, v, t_max)?;
                table.window_violations += usize::from(bad);
                table.lower.push(pseudo_lower(s, v, arm));
                table.upper.push(pseudo_outcome(s, v, arm, upper));
            }
        }
        Target::Pair { treated, control } => {
            let n1 = ns.out_of_fold(d, f64::from(treated.0))?;
            let n2 = ns.out_of_fold(d, f64::from(control.0))?;
            for ((s, v1), v2) in d.subjects().iter().zip(&n1).zip(&n2) {
                let (u1, bad1) = case.upper_case(&s.x, treated, v1, t_max)?;
                let (u2, bad2) = case.upper_case(&s.x, control, v2, t_max)?;
                table.window_violations += usize::from(bad1 || bad2);
                let (lo, up) = pseudo_cate(
                    s,
                    &ArmInput { arm: treated, nuisances: *v1, upper: u1 },
                    &ArmInput { arm: control, nuisances: *v2, upper: u2 },
                )?;
                table.lower.push(lo);
                table.upper.push(up);
            }
        }
        Target::Dose { dose } => {
            let (kernel, h) = ns.smoothing();
            let nuis = ns.out_of_fold(d, dose)?;
            for (s, v) in d.subjects().iter().zip(&nuis) {
                let (upper, bad) = case.upper_case(&s.x, Arm(0), v, t_max)?;
                table.window_violations += usize::from(bad);
                let lo = pseudo_continuous(s, dose, v, kernel, h, PseudoOutcomeCase::Lower)?;
                let up = pseudo_continuous(s, dose, v, kernel, h, upper)?;
                table.floor_hits += usize::from(lo.floor_hit);
                table.lower.push(lo.value);
                table.upper.push(up.value);
            }
        }
    }
    if table.window_violations > 0 {
        warn!("{} subjects have gamma + nu1 above t_max", table.window_violations);
    }
    if table.floor_hits > 0 {
        warn!("{} subjects hit the density floor", table.floor_hits);
    }
    Ok(table)
}

/// Where a SurvB model came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub second_stage: LearnerSpec,
    pub nuisance_learner: LearnerSpec,
    pub folds: usize,
    pub fold_seed: u64,
}

/// Second-stage regressions of the lower and upper pseudo-outcomes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvbModel {
    pub target: Target,
    pub case: BoundCase,
    pub t_max: f64,
    lower: FittedRegressor,
    upper: FittedRegressor,
    pub provenance: Provenance,
    /// Training rows whose raw predictions crossed before repair.
    pub crossing_count: usize,
}

impl BoundPredictor for SurvbModel {
    fn target(&self) -> Target {
        self.target
    }

    fn t_max(&self) -> f64 {
        self.t_max
    }

    fn predict_raw(&self, x: &Matrix) -> Result<Vec<(f64, f64)>, BoundsError> {
        let lo = self.lower.predict(x)?;
        let up = self.upper.predict(x)?;
        Ok(lo.into_iter().zip(up).collect())
    }
}

/// Regresses precomputed pseudo-outcomes on `x`.
pub fn fit_second_stage(
    x: &Matrix,
    table: &PseudoTable,
    target: Target,
    case: BoundCase,
    learner: &LearnerSpec,
    t_max: f64,
    provenance: Provenance,
) -> Result<SurvbModel, BoundsError> {
    let spec = |role| learner.with_seed(derive_seed(learner.seed, Substream::Forest, role));
    let lower = fit_regressor(&spec(0x5ec0_0001), x, &table.lower)?;
    let upper = fit_regressor(&spec(0x5ec0_0002), x, &table.upper)?;
    let mut model = SurvbModel { target, case, t_max, lower, upper, provenance, crossing_count: 0 };
    model.crossing_count = model.predict(x)?.crossing_count();
    Ok(model)
}

/// Stage 2 of the SurvB learner for one target.
pub fn fit_survb(
    d: &Dataset,
    ns: &NuisanceSet,
    target: Target,
    case: BoundCase,
    second_stage: &LearnerSpec,
) -> Result<SurvbModel, BoundsError> {
    let table = pseudo_outcomes(d, ns, target, &case)?;
    let provenance = Provenance {
        second_stage: second_stage.clone(),
        nuisance_learner: ns.options().learner.clone(),
        folds: ns.plan().k(),
        fold_seed: ns.plan().seed(),
    };
    fit_second_stage(&d.covariates(), &table, target, case, second_stage, d.t_max(), provenance)
}

/// CATE bounds obtained by differencing two fitted CAPO models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComposedCateModel {
    pub treated: SurvbModel,
    pub control: SurvbModel,
}

pub fn fit_composed_cate(
    d: &Dataset,
    ns: &NuisanceSet,
    treated: Arm,
    control: Arm,
    case: BoundCase,
    second_stage: &LearnerSpec,
) -> Result<ComposedCateModel, BoundsError> {
    if treated == control {
        return Err(BoundsError::ArmsNotDistinct(treated));
    }
    Ok(ComposedCateModel {
        treated: fit_survb(d, ns, Target::Arm { arm: treated }, case.clone(), second_stage)?,
        control: fit_survb(d, ns, Target::Arm { arm: control }, case, second_stage)?,
    })
}

impl BoundPredictor for ComposedCateModel {
    fn target(&self) -> Target {
        match (self.treated.target, self.control.target) {
            (Target::Arm { arm: treated }, Target::Arm { arm: control }) => Target::Pair { treated, control },
            _ => unreachable!("composed models hold arm targets"),
        }
    }

    fn t_max(&self) -> f64 {
        self.treated.t_max
    }

    fn predict_raw(&self, x: &Matrix) -> Result<Vec<(f64, f64)>, BoundsError> {
        let a = self.treated.predict_bounds(x)?;
        let b = self.control.predict_bounds(x)?;
        Ok(a.into_iter()
            .zip(b)
            .map(|(p, q)| {
                let c = cate_bounds(p, q);
                (c.lower, c.upper)
            })
            .collect())
    }
}

/// Any fitted bound model, as stored by the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum BoundModel {
    Survb(SurvbModel),
    Composed(ComposedCateModel),
    Plugin(PluginModel<NuisanceSet>),
}

impl BoundPredictor for BoundModel {
    fn target(&self) -> Target {
        match self {
            BoundModel::Survb(m) => m.target(),
            BoundModel::Composed(m) => m.target(),
            BoundModel::Plugin(m) => m.target(),
        }
    }

    fn t_max(&self) -> f64 {
        match self {
            BoundModel::Survb(m) => m.t_max(),
            BoundModel::Composed(m) => m.t_max(),
            BoundModel::Plugin(m) => m.t_max(),
        }
    }

    fn predict_raw(&self, x: &Matrix) -> Result<Vec<(f64, f64)>, BoundsError> {
        match self {
            BoundModel::Survb(m) => m.predict_raw(x),
            BoundModel::Composed(m) => m.predict_raw(x),
            BoundModel::Plugin(m) => m.predict_raw(x),
        }
    }
}
