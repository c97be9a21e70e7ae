//! Stage 1: cross-fitted nuisance estimation.
//!
//! For every arm `a` the set holds `ν̂(0,·,a)` and `ν̂(1,·,a)` (regressions of
//! the observed time on the covariates within each censoring stratum), the
//! censoring strength `ξ̂(·,a)` and the propensity `π̂_a(·)`. In continuous
//! mode the dose is appended to the covariates and `π̂` is replaced by a
//! generalized propensity density `f̂(a | x)`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::Kernel;
use crate::data::{Arm, Dataset, TreatmentMode};
use crate::models::{
    fit_classifier, fit_regressor, FittedClassifier, FittedRegressor, LearnerKind, LearnerSpec, Matrix, ModelError,
};
use crate::rng::{derive_seed, stream, Substream};

pub const DEFAULT_FOLDS: usize = 3;

#[derive(Debug, Error)]
pub enum NuisanceError {
    #[error("need at least {k} subjects for {k} folds, got {n}")]
    TooFewSubjects { n: usize, k: usize },
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("arm {arm}, delta = {delta}: not enough subjects to cover every training fold")]
    EmptyCell { arm: Arm, delta: u8 },
    #[error("fold plan covers {plan} subjects but the dataset has {data}")]
    PlanMismatch { plan: usize, data: usize },
    #[error("unknown arm {0}")]
    UnknownArm(f64),
    #[error("expected {expected} covariates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("fold index {fold} out of range for {k} folds")]
    FoldOutOfRange { fold: usize, k: usize },
    #[error("invalid propensity specification: {0}")]
    InvalidPropensity(String),
    #[error("treatment has zero spread; a kernel bandwidth cannot be chosen")]
    DegenerateDose,
    #[error("bandwidth must be positive, got {0}")]
    BandwidthNonPositive(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Per-subject fold assignment for K-fold cross-fitting.
///
/// `k == 1` is the degenerate full-sample plan used by the plug-in learner:
/// every model is trained on all subjects and evaluated in-sample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossFitPlan {
    k: usize,
    seed: u64,
    folds: Vec<usize>,
}

impl CrossFitPlan {
    pub fn full_sample(n: usize) -> Self {
        Self { k: 1, seed: 0, folds: vec![0; n] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    pub fn folds(&self) -> &[usize] {
        &self.folds
    }

    pub fn fold_of(&self, subject: usize) -> usize {
        self.folds[subject]
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.folds {
            sizes[f] += 1;
        }
        sizes
    }

    /// Rows whose models evaluate fold `f` (its complement, or everything
    /// for the full-sample plan).
    pub fn training_rows(&self, f: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.k == 1 || self.folds[i] != f).collect()
    }
}

fn cell_key(d: &Dataset, i: usize) -> (u32, u8) {
    let s = &d.subjects()[i];
    match d.mode() {
        TreatmentMode::Discrete => (s.arm().0, s.delta()),
        TreatmentMode::Continuous => (0, s.delta()),
    }
}

/// Stratified fold assignment: subjects are shuffled within each `(arm, δ)`
/// cell (δ only in continuous mode), the cells are concatenated and folds
/// are dealt round-robin. Fold sizes differ by at most one and every cell
/// with two or more members lands in at least two folds.
pub fn assign_folds(d: &Dataset, k: usize, seed: u64) -> Result<CrossFitPlan, NuisanceError> {
    if k < 2 {
        return Err(NuisanceError::InvalidFoldCount(k));
    }
    if d.len() < k {
        return Err(NuisanceError::TooFewSubjects { n: d.len(), k });
    }
    let mut cells: BTreeMap<(u32, u8), Vec<usize>> = BTreeMap::new();
    for i in 0..d.len() {
        cells.entry(cell_key(d, i)).or_default().push(i);
    }
    if let Some(((arm, delta), _)) = cells.iter().find(|(_, rows)| rows.len() < 2) {
        return Err(NuisanceError::EmptyCell { arm: Arm(*arm), delta: *delta });
    }
    let mut rng = stream(seed, Substream::Folds, 0);
    let mut folds = vec![0; d.len()];
    let mut pos = 0;
    for rows in cells.values_mut() {
        rows.shuffle(&mut rng);
        for &i in rows.iter() {
            folds[i] = pos % k;
            pos += 1;
        }
    }
    Ok(CrossFitPlan { k, seed, folds })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensityMode {
    /// Fixed, covariate-independent arm probabilities.
    Known(Vec<(Arm, f64)>),
    Estimate,
}

impl PropensityMode {
    /// Two-arm shorthand: `p` for the larger arm code, `1 − p` for the other.
    pub fn known_binary(arms: &[Arm], p: f64) -> Result<Self, NuisanceError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(NuisanceError::InvalidPropensity(format!("probability {p} outside (0, 1)")));
        }
        match arms {
            [lo, hi] => Ok(Self::Known(vec![(*lo, 1.0 - p), (*hi, p)])),
            _ => Err(NuisanceError::InvalidPropensity(format!(
                "a single probability needs exactly two arms, found {}",
                arms.len()
            ))),
        }
    }

    fn validate(&self, arms: &[Arm]) -> Result<(), NuisanceError> {
        let Self::Known(values) = self else { return Ok(()) };
        for arm in arms {
            match values.iter().find(|(a, _)| a == arm) {
                Some((_, p)) if *p > 0.0 && *p <= 1.0 => {}
                Some((_, p)) => {
                    return Err(NuisanceError::InvalidPropensity(format!("arm {arm}: probability {p}")));
                }
                None => return Err(NuisanceError::InvalidPropensity(format!("no probability for arm {arm}"))),
            }
        }
        let total: f64 = values.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(NuisanceError::InvalidPropensity(format!("probabilities sum to {total}")));
        }
        Ok(())
    }
}

/// Probability floors: `π̂ ∈ [pi, 1 − pi]`, `ξ̂ ∈ [0, 1 − xi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipConfig {
    pub pi: f64,
    pub xi: f64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self { pi: 0.01, xi: 0.01 }
    }
}

/// Kernel settings for continuous treatments; `bandwidth: None` selects
/// Silverman's rule `1.06 σ̂_A n^(−1/5)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct DoseSmoothing {
    pub kernel: Kernel,
    pub bandwidth: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuisanceOptions {
    pub learner: LearnerSpec,
    pub propensity: PropensityMode,
    pub clip: ClipConfig,
    /// Tolerate arms without censored subjects (no `ν̂(1,·,a)`); only the
    /// conservative upper bound remains meaningful there.
    pub conservative_only: bool,
    pub smoothing: DoseSmoothing,
}

impl NuisanceOptions {
    pub fn new(learner: LearnerSpec, propensity: PropensityMode) -> Self {
        Self {
            learner,
            propensity,
            clip: ClipConfig::default(),
            conservative_only: false,
            smoothing: DoseSmoothing::default(),
        }
    }
}

/// Evaluated nuisances at one `(x, a)`. In continuous mode `pi` holds the
/// (unfloored) generalized propensity density `f̂(a | x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nuisances {
    pub nu0: f64,
    pub nu1: f64,
    pub xi: f64,
    pub pi: f64,
}

/// Anything that can report `(ν₀, ν₁, ξ, π)` on new covariate rows: fitted
/// nuisance sets, or the analytic oracles of a synthetic scenario.
pub trait NuisanceProvider: Sync {
    fn t_max(&self) -> f64;

    fn evaluate(&self, x: &Matrix, treatment: f64) -> Result<Vec<Nuisances>, NuisanceError>;
}

/// Silverman's rule of thumb for the dose kernel.
pub fn silverman_bandwidth(doses: &[f64]) -> f64 {
    let n = doses.len() as f64;
    if doses.len() < 2 {
        return 0.0;
    }
    let mean = doses.iter().sum::<f64>() / n;
    let var = doses.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
    1.06 * var.sqrt() * n.powf(-0.2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct DensityModel {
    forest: FittedRegressor,
    doses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct FoldModels {
    /// Indexed like `NuisanceSet::arms` (a single entry in continuous mode).
    nu0: Vec<FittedRegressor>,
    nu1: Vec<Option<FittedRegressor>>,
    xi: Vec<FittedClassifier>,
    pi: Option<FittedClassifier>,
    density: Option<DensityModel>,
}

/// Raw (unclipped) fold predictions for one row.
#[derive(Clone, Debug, Default)]
struct Raw {
    nu0: f64,
    nu1: f64,
    xi: f64,
    /// All-arm propensities (discrete) or a single density (continuous).
    pi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSet {
    mode: TreatmentMode,
    arms: Vec<Arm>,
    dim: usize,
    t_max: f64,
    plan: CrossFitPlan,
    options: NuisanceOptions,
    bandwidth: f64,
    models: Vec<FoldModels>,
}

fn role_seed(spec: &LearnerSpec, fold: usize, role: u64) -> LearnerSpec {
    spec.with_seed(derive_seed(spec.seed, Substream::Forest, ((fold as u64) << 32) | role))
}

fn with_leaf_members(spec: &LearnerSpec) -> LearnerSpec {
    match &spec.kind {
        LearnerKind::RandomForest(p) => {
            let mut p = p.clone();
            p.keep_leaf_members = true;
            LearnerSpec { kind: LearnerKind::RandomForest(p), seed: spec.seed }
        }
        _ => LearnerSpec::random_forest(spec.seed),
    }
}

/// Fits every nuisance model on each fold complement of `plan`.
pub fn fit_nuisances(d: &Dataset, plan: &CrossFitPlan, opts: &NuisanceOptions) -> Result<NuisanceSet, NuisanceError> {
    if plan.len() != d.len() {
        return Err(NuisanceError::PlanMismatch { plan: plan.len(), data: d.len() });
    }
    opts.learner.validate()?;
    let arms: Vec<Arm> = match d.mode() {
        TreatmentMode::Discrete => {
            opts.propensity.validate(d.arms())?;
            d.arms().to_vec()
        }
        TreatmentMode::Continuous => vec![Arm(0)],
    };
    let bandwidth = match d.mode() {
        TreatmentMode::Discrete => 0.0,
        TreatmentMode::Continuous => {
            let h = match opts.smoothing.bandwidth {
                Some(h) => h,
                None => {
                    let doses: Vec<f64> = d.subjects().iter().map(|s| s.treatment).collect();
                    let h = silverman_bandwidth(&doses);
                    if !(h > 0.0) {
                        return Err(NuisanceError::DegenerateDose);
                    }
                    h
                }
            };
            if !(h > 0.0) || !h.is_finite() {
                return Err(NuisanceError::BandwidthNonPositive(h));
            }
            h
        }
    };
    let x = d.covariates();
    let models =
        (0..plan.k()).into_par_iter().map(|f| fit_fold(d, &x, plan, f, &arms, opts)).collect::<Result<Vec<_>, _>>()?;
    Ok(NuisanceSet {
        mode: d.mode(),
        arms,
        dim: d.dim(),
        t_max: d.t_max(),
        plan: plan.clone(),
        options: opts.clone(),
        bandwidth,
        models,
    })
}

fn fit_fold(
    d: &Dataset,
    x: &Matrix,
    plan: &CrossFitPlan,
    f: usize,
    arms: &[Arm],
    opts: &NuisanceOptions,
) -> Result<FoldModels, NuisanceError> {
    let subjects = d.subjects();
    let train = plan.training_rows(f);
    let spec = &opts.learner;
    let continuous = d.mode() == TreatmentMode::Continuous;
    // continuous mode appends the dose as the last feature
    let features = |rows: &[usize]| -> Matrix {
        let m = x.select_rows(rows);
        if continuous {
            let doses: Vec<f64> = rows.iter().map(|&i| subjects[i].treatment).collect();
            m.with_column(&doses)
        } else {
            m
        }
    };

    let mut nu0 = Vec::with_capacity(arms.len());
    let mut nu1 = Vec::with_capacity(arms.len());
    let mut xi = Vec::with_capacity(arms.len());
    for (j, &arm) in arms.iter().enumerate() {
        let in_arm: Vec<usize> = train.iter().copied().filter(|&i| continuous || subjects[i].arm() == arm).collect();
        let stratum =
            |delta: bool| -> Vec<usize> { in_arm.iter().copied().filter(|&i| subjects[i].censored == delta).collect() };
        let role = 4 * j as u64;
        let rows0 = stratum(false);
        if rows0.is_empty() {
            return Err(NuisanceError::EmptyCell { arm, delta: 0 });
        }
        let t0: Vec<f64> = rows0.iter().map(|&i| subjects[i].time).collect();
        nu0.push(fit_regressor(&role_seed(spec, f, role), &features(&rows0), &t0)?);
        let rows1 = stratum(true);
        if rows1.is_empty() {
            if !opts.conservative_only {
                return Err(NuisanceError::EmptyCell { arm, delta: 1 });
            }
            nu1.push(None);
        } else {
            let t1: Vec<f64> = rows1.iter().map(|&i| subjects[i].time).collect();
            nu1.push(Some(fit_regressor(&role_seed(spec, f, role + 1), &features(&rows1), &t1)?));
        }
        let labels: Vec<u32> = in_arm.iter().map(|&i| u32::from(subjects[i].delta())).collect();
        xi.push(fit_classifier(&role_seed(spec, f, role + 2), &features(&in_arm), &labels)?);
    }

    let pi = match (&opts.propensity, continuous) {
        (PropensityMode::Estimate, false) => {
            let labels: Vec<u32> = train.iter().map(|&i| subjects[i].arm().0).collect();
            Some(fit_classifier(&role_seed(spec, f, 0xffff), &x.select_rows(&train), &labels)?)
        }
        _ => None,
    };
    let density = if continuous {
        let doses: Vec<f64> = train.iter().map(|&i| subjects[i].treatment).collect();
        let forest = fit_regressor(&role_seed(&with_leaf_members(spec), f, 0xfffe), &x.select_rows(&train), &doses)?;
        Some(DensityModel { forest, doses })
    } else {
        None
    };
    Ok(FoldModels { nu0, nu1, xi, pi, density })
}

/// Floors every probability at `eps` and rescales the excess so the vector
/// still sums to one.
pub fn clip_simplex(p: &[f64], eps: f64) -> Vec<f64> {
    if p.len() < 2 {
        return vec![1.0; p.len()];
    }
    let q: Vec<f64> = p.iter().map(|v| v.max(eps)).collect();
    let excess: f64 = q.iter().map(|v| v - eps).sum();
    let room = 1.0 - eps * p.len() as f64;
    if excess <= 0.0 {
        return vec![1.0 / p.len() as f64; p.len()];
    }
    q.iter().map(|v| eps + (v - eps) * room / excess).collect()
}

impl NuisanceSet {
    pub fn mode(&self) -> TreatmentMode {
        self.mode
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn plan(&self) -> &CrossFitPlan {
        &self.plan
    }

    pub fn options(&self) -> &NuisanceOptions {
        &self.options
    }

    pub fn clip(&self) -> ClipConfig {
        self.options.clip
    }

    /// Dose kernel and resolved bandwidth (continuous mode).
    pub fn smoothing(&self) -> (Kernel, f64) {
        (self.options.smoothing.kernel, self.bandwidth)
    }

    /// True when some fold lacks a `ν̂(1,·,a)` model for `arm`.
    pub fn missing_nu1(&self, arm: Arm) -> bool {
        self.arm_index(f64::from(arm.0)).map(|j| self.models.iter().any(|m| m.nu1[j].is_none())).unwrap_or(false)
    }

    fn arm_index(&self, treatment: f64) -> Result<usize, NuisanceError> {
        match self.mode {
            TreatmentMode::Continuous => Ok(0),
            TreatmentMode::Discrete => {
                self.arms.iter().position(|a| f64::from(a.0) == treatment).ok_or(NuisanceError::UnknownArm(treatment))
            }
        }
    }

    fn raw(&self, fold: usize, x: &Matrix, treatment: f64) -> Result<Vec<Raw>, NuisanceError> {
        let j = self.arm_index(treatment)?;
        let m = &self.models[fold];
        let feats = match self.mode {
            TreatmentMode::Discrete => x.clone(),
            TreatmentMode::Continuous => x.with_column(&vec![treatment; x.rows()]),
        };
        let nu0 = m.nu0[j].predict(&feats)?;
        let nu1 = match &m.nu1[j] {
            Some(r) => r.predict(&feats)?,
            None => vec![0.0; x.rows()],
        };
        let xi = m.xi[j].prob_of(&feats, 1)?;
        let pi: Vec<Vec<f64>> = match self.mode {
            TreatmentMode::Discrete => match (&m.pi, &self.options.propensity) {
                (Some(c), _) => {
                    let probs = c.predict_proba(x)?;
                    let cols: Vec<Option<usize>> =
                        self.arms.iter().map(|a| c.classes().iter().position(|&k| k == a.0)).collect();
                    (0..x.rows()).map(|i| cols.iter().map(|c| c.map_or(0.0, |k| probs.get(i, k))).collect()).collect()
                }
                (None, PropensityMode::Known(values)) => {
                    let row: Vec<f64> = self
                        .arms
                        .iter()
                        .map(|a| values.iter().find(|(b, _)| b == a).map_or(0.0, |(_, p)| *p))
                        .collect();
                    vec![row; x.rows()]
                }
                (None, PropensityMode::Estimate) => unreachable!("estimated propensity without a classifier"),
            },
            TreatmentMode::Continuous => {
                let dm = m.density.as_ref().expect("continuous fold has a density model");
                let (kernel, h) = self.smoothing();
                (0..x.rows())
                    .map(|i| {
                        let w = dm.forest.forest_weights(x.row(i)).expect("density forest keeps leaf members");
                        let f = w.iter().zip(&dm.doses).map(|(wi, ai)| wi * kernel.scaled(ai - treatment, h)).sum();
                        vec![f]
                    })
                    .collect()
            }
        };
        Ok((0..x.rows()).map(|i| Raw { nu0: nu0[i], nu1: nu1[i], xi: xi[i], pi: pi[i].clone() }).collect())
    }

    fn finish(&self, raw: &Raw, j: usize) -> Nuisances {
        let clip = self.options.clip;
        let pi = match self.mode {
            TreatmentMode::Discrete => clip_simplex(&raw.pi, clip.pi)[j],
            TreatmentMode::Continuous => raw.pi[0].max(0.0),
        };
        Nuisances {
            nu0: raw.nu0.clamp(0.0, self.t_max),
            nu1: raw.nu1.clamp(0.0, self.t_max),
            xi: raw.xi.clamp(0.0, 1.0 - clip.xi),
            pi,
        }
    }

    fn check_dim(&self, x: &Matrix) -> Result<(), NuisanceError> {
        if x.cols() != self.dim {
            return Err(NuisanceError::DimensionMismatch { expected: self.dim, got: x.cols() });
        }
        Ok(())
    }

    /// Nuisances from the models of a single fold (i.e. the ones trained
    /// without that fold's subjects).
    pub fn evaluate_fold(&self, x: &Matrix, treatment: f64, fold: usize) -> Result<Vec<Nuisances>, NuisanceError> {
        self.check_dim(x)?;
        if fold >= self.plan.k() {
            return Err(NuisanceError::FoldOutOfRange { fold, k: self.plan.k() });
        }
        let j = self.arm_index(treatment)?;
        Ok(self.raw(fold, x, treatment)?.iter().map(|r| self.finish(r, j)).collect())
    }

    /// Nuisances on new data: raw predictions averaged over all fold models,
    /// then clipped.
    pub fn evaluate_averaged(&self, x: &Matrix, treatment: f64) -> Result<Vec<Nuisances>, NuisanceError> {
        self.check_dim(x)?;
        let j = self.arm_index(treatment)?;
        let per_fold = (0..self.plan.k()).map(|f| self.raw(f, x, treatment)).collect::<Result<Vec<_>, _>>()?;
        let k = per_fold.len() as f64;
        Ok((0..x.rows())
            .map(|i| {
                let mut acc = Raw { pi: vec![0.0; per_fold[0][i].pi.len()], ..Raw::default() };
                for fold in &per_fold {
                    let r = &fold[i];
                    acc.nu0 += r.nu0 / k;
                    acc.nu1 += r.nu1 / k;
                    acc.xi += r.xi / k;
                    acc.pi.iter_mut().zip(&r.pi).for_each(|(a, v)| *a += v / k);
                }
                self.finish(&acc, j)
            })
            .collect())
    }

    /// Out-of-fold nuisances for every training subject: subject `i` is
    /// evaluated with the models of fold `plan.fold_of(i)`.
    pub fn out_of_fold(&self, d: &Dataset, treatment: f64) -> Result<Vec<Nuisances>, NuisanceError> {
        if d.len() != self.plan.len() {
            return Err(NuisanceError::PlanMismatch { plan: self.plan.len(), data: d.len() });
        }
        let x = d.covariates();
        self.check_dim(&x)?;
        let mut out = vec![Nuisances { nu0: 0.0, nu1: 0.0, xi: 0.0, pi: 0.0 }; d.len()];
        for f in 0..self.plan.k() {
            let rows: Vec<usize> = (0..d.len()).filter(|&i| self.plan.fold_of(i) == f).collect();
            if rows.is_empty() {
                continue;
            }
            let vals = self.evaluate_fold(&x.select_rows(&rows), treatment, f)?;
            for (&i, v) in rows.iter().zip(vals) {
                out[i] = v;
            }
        }
        Ok(out)
    }
}

impl NuisanceProvider for NuisanceSet {
    fn t_max(&self) -> f64 {
        self.t_max
    }

    fn evaluate(&self, x: &Matrix, treatment: f64) -> Result<Vec<Nuisances>, NuisanceError> {
        self.evaluate_averaged(x, treatment)
    }
}
