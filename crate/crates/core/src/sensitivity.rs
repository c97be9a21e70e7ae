//! Sensitivity inputs: the post-dropout function `γ(x, a)` and the
//! generalized marginal sensitivity model (GMSM) for hidden confounding.

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::BoundPair;
use crate::data::{Arm, Subject};

#[derive(Debug, Error)]
pub enum SensitivityError {
    #[error("gamma must be non-negative, got {0}")]
    NegativeGamma(f64),
    #[error("no gamma-table bin covers covariate value {value} for arm {arm}")]
    BinNotCovered { value: f64, arm: Arm },
    #[error("no gamma given for arm {0}")]
    UnknownArm(Arm),
    #[error("gamma table refers to covariate {index}, but x has {dim} entries")]
    CovariateOutOfRange { index: usize, dim: usize },
    #[error("conservative gamma needs an estimate of nu(1, x, a)")]
    MissingNu1,
    #[error("confounding strength must be >= 1, got {0}")]
    GammaBelowOne(f64),
    #[error("propensity must lie strictly inside (0, 1), got {0}")]
    InvalidPropensity(f64),
    #[error("sample is empty or has no positive weight")]
    DegenerateSample,
    #[error("cell has {0} subjects; at least 10 are required")]
    CellTooSmall(usize),
    #[error("gamma table: {0}")]
    Table(String),
    #[error("gamma table I/O: {0}")]
    Csv(#[from] csv::Error),
}

/// One row of a tabulated `γ`: applies to `arm` when the tabulated covariate
/// lies in `[bin_low, bin_high]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub arm: u32,
    pub gamma: f64,
}

/// The post-dropout function `γ(x, a)`, in months.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum SensitivitySpec {
    Constant {
        gamma: f64,
    },
    PerArm {
        values: Vec<(Arm, f64)>,
    },
    /// Bins over covariate `covariate`; the first matching bin wins.
    Table {
        covariate: usize,
        bins: Vec<GammaBin>,
    },
    /// `t_max − ν(1, x, a)`, floored at zero.
    Conservative,
}

impl SensitivitySpec {
    pub fn constant(gamma: f64) -> Self {
        Self::Constant { gamma }
    }

    pub fn validate(&self) -> Result<(), SensitivityError> {
        let check = |g: f64| if g >= 0.0 { Ok(()) } else { Err(SensitivityError::NegativeGamma(g)) };
        match self {
            Self::Constant { gamma } => check(*gamma),
            Self::PerArm { values } => values.iter().try_for_each(|(_, g)| check(*g)),
            Self::Table { bins, .. } => {
                for b in bins {
                    check(b.gamma)?;
                    if !(b.bin_low <= b.bin_high) {
                        return Err(SensitivityError::Table(format!("bin [{}, {}] is empty", b.bin_low, b.bin_high)));
                    }
                }
                Ok(())
            }
            Self::Conservative => Ok(()),
        }
    }
}

/// `γ(x, a)`. The conservative form needs `ν̂(1, x, a)`; values above
/// `t_max` floor the result at zero with a warning.
pub fn eval_gamma(
    spec: &SensitivitySpec,
    x: &[f64],
    arm: Arm,
    nu1: Option<f64>,
    t_max: f64,
) -> Result<f64, SensitivityError> {
    match spec {
        SensitivitySpec::Constant { gamma } => Ok(*gamma),
        SensitivitySpec::PerArm { values } => {
            values.iter().find(|(a, _)| *a == arm).map(|(_, g)| *g).ok_or(SensitivityError::UnknownArm(arm))
        }
        SensitivitySpec::Table { covariate, bins } => {
            let value =
                *x.get(*covariate).ok_or(SensitivityError::CovariateOutOfRange { index: *covariate, dim: x.len() })?;
            bins.iter()
                .find(|b| b.arm == arm.0 && b.bin_low <= value && value <= b.bin_high)
                .map(|b| b.gamma)
                .ok_or(SensitivityError::BinNotCovered { value, arm })
        }
        SensitivitySpec::Conservative => {
            let nu1 = nu1.ok_or(SensitivityError::MissingNu1)?;
            if nu1 > t_max {
                warn!("nu(1, x, a) = {nu1} exceeds t_max = {t_max}; conservative gamma floored at 0");
            }
            Ok((t_max - nu1).max(0.0))
        }
    }
}

/// Reads a `bin_low,bin_high,arm,gamma` table.
pub fn load_gamma_table(path: impl AsRef<Path>, covariate: usize) -> Result<SensitivitySpec, SensitivityError> {
    let mut reader = csv::Reader::from_path(path)?;
    let bins = reader.deserialize().collect::<Result<Vec<GammaBin>, _>>()?;
    if bins.is_empty() {
        return Err(SensitivityError::Table("no rows".into()));
    }
    let spec = SensitivitySpec::Table { covariate, bins };
    spec.validate()?;
    Ok(spec)
}

/// Confounding strength `Γ ≥ 1` of the GMSM; `Γ = 1` means none.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmsmSpec {
    pub gamma: f64,
}

/// Density ratio limits and the upper quantile cut of the GMSM.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmsmWeights {
    pub s_minus: f64,
    pub s_plus: f64,
    /// `None` when `Γ = 1` (`s⁻ = s⁺`, no shift).
    pub c_plus: Option<f64>,
}

impl GmsmWeights {
    pub fn is_degenerate(&self) -> bool {
        self.c_plus.is_none()
    }

    /// Lower quantile cut `c⁻ = (s⁺ − 1)s⁻/(s⁺ − s⁻)`.
    pub fn c_minus(&self) -> Option<f64> {
        self.c_plus.map(|_| (self.s_plus - 1.0) * self.s_minus / (self.s_plus - self.s_minus))
    }
}

/// `s⁻ = 1/((1−Γ)π + Γ)`, `s⁺ = 1/((1−Γ⁻¹)π + Γ⁻¹)`,
/// `c⁺ = (1 − s⁻)s⁺/(s⁺ − s⁻)`.
pub fn gmsm_weights(gamma: f64, pi: f64) -> Result<GmsmWeights, SensitivityError> {
    if !(gamma >= 1.0) {
        return Err(SensitivityError::GammaBelowOne(gamma));
    }
    if !(pi > 0.0 && pi < 1.0) {
        return Err(SensitivityError::InvalidPropensity(pi));
    }
    let s_minus = 1.0 / ((1.0 - gamma) * pi + gamma);
    let s_plus = 1.0 / ((1.0 - 1.0 / gamma) * pi + 1.0 / gamma);
    let c_plus = (s_plus > s_minus).then(|| (1.0 - s_minus) * s_plus / (s_plus - s_minus));
    Ok(GmsmWeights { s_minus, s_plus, c_plus })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftDirection {
    /// Stochastically largest member: mass moved above the `c⁺` quantile.
    Plus,
    /// Stochastically smallest member: mass moved below the `c⁻` quantile.
    Minus,
}

/// The shifted masses of a weighted sample, in the input order.
pub fn gmsm_shift_masses(
    values: &[f64],
    weights: &[f64],
    s_minus: f64,
    s_plus: f64,
    direction: ShiftDirection,
) -> Result<Vec<f64>, SensitivityError> {
    let total: f64 = weights.iter().sum();
    if values.is_empty() || values.len() != weights.len() || weights.iter().any(|w| !(*w >= 0.0)) || !(total > 0.0) {
        return Err(SensitivityError::DegenerateSample);
    }
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    if !(s_plus > s_minus) {
        return Ok(probs);
    }
    let (cut, below, above) = match direction {
        ShiftDirection::Plus => ((1.0 - s_minus) * s_plus / (s_plus - s_minus), 1.0 / s_plus, 1.0 / s_minus),
        ShiftDirection::Minus => ((s_plus - 1.0) * s_minus / (s_plus - s_minus), 1.0 / s_minus, 1.0 / s_plus),
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut masses = vec![0.0; values.len()];
    let mut cdf = 0.0;
    for i in order {
        let p = probs[i];
        // a straddling atom is split at the cut
        let under = (cut - cdf).clamp(0.0, p);
        masses[i] = under * below + (p - under) * above;
        cdf += p;
    }
    Ok(masses)
}

/// Expectation of the weighted sample under the shifted distribution.
pub fn gmsm_shift_expectation(
    values: &[f64],
    weights: &[f64],
    s_minus: f64,
    s_plus: f64,
    direction: ShiftDirection,
) -> Result<f64, SensitivityError> {
    let masses = gmsm_shift_masses(values, weights, s_minus, s_plus, direction)?;
    Ok(values.iter().zip(&masses).map(|(v, m)| v * m).sum())
}

/// Plug-in bounds of one covariate cell and their GMSM widening.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmsmCell {
    pub n: usize,
    pub plugin: BoundPair,
    pub widened: BoundPair,
}

/// Per-subject bound ingredients of a cell: the observed time for the
/// lower bound, and the observed time plus the post-dropout allowance
/// (`γ` or `t_max − T̃` for censored subjects) for the upper bound. Their
/// cell means are the plug-in CAPO bounds of the cell.
pub fn cell_ingredients(subjects: &[&Subject], upper: CellUpper) -> (Vec<f64>, Vec<f64>) {
    let lower: Vec<f64> = subjects.iter().map(|s| s.time).collect();
    let up = subjects
        .iter()
        .map(|s| match (upper, s.censored) {
            (_, false) => s.time,
            (CellUpper::Domain { gamma }, true) => s.time + gamma,
            (CellUpper::Conservative { t_max }, true) => t_max,
        })
        .collect();
    (lower, up)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum CellUpper {
    Domain { gamma: f64 },
    Conservative { t_max: f64 },
}

/// Widens a cell's plug-in CAPO bounds: the minus shift is applied to the
/// lower-bound ingredients and the plus shift to the upper-bound ones. The
/// shift acts on the marginal of the observed time within the cell.
pub fn gmsm_bound_adjustment(
    lower_values: &[f64],
    upper_values: &[f64],
    pi: f64,
    spec: GmsmSpec,
) -> Result<GmsmCell, SensitivityError> {
    let n = lower_values.len();
    if n < 10 || upper_values.len() != n {
        return Err(SensitivityError::CellTooSmall(n.min(upper_values.len())));
    }
    let w = gmsm_weights(spec.gamma, pi)?;
    let ones = vec![1.0; n];
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let plugin = BoundPair { lower: mean(lower_values), upper: mean(upper_values) };
    if w.is_degenerate() {
        return Ok(GmsmCell { n, plugin, widened: plugin });
    }
    let lower = gmsm_shift_expectation(lower_values, &ones, w.s_minus, w.s_plus, ShiftDirection::Minus)?;
    let upper = gmsm_shift_expectation(upper_values, &ones, w.s_minus, w.s_plus, ShiftDirection::Plus)?;
    // guard against rounding pulling the widened pair inside the plug-in one
    let widened = BoundPair { lower: lower.min(plugin.lower), upper: upper.max(plugin.upper) };
    Ok(GmsmCell { n, plugin, widened })
}
