//! Partial-identification bounds on CAPOs and CATEs.
//!
//! [`formulas`] holds the closed-form bounds, [`pseudo`] and [`continuous`]
//! the debiased pseudo-outcomes, and [`learners`] the plug-in and two-stage
//! SurvB learners built on top of them.

pub mod continuous;
pub mod formulas;
pub mod learners;
pub mod pseudo;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Arm;
use crate::models::ModelError;
use crate::nuisance::NuisanceError;
use crate::sensitivity::SensitivityError;

pub use continuous::{pseudo_continuous, ContinuousPseudo, Kernel, DENSITY_FLOOR};
pub use formulas::{
    bound_width, capo_lower, capo_upper_conservative, capo_upper_domain, capo_upper_domain_value, cate_bounds,
};
pub use learners::{
    fit_composed_cate, fit_plugin, fit_second_stage, fit_survb, pseudo_outcomes, BoundCase, BoundModel, BoundPredictor,
    ComposedCateModel, PluginModel, Prediction, Provenance, PseudoTable, SurvbModel, Target,
};
pub use pseudo::{
    pseudo_cate, pseudo_lower, pseudo_outcome, pseudo_upper_conservative, pseudo_upper_domain, ArmInput,
    PseudoOutcomeCase,
};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("gamma = {gamma} with nu1 = {nu1} leaves the support [0, {t_max}]")]
    GammaOutOfRange { gamma: f64, nu1: f64, t_max: f64 },
    #[error("CATE arms must differ, both are {0}")]
    ArmsNotDistinct(Arm),
    #[error("bandwidth must be positive, got {0}")]
    BandwidthNonPositive(f64),
    #[error("target does not match the data: {0}")]
    TargetMismatch(String),
    #[error(transparent)]
    Nuisance(#[from] NuisanceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
}

/// A `[lower, upper]` interval in months (CAPO) or month differences (CATE).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub lower: f64,
    pub upper: f64,
}

impl BoundPair {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    /// True when `other ⊆ self`.
    pub fn contains(&self, other: &BoundPair) -> bool {
        self.lower <= other.lower && other.upper <= self.upper
    }
}

/// Crossing policy: clamp both ends to `[lo, hi]`, then collapse a crossed
/// pair to its midpoint. Returns the repaired pair and whether it crossed.
pub fn repair(lower: f64, upper: f64, lo: f64, hi: f64) -> (BoundPair, bool) {
    let l = lower.clamp(lo, hi);
    let u = upper.clamp(lo, hi);
    if l > u {
        let m = 0.5 * (l + u);
        (BoundPair::new(m, m), true)
    } else {
        (BoundPair::new(l, u), false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repair_policy() {
        assert_eq!(repair(1.0, 2.0, 0.0, 10.0), (BoundPair::new(1.0, 2.0), false));
        assert_eq!(repair(-1.0, 12.0, 0.0, 10.0), (BoundPair::new(0.0, 10.0), false));
        assert_eq!(repair(5.0, 3.0, 0.0, 10.0), (BoundPair::new(4.0, 4.0), true));
    }
}
