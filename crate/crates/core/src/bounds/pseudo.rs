//! Debiased pseudo-outcomes whose conditional means are the CAPO / CATE
//! bounds.
//!
//! Every formula is written in terms of a treatment weight `w`: `1(A=a)/π`
//! for discrete arms, `K_h(A − a)/f̂(a | x)` for a continuous dose.

use serde::{Deserialize, Serialize};

use super::BoundsError;
use crate::data::{Arm, Subject};
use crate::nuisance::Nuisances;

/// Which bound a single pseudo-outcome targets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum PseudoOutcomeCase {
    Lower,
    UpperDomain { gamma: f64 },
    UpperConservative { t_max: f64 },
}

pub(crate) fn weighted(w: f64, censored: bool, time: f64, n: &Nuisances, case: PseudoOutcomeCase) -> f64 {
    let d1 = f64::from(u8::from(censored));
    let d0 = 1.0 - d1;
    let (nu0, nu1, xi) = (n.nu0, n.nu1, n.xi);
    let uncensored_part = w * d0 * (time - nu0) + nu0 * w * (d0 - (1.0 - xi)) + nu0 * (1.0 - xi);
    let lower = || uncensored_part + w * d1 * (time - nu1) + nu1 * w * (d1 - xi) + nu1 * xi;
    match case {
        PseudoOutcomeCase::Lower => lower(),
        PseudoOutcomeCase::UpperDomain { gamma } => lower() + gamma * w * (d1 - xi) + gamma * xi,
        PseudoOutcomeCase::UpperConservative { t_max } => uncensored_part + t_max * w * (d1 - xi) + t_max * xi,
    }
}

fn arm_weight(s: &Subject, arm: Arm, pi: f64) -> f64 {
    if s.arm() == arm {
        1.0 / pi
    } else {
        0.0
    }
}

/// Pseudo-outcome for any case at a discrete arm.
pub fn pseudo_outcome(s: &Subject, n: &Nuisances, arm: Arm, case: PseudoOutcomeCase) -> f64 {
    weighted(arm_weight(s, arm, n.pi), s.censored, s.time, n, case)
}

/// Six-term pseudo-outcome for the lower CAPO bound.
pub fn pseudo_lower(s: &Subject, n: &Nuisances, arm: Arm) -> f64 {
    pseudo_outcome(s, n, arm, PseudoOutcomeCase::Lower)
}

/// Lower pseudo-outcome plus `γ·1(A=a)/π·(1(Δ=1) − ξ) + γξ`.
pub fn pseudo_upper_domain(s: &Subject, n: &Nuisances, arm: Arm, gamma: f64) -> f64 {
    pseudo_outcome(s, n, arm, PseudoOutcomeCase::UpperDomain { gamma })
}

/// Five-term pseudo-outcome for the conservative upper bound.
pub fn pseudo_upper_conservative(s: &Subject, n: &Nuisances, arm: Arm, t_max: f64) -> f64 {
    pseudo_outcome(s, n, arm, PseudoOutcomeCase::UpperConservative { t_max })
}

/// Nuisances and upper-bound case for one arm of a CATE contrast.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArmInput {
    pub arm: Arm,
    pub nuisances: Nuisances,
    /// Must be one of the two upper cases.
    pub upper: PseudoOutcomeCase,
}

/// CATE pseudo-outcomes `(φ⁻, φ⁺)` for `a₁` versus `a₂`:
/// `φ⁻ = φ⁻(a₁) − φ⁺(a₂)` and `φ⁺ = φ⁺(a₁) − φ⁻(a₂)`.
pub fn pseudo_cate(s: &Subject, a1: &ArmInput, a2: &ArmInput) -> Result<(f64, f64), BoundsError> {
    if a1.arm == a2.arm {
        return Err(BoundsError::ArmsNotDistinct(a1.arm));
    }
    let lo1 = pseudo_lower(s, &a1.nuisances, a1.arm);
    let up1 = pseudo_outcome(s, &a1.nuisances, a1.arm, a1.upper);
    let lo2 = pseudo_lower(s, &a2.nuisances, a2.arm);
    let up2 = pseudo_outcome(s, &a2.nuisances, a2.arm, a2.upper);
    Ok((lo1 - up2, up1 - lo2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subject(arm: u32, censored: bool, time: f64) -> Subject {
        Subject { id: "s".into(), x: vec![], treatment: f64::from(arm), time, censored }
    }

    const N: Nuisances = Nuisances { nu0: 10.0, nu1: 5.0, xi: 0.4, pi: 0.5 };

    #[test]
    fn off_arm_collapse() {
        let s = subject(0, true, 3.0);
        assert_eq!(pseudo_lower(&s, &N, Arm(1)), 10.0 * 0.6 + 5.0 * 0.4);
        assert_eq!(pseudo_upper_domain(&s, &N, Arm(1), 3.0), 10.0 * 0.6 + 5.0 * 0.4 + 3.0 * 0.4);
        assert_eq!(pseudo_upper_conservative(&s, &N, Arm(1), 30.0), 10.0 * 0.6 + 30.0 * 0.4);
    }

    #[test]
    fn hand_evaluated_examples() {
        let s = subject(1, false, 12.0);
        assert!((pseudo_lower(&s, &N, Arm(1)) - 16.0).abs() < 1e-12);
        assert!((pseudo_upper_domain(&s, &N, Arm(1), 3.0) - 14.8).abs() < 1e-12);
        assert_eq!(pseudo_upper_domain(&s, &N, Arm(1), 0.0), pseudo_lower(&s, &N, Arm(1)));
        // 0 + 10·2·(0 − 0.6) + 6 + 30·2·(1 − 0.4) + 12
        let c = subject(1, true, 12.0);
        assert!((pseudo_upper_conservative(&c, &N, Arm(1), 30.0) - 42.0).abs() < 1e-12);
    }

    #[test]
    fn cate_requires_distinct_arms() {
        let s = subject(1, false, 12.0);
        let a = ArmInput { arm: Arm(1), nuisances: N, upper: PseudoOutcomeCase::UpperDomain { gamma: 3.0 } };
        assert!(matches!(pseudo_cate(&s, &a, &a), Err(BoundsError::ArmsNotDistinct(Arm(1)))));
    }

    #[test]
    fn cate_off_both_arms_is_the_plugin_contrast() {
        let s = subject(2, false, 12.0);
        let n2 = Nuisances { nu0: 8.0, nu1: 4.0, xi: 0.2, pi: 0.3 };
        let a1 = ArmInput { arm: Arm(1), nuisances: N, upper: PseudoOutcomeCase::UpperConservative { t_max: 30.0 } };
        let a2 = ArmInput { arm: Arm(0), nuisances: n2, upper: PseudoOutcomeCase::UpperConservative { t_max: 30.0 } };
        let (lo, up) = pseudo_cate(&s, &a1, &a2).unwrap();
        assert!((lo - ((10.0 * 0.6 + 5.0 * 0.4) - (8.0 * 0.8 + 30.0 * 0.2))).abs() < 1e-12);
        assert!((up - ((10.0 * 0.6 + 30.0 * 0.4) - (8.0 * 0.8 + 4.0 * 0.2))).abs() < 1e-12);
    }
}
