//! Kernel-smoothed pseudo-outcomes for a continuous dose.

use serde::{Deserialize, Serialize};

use super::pseudo::{weighted, PseudoOutcomeCase};
use super::BoundsError;
use crate::data::Subject;
use crate::nuisance::Nuisances;

/// Floor applied to the generalized propensity density `f̂(a | x)`.
pub const DENSITY_FLOOR: f64 = 1e-3;

/// Second-order symmetric kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Gaussian,
    Epanechnikov,
}

impl Kernel {
    /// `k(u)`.
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            Kernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }

    /// `K_h(t) = k(t/h)/h`.
    pub fn scaled(self, t: f64, h: f64) -> f64 {
        self.eval(t / h) / h
    }
}

/// A pseudo-outcome at a dose, plus whether the density floor was applied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinuousPseudo {
    pub value: f64,
    pub floor_hit: bool,
}

/// Continuous-dose pseudo-outcome: every `1(A=a)/π̂` becomes
/// `K_h(A − a)/f̂(a | x)`, where `n.pi` carries `f̂(a | x)`. Densities
/// below [`DENSITY_FLOOR`] are raised to it and reported.
pub fn pseudo_continuous(
    s: &Subject,
    dose: f64,
    n: &Nuisances,
    kernel: Kernel,
    h: f64,
    case: PseudoOutcomeCase,
) -> Result<ContinuousPseudo, BoundsError> {
    if !(h > 0.0) {
        return Err(BoundsError::BandwidthNonPositive(h));
    }
    let floor_hit = n.pi < DENSITY_FLOOR;
    let density = n.pi.max(DENSITY_FLOOR);
    let w = kernel.scaled(s.treatment - dose, h) / density;
    Ok(ContinuousPseudo { value: weighted(w, s.censored, s.time, n, case), floor_hit })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subject(dose: f64) -> Subject {
        Subject { id: "s".into(), x: vec![], treatment: dose, time: 12.0, censored: false }
    }

    const N: Nuisances = Nuisances { nu0: 10.0, nu1: 5.0, xi: 0.4, pi: 1.0 };

    #[test]
    fn kernel_values() {
        assert!((Kernel::Gaussian.scaled(0.0, 2.0) - 0.398_942_280_401_432_7 / 2.0).abs() < 1e-15);
        assert!(Kernel::Gaussian.scaled(6.0 * 0.5, 0.5) < 2e-8 / 0.5);
        assert_eq!(Kernel::Epanechnikov.eval(1.5), 0.0);
        assert_eq!(Kernel::Epanechnikov.eval(0.0), 0.75);
    }

    #[test]
    fn far_doses_collapse_to_the_plugin_value() {
        let v = pseudo_continuous(&subject(8.0), 5.0, &N, Kernel::Gaussian, 0.5, PseudoOutcomeCase::Lower).unwrap();
        assert!((v.value - 8.0).abs() < 1e-6);
        assert!(!v.floor_hit);
    }

    #[test]
    fn exact_dose_uses_the_kernel_peak() {
        let h = 0.5;
        let v = pseudo_continuous(&subject(5.0), 5.0, &N, Kernel::Gaussian, h, PseudoOutcomeCase::Lower).unwrap();
        let w = 0.398_942_280_401_432_7 / h;
        let expected = w * (12.0 - 10.0) + 10.0 * w * (1.0 - 0.6) + 6.0 + 5.0 * w * (0.0 - 0.4) + 2.0;
        assert!((v.value - expected).abs() < 1e-9);
    }

    #[test]
    fn errors_and_floor() {
        let s = subject(5.0);
        assert!(matches!(
            pseudo_continuous(&s, 5.0, &N, Kernel::Gaussian, 0.0, PseudoOutcomeCase::Lower),
            Err(BoundsError::BandwidthNonPositive(_))
        ));
        let thin = Nuisances { pi: 1e-6, ..N };
        let v = pseudo_continuous(&s, 5.0, &thin, Kernel::Gaussian, 1.0, PseudoOutcomeCase::Lower).unwrap();
        assert!(v.floor_hit && v.value.is_finite());
    }
}
