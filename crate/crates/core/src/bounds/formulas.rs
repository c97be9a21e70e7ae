//! Closed-form CAPO and CATE bounds in terms of the nuisance functions.

use super::{BoundPair, BoundsError};

/// `μ⁻ = ν₀(1 − ξ) + ν₁ξ`, i.e. `E[T̃ | x, a]`.
pub fn capo_lower(nu0: f64, nu1: f64, xi: f64) -> f64 {
    nu0 * (1.0 - xi) + nu1 * xi
}

/// Domain-knowledge upper bound `μ⁻ + γξ` without the validity check.
pub fn capo_upper_domain_value(nu0: f64, nu1: f64, xi: f64, gamma: f64) -> f64 {
    capo_lower(nu0, nu1, xi) + gamma * xi
}

/// Domain-knowledge upper bound `ν₀(1 − ξ) + ν₁ξ + γξ`.
///
/// Fails when `γ < 0` or `γ + ν₁ > t_max`: no survival time after dropout
/// can exceed the support.
pub fn capo_upper_domain(nu0: f64, nu1: f64, xi: f64, gamma: f64, t_max: f64) -> Result<f64, BoundsError> {
    if gamma < 0.0 || gamma + nu1 > t_max * (1.0 + 1e-12) {
        return Err(BoundsError::GammaOutOfRange { gamma, nu1, t_max });
    }
    Ok(capo_upper_domain_value(nu0, nu1, xi, gamma))
}

/// Conservative upper bound `ν₀(1 − ξ) + t_max·ξ`.
pub fn capo_upper_conservative(nu0: f64, xi: f64, t_max: f64) -> f64 {
    nu0 * (1.0 - xi) + t_max * xi
}

/// CATE bounds for `a₁` versus `a₂`: `[μ⁻(a₁) − μ⁺(a₂), μ⁺(a₁) − μ⁻(a₂)]`.
pub fn cate_bounds(a1: BoundPair, a2: BoundPair) -> BoundPair {
    BoundPair { lower: a1.lower - a2.upper, upper: a1.upper - a2.lower }
}

pub fn bound_width(pair: BoundPair) -> f64 {
    pair.upper - pair.lower
}
