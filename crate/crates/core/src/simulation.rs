//! Synthetic censored-survival benchmarks with analytic oracles.
//!
//! Covariate `X ~ U[10, 100]`; survival `T = τ(x)·a + b(x) + noise` with the
//! shared baseline `b(x) = (sin 12x + x)/3 + cos(20x)/60`; censoring
//! indicator `Δ ~ Bernoulli(p(x, a))` drawn independently of `T`; censored
//! subjects report `λT` with `λ ~ U(0.7, 0.95)`. Because `Δ ⫫ T | x, a`, the
//! oracle nuisances are `ν₀ = μ(x, a)` and `ν₁ = E[λ]·μ(x, a) = 0.825·μ(x, a)`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use log::info;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{
    capo_lower, capo_upper_conservative, capo_upper_domain_value, cate_bounds, BoundCase, BoundPair, BoundsError,
    Target,
};
use crate::data::{Arm, DataError, Dataset, Subject, TreatmentMode};
use crate::models::Matrix;
use crate::nuisance::{NuisanceError, NuisanceProvider, Nuisances};
use crate::rng::{stream, Substream};
use crate::sensitivity::eval_gamma;

pub const X_LOW: f64 = 10.0;
pub const X_HIGH: f64 = 100.0;
pub const LAMBDA_LOW: f64 = 0.7;
pub const LAMBDA_HIGH: f64 = 0.95;
pub const LAMBDA_MEAN: f64 = 0.5 * (LAMBDA_LOW + LAMBDA_HIGH);
pub const DEFAULT_NOISE_SD: f64 = 0.1;
/// Sample size used per setting in the reference benchmark.
pub const DEFAULT_N: usize = 2000;
const P_CLIP: (f64, f64) = (0.001, 0.999);

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("xi_target must lie in (0, 1), got {0}")]
    InvalidXiTarget(f64),
    #[error("sample size must be at least 1")]
    EmptySample,
    #[error("unknown scenario family `{0}` (expected exp, sin, logsin or planted)")]
    UnknownFamily(String),
    #[error("unknown design `{0}` (expected rct or obs)")]
    UnknownDesign(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Treatment-effect family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `τ = 20·exp(1 + 0.01x)`.
    Exponential,
    /// `τ = 10·(sin(2π(x − 10)/90) + 1.2) + x`.
    Sin,
    /// `τ = 30/(1 + exp(−0.1(x − 50))) + 5 sin(0.2x) + 10`.
    LogisticSin,
    /// `τ = 40·1(x > 70)`: a subgroup with a clear benefit.
    Planted,
}

impl Family {
    pub const PAPER: [Family; 3] = [Family::Exponential, Family::Sin, Family::LogisticSin];

    /// Treated-arm uplift `τ(x)`.
    pub fn tau(self, x: f64) -> f64 {
        match self {
            Family::Exponential => 20.0 * (1.0 + 0.01 * x).exp(),
            Family::Sin => ((x - 10.0) / 90.0 * 2.0 * std::f64::consts::PI).sin().mul_add(10.0, 12.0) + x,
            Family::LogisticSin => 30.0 / (1.0 + (-0.1 * (x - 50.0)).exp()) + 5.0 * (0.2 * x).sin() + 10.0,
            Family::Planted => {
                if x > 70.0 {
                    40.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Exponential => "exp",
            Family::Sin => "sin",
            Family::LogisticSin => "logsin",
            Family::Planted => "planted",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = SimulationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exp" | "exponential" => Ok(Family::Exponential),
            "sin" => Ok(Family::Sin),
            "logsin" | "logistic_sin" => Ok(Family::LogisticSin),
            "planted" => Ok(Family::Planted),
            other => Err(SimulationError::UnknownFamily(other.into())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// `P(A = 1 | x) = 0.5`.
    Rct,
    /// `P(A = 1 | x) = σ((x − 45)/45)`.
    Observational,
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Design::Rct => "rct",
            Design::Observational => "obs",
        })
    }
}

impl FromStr for Design {
    type Err = SimulationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rct" => Ok(Design::Rct),
            "obs" | "observational" => Ok(Design::Observational),
            other => Err(SimulationError::UnknownDesign(other.into())),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Shared baseline `b(x)`.
pub fn baseline(x: f64) -> f64 {
    ((12.0 * x).sin() + x) / 3.0 + (20.0 * x).cos() / 60.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub family: Family,
    pub design: Design,
    /// Target overall censoring probability, enters as `logit(ξ)`.
    pub xi_target: f64,
    pub n: usize,
    pub seed: u64,
    pub noise_sd: f64,
}

impl Scenario {
    pub fn new(family: Family, design: Design, xi_target: f64, n: usize, seed: u64) -> Self {
        Self { family, design, xi_target, n, seed, noise_sd: DEFAULT_NOISE_SD }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        if !(self.xi_target > 0.0 && self.xi_target < 1.0) {
            return Err(SimulationError::InvalidXiTarget(self.xi_target));
        }
        if self.n == 0 {
            return Err(SimulationError::EmptySample);
        }
        Ok(())
    }

    /// Expected survival `μ(x, a) = τ(x)·a + b(x)`.
    pub fn mu(&self, x: f64, arm: Arm) -> f64 {
        let a = f64::from(arm.0.min(1));
        self.family.tau(x) * a + baseline(x)
    }

    /// `P(A = 1 | x)`.
    pub fn propensity(&self, x: f64) -> f64 {
        match self.design {
            Design::Rct => 0.5,
            Design::Observational => sigmoid((x - 45.0) / 45.0),
        }
    }

    pub fn propensity_of(&self, x: f64, arm: Arm) -> f64 {
        let p = self.propensity(x);
        if arm.0 == 1 {
            p
        } else {
            1.0 - p
        }
    }

    fn censor_prob_raw(&self, x: f64, arm: Arm) -> f64 {
        let a = f64::from(arm.0.min(1));
        let bias = (self.xi_target / (1.0 - self.xi_target)).ln();
        sigmoid((x - 45.0) / 45.0 + bias) + 0.05 * a - 0.05 * (1.0 - a)
    }

    /// Censoring strength `ξ(x, a)`, clipped to `[0.001, 0.999]`.
    pub fn censor_prob(&self, x: f64, arm: Arm) -> f64 {
        self.censor_prob_raw(x, arm).clamp(P_CLIP.0, P_CLIP.1)
    }

    /// Standard deviation of `T` given `(x, a)`: one noise term, plus the
    /// one carried by `τ` when treated.
    pub fn time_sd(&self, arm: Arm) -> f64 {
        self.noise_sd * (1.0 + f64::from(arm.0.min(1))).sqrt()
    }

    /// Support bound: 110% of the largest 99.9% quantile of `T` over `x`.
    /// Depends on the family and noise level only; memoised per process.
    pub fn t_max(&self) -> f64 {
        static CACHE: OnceLock<Mutex<HashMap<(Family, u64), f64>>> = OnceLock::new();
        let key = (self.family, self.noise_sd.to_bits());
        let cache = CACHE.get_or_init(Default::default);
        if let Some(&t) = cache.lock().expect("t_max cache poisoned").get(&key) {
            return t;
        }
        let z999 = 3.090_232_306_167_813;
        let grid = 10_001;
        let mut hi = f64::MIN;
        for i in 0..grid {
            let x = X_LOW + (X_HIGH - X_LOW) * i as f64 / (grid - 1) as f64;
            for arm in [Arm(0), Arm(1)] {
                hi = hi.max(self.mu(x, arm) + z999 * self.time_sd(arm));
            }
        }
        let t = 1.1 * hi;
        cache.lock().expect("t_max cache poisoned").insert(key, t);
        t
    }

    pub fn true_cate(&self, x: f64) -> f64 {
        self.mu(x, Arm(1)) - self.mu(x, Arm(0))
    }

    /// Average of `ξ(x, a)` over `x` and the design's treatment mix.
    pub fn mean_censoring(&self) -> f64 {
        let grid = 20_000;
        (0..grid)
            .map(|i| {
                let x = X_LOW + (X_HIGH - X_LOW) * (i as f64 + 0.5) / grid as f64;
                let p = self.propensity(x);
                p * self.censor_prob(x, Arm(1)) + (1.0 - p) * self.censor_prob(x, Arm(0))
            })
            .sum::<f64>()
            / grid as f64
    }
}

/// Ground truth retained for every simulated subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentRow {
    pub id: String,
    pub x: f64,
    pub arm: u32,
    pub t_true: f64,
    /// Censoring time; only defined for censored subjects.
    pub c: Option<f64>,
    pub censor_prob: f64,
}

/// Draws a dataset and its latent table.
pub fn generate(s: &Scenario) -> Result<(Dataset, Vec<LatentRow>), SimulationError> {
    s.validate()?;
    let mut rng = stream(s.seed, Substream::Simulate, 0);
    let noise = Normal::new(0.0, s.noise_sd).expect("finite noise sd");
    let mut subjects = Vec::with_capacity(s.n);
    let mut latent = Vec::with_capacity(s.n);
    let mut clipped = 0usize;
    for i in 0..s.n {
        let x = rng.random_range(X_LOW..X_HIGH);
        let arm = Arm(u32::from(rng.random::<f64>() < s.propensity(x)));
        let a = f64::from(arm.0);
        let e_tau: f64 = noise.sample(&mut rng);
        let e_t: f64 = noise.sample(&mut rng);
        let t = (s.family.tau(x) + e_tau) * a + baseline(x) + e_t;
        let raw = s.censor_prob_raw(x, arm);
        clipped += usize::from(!(P_CLIP.0..=P_CLIP.1).contains(&raw));
        let p = raw.clamp(P_CLIP.0, P_CLIP.1);
        let censored = rng.random::<f64>() < p;
        let lambda = rng.random_range(LAMBDA_LOW..LAMBDA_HIGH);
        let c = censored.then_some(lambda * t);
        let id = i.to_string();
        subjects.push(Subject { id: id.clone(), x: vec![x], treatment: a, time: c.unwrap_or(t), censored });
        latent.push(LatentRow { id, x, arm: arm.0, t_true: t, c, censor_prob: p });
    }
    if clipped > 0 {
        info!("censoring probability clipped for {clipped} of {} subjects", s.n);
    }
    let d = Dataset::new(subjects, vec!["x".into()], Some(s.t_max()), TreatmentMode::Discrete)?;
    Ok((d, latent))
}

/// True `(ν₀, ν₁, ξ, π)` at `(x, a)`.
pub fn oracle_nuisances(s: &Scenario, x: f64, arm: Arm) -> Nuisances {
    let mu = s.mu(x, arm);
    Nuisances { nu0: mu, nu1: LAMBDA_MEAN * mu, xi: s.censor_prob(x, arm), pi: s.propensity_of(x, arm) }
}

/// Closed-form bounds at the oracle nuisances.
pub fn oracle_bounds(s: &Scenario, x: f64, target: Target, case: &BoundCase) -> Result<BoundPair, BoundsError> {
    let t_max = s.t_max();
    let capo = |arm: Arm| -> Result<BoundPair, BoundsError> {
        let n = oracle_nuisances(s, x, arm);
        let lower = capo_lower(n.nu0, n.nu1, n.xi);
        let upper = match case {
            BoundCase::Domain { gamma } => {
                capo_upper_domain_value(n.nu0, n.nu1, n.xi, eval_gamma(gamma, &[x], arm, Some(n.nu1), t_max)?)
            }
            BoundCase::Conservative => capo_upper_conservative(n.nu0, n.xi, t_max),
        };
        Ok(BoundPair::new(lower, upper))
    };
    match target {
        Target::Arm { arm } => capo(arm),
        Target::Pair { treated, control } => Ok(cate_bounds(capo(treated)?, capo(control)?)),
        Target::Dose { .. } => Err(BoundsError::TargetMismatch("dose target on a discrete scenario".into())),
    }
}

/// `n` equally spaced points spanning the covariate support.
pub fn x_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (X_LOW + X_HIGH)],
        _ => (0..n).map(|i| X_LOW + (X_HIGH - X_LOW) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// The scenario's analytic nuisances as a provider, optionally with a fixed
/// propensity in place of the true one.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleNuisances {
    pub scenario: Scenario,
    t_max: f64,
    pub propensity: Option<f64>,
}

impl OracleNuisances {
    pub fn new(scenario: &Scenario) -> Self {
        Self { t_max: scenario.t_max(), scenario: scenario.clone(), propensity: None }
    }
}

impl NuisanceProvider for OracleNuisances {
    fn t_max(&self) -> f64 {
        self.t_max
    }

    fn evaluate(&self, x: &Matrix, treatment: f64) -> Result<Vec<Nuisances>, NuisanceError> {
        if x.cols() != 1 {
            return Err(NuisanceError::DimensionMismatch { expected: 1, got: x.cols() });
        }
        if treatment != 0.0 && treatment != 1.0 {
            return Err(NuisanceError::UnknownArm(treatment));
        }
        let arm = Arm(treatment as u32);
        Ok((0..x.rows())
            .map(|i| {
                let mut n = oracle_nuisances(&self.scenario, x.get(i, 0), arm);
                if let Some(p) = self.propensity {
                    n.pi = p;
                }
                n
            })
            .collect())
    }
}

/// Continuous-dose benchmark: `A | x ~ N(2 + 2(x − 10)/90, 1)`,
/// `μ(x, a) = b(x) + 2a²`, censoring `σ((x − 45)/45 + logit ξ + 0.1(a − 3))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoseScenario {
    pub xi_target: f64,
    pub n: usize,
    pub seed: u64,
    pub noise_sd: f64,
}

impl DoseScenario {
    pub const DOSE_SD: f64 = 1.0;

    pub fn new(xi_target: f64, n: usize, seed: u64) -> Self {
        Self { xi_target, n, seed, noise_sd: DEFAULT_NOISE_SD }
    }

    pub fn dose_mean(&self, x: f64) -> f64 {
        2.0 + 2.0 * (x - X_LOW) / (X_HIGH - X_LOW)
    }

    /// Generalized propensity density `f(a | x)`.
    pub fn dose_density(&self, x: f64, a: f64) -> f64 {
        let z = (a - self.dose_mean(x)) / Self::DOSE_SD;
        (-0.5 * z * z).exp() / ((2.0 * std::f64::consts::PI).sqrt() * Self::DOSE_SD)
    }

    pub fn mu(&self, x: f64, a: f64) -> f64 {
        baseline(x) + 2.0 * a * a
    }

    pub fn censor_prob(&self, x: f64, a: f64) -> f64 {
        let bias = (self.xi_target / (1.0 - self.xi_target)).ln();
        sigmoid((x - 45.0) / 45.0 + bias + 0.1 * (a - 3.0)).clamp(P_CLIP.0, P_CLIP.1)
    }

    pub fn t_max(&self) -> f64 {
        // doses beyond mean ± 5 sd are never drawn in practice
        let a_hi = self.dose_mean(X_HIGH) + 5.0 * Self::DOSE_SD;
        1.1 * (self.mu(X_HIGH, a_hi) + baseline(X_HIGH).abs() + 3.1 * self.noise_sd)
    }

    pub fn oracle_nuisances(&self, x: f64, a: f64) -> Nuisances {
        let mu = self.mu(x, a);
        Nuisances { nu0: mu, nu1: LAMBDA_MEAN * mu, xi: self.censor_prob(x, a), pi: self.dose_density(x, a) }
    }

    pub fn generate(&self) -> Result<Dataset, SimulationError> {
        if !(self.xi_target > 0.0 && self.xi_target < 1.0) {
            return Err(SimulationError::InvalidXiTarget(self.xi_target));
        }
        if self.n == 0 {
            return Err(SimulationError::EmptySample);
        }
        let mut rng = stream(self.seed, Substream::Simulate, 1);
        let noise = Normal::new(0.0, self.noise_sd).expect("finite noise sd");
        let t_max = self.t_max();
        let subjects = (0..self.n)
            .map(|i| {
                let x = rng.random_range(X_LOW..X_HIGH);
                let a = Normal::new(self.dose_mean(x), Self::DOSE_SD).expect("finite dose sd").sample(&mut rng);
                let t = (self.mu(x, a) + noise.sample(&mut rng)).clamp(1e-3, t_max);
                let censored = rng.random::<f64>() < self.censor_prob(x, a);
                let lambda = rng.random_range(LAMBDA_LOW..LAMBDA_HIGH);
                Subject {
                    id: i.to_string(),
                    x: vec![x],
                    treatment: a,
                    time: if censored { lambda * t } else { t },
                    censored,
                }
            })
            .collect();
        Ok(Dataset::new(subjects, vec!["x".into()], Some(t_max), TreatmentMode::Continuous)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_shape_and_rates() {
        let s = Scenario::new(Family::Sin, Design::Rct, 0.4, 2000, 1);
        let (d, latent) = generate(&s).unwrap();
        assert_eq!(d.len(), 2000);
        let censored = d.subjects().iter().filter(|s| s.censored).count() as f64 / 2000.0;
        assert!((censored - s.mean_censoring()).abs() < 0.03, "{censored} vs {}", s.mean_censoring());
        let treated = d.subjects().iter().filter(|s| s.treatment == 1.0).count() as f64 / 2000.0;
        assert!((treated - 0.5).abs() < 0.03);
        for (sub, l) in d.subjects().iter().zip(&latent) {
            assert!(sub.time <= l.t_true);
            assert_eq!(sub.time == l.t_true, !sub.censored);
            if sub.censored {
                let r = sub.time / l.t_true;
                assert!((LAMBDA_LOW..=LAMBDA_HIGH).contains(&r));
            }
        }
        assert_eq!(generate(&s).unwrap().0, d);
        assert!(matches!(
            generate(&Scenario::new(Family::Sin, Design::Rct, 1.2, 10, 1)),
            Err(SimulationError::InvalidXiTarget(_))
        ));
    }

    #[test]
    fn oracle_values() {
        let s = Scenario::new(Family::Sin, Design::Rct, 0.4, 10, 0);
        let avg = 0.5 * (s.censor_prob(45.0, Arm(0)) + s.censor_prob(45.0, Arm(1)));
        assert!((avg - 0.4).abs() < 1e-12);
        assert_eq!(oracle_nuisances(&s, 33.0, Arm(0)).pi, 0.5);
        let obs = Scenario { design: Design::Observational, ..s.clone() };
        assert!((oracle_nuisances(&obs, 45.0, Arm(1)).pi - 0.5).abs() < 1e-15);
    }

    #[test]
    fn censored_mean_ratio_matches_lambda_mean() {
        // Monte Carlo at a fixed covariate: E[T̃ | Δ = 1] / E[T] ≈ E[λ]
        let s = Scenario::new(Family::Exponential, Design::Rct, 0.4, 1, 0);
        let mut rng = stream(3, Substream::Oracle, 0);
        let noise = Normal::new(0.0, s.noise_sd).unwrap();
        let (x, n) = (60.0, 200_000);
        let mut censored_sum = 0.0;
        let mut censored_n = 0usize;
        for _ in 0..n {
            let t = s.family.tau(x) + noise.sample(&mut rng) + baseline(x) + noise.sample(&mut rng);
            if rng.random::<f64>() < s.censor_prob(x, Arm(1)) {
                censored_sum += rng.random_range(LAMBDA_LOW..LAMBDA_HIGH) * t;
                censored_n += 1;
            }
        }
        let ratio = censored_sum / censored_n as f64 / s.mu(x, Arm(1));
        // sd of λ is 0.25/√12 ≈ 0.072; the MC standard error is below 3e-4
        assert!((ratio - LAMBDA_MEAN).abs() < 1.5e-3, "{ratio}");
    }

    #[test]
    fn true_cate_lies_within_conservative_bounds() {
        for family in Family::PAPER {
            for xi in [0.2, 0.4, 0.6] {
                let s = Scenario::new(family, Design::Rct, xi, 1, 0);
                for x in x_grid(100) {
                    let b = oracle_bounds(
                        &s,
                        x,
                        Target::Pair { treated: Arm(1), control: Arm(0) },
                        &BoundCase::Conservative,
                    )
                    .unwrap();
                    let tau = s.true_cate(x);
                    assert!(b.lower <= tau && tau <= b.upper);
                }
            }
        }
    }

    #[test]
    fn conservative_width_shrinks_with_censoring() {
        let pair = Target::Pair { treated: Arm(1), control: Arm(0) };
        for x in [20.0, 55.0, 90.0] {
            let widths: Vec<f64> = [0.6, 0.4, 0.2]
                .iter()
                .map(|&xi| {
                    oracle_bounds(&Scenario::new(Family::Sin, Design::Rct, xi, 1, 0), x, pair, &BoundCase::Conservative)
                        .unwrap()
                        .width()
                })
                .collect();
            assert!(widths[0] > widths[1] && widths[1] > widths[2]);
        }
    }

    #[test]
    fn planted_lower_bound_is_positive_only_above_70() {
        let s = Scenario::new(Family::Planted, Design::Rct, 0.4, 1, 0);
        let pair = Target::Pair { treated: Arm(1), control: Arm(0) };
        for x in x_grid(901) {
            let lb = oracle_bounds(&s, x, pair, &BoundCase::domain(3.0)).unwrap().lower;
            assert_eq!(lb > 0.0, x > 70.0, "x = {x}, lb = {lb}");
        }
    }

    #[test]
    fn dose_design() {
        let s = DoseScenario::new(0.3, 500, 2);
        let d = s.generate().unwrap();
        assert_eq!(d.mode(), TreatmentMode::Continuous);
        assert!(d.subjects().iter().all(|s| s.time > 0.0));
        let total: f64 =
            (0..4000).map(|i| s.dose_density(50.0, -6.0 + 16.0 * f64::from(i) / 4000.0) * 16.0 / 4000.0).sum();
        assert!((total - 1.0).abs() < 1e-6);
    }
}
