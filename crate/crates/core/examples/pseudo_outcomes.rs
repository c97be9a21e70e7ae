//! Debiased pseudo-outcomes and their double robustness: the sample mean
//! recovers the bound when either the propensity or the outcome nuisances
//! are right.
//!
//! `cargo run --release --example pseudo_outcomes`

use censorbounds::bounds::{capo_lower, pseudo_lower};
use censorbounds::nuisance::Nuisances;
use censorbounds::simulation::{generate, oracle_nuisances, Design, Family, Scenario};
use censorbounds::Arm;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = Scenario::new(Family::Exponential, Design::Rct, 0.4, 100_000, 3);
    let (d, _) = generate(&s)?;
    let arm = Arm(1);

    let target = |x: f64| {
        let n = oracle_nuisances(&s, x, arm);
        capo_lower(n.nu0, n.nu1, n.xi)
    };
    let truth: f64 = d.subjects().iter().map(|s| target(s.x[0])).sum::<f64>() / d.len() as f64;

    let mean_of = |nuis: &dyn Fn(f64) -> Nuisances| -> (f64, f64) {
        let v: Vec<f64> = d.subjects().iter().map(|s| pseudo_lower(s, &nuis(s.x[0]), arm)).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        (m, sd / (v.len() as f64).sqrt())
    };

    let wrong_pi = |x: f64| Nuisances { pi: 0.7, ..oracle_nuisances(&s, x, arm) };
    let wrong_outcome = |x: f64| {
        let n = oracle_nuisances(&s, x, arm);
        Nuisances { nu0: 1.5 * n.nu0, nu1: 1.5 * n.nu1, xi: (1.5 * n.xi).min(0.99), pi: n.pi }
    };
    println!("average lower bound      {truth:.3}");
    for (name, f) in [("wrong propensity", &wrong_pi as &dyn Fn(f64) -> Nuisances), ("wrong ν and ξ", &wrong_outcome)]
    {
        let (m, se) = mean_of(f);
        println!("{name:<22}   {m:.3} ± {se:.3}  ({:+.2} SE)", (m - truth) / se);
    }
    Ok(())
}
