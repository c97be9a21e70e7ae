//! Stage 1: stratified fold assignment and cross-fitted nuisances.
//!
//! `cargo run --release --example cross_fitting`

use censorbounds::models::LearnerSpec;
use censorbounds::nuisance::{assign_folds, fit_nuisances, NuisanceOptions, PropensityMode};
use censorbounds::simulation::{generate, oracle_nuisances, Design, Family, Scenario};
use censorbounds::Arm;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = Scenario::new(Family::Exponential, Design::Observational, 0.4, 1500, 21);
    let (d, _) = generate(&s)?;
    let plan = assign_folds(&d, 3, 21)?;
    println!("fold sizes {:?}", plan.fold_sizes());

    let opts = NuisanceOptions::new(LearnerSpec::random_forest(21), PropensityMode::Estimate);
    let ns = fit_nuisances(&d, &plan, &opts)?;
    let oof = ns.out_of_fold(&d, 1.0)?;
    println!("\n   x    ν̂₀ / ν₀          ν̂₁ / ν₁          ξ̂ / ξ          π̂ / π");
    for (s_, n) in d.subjects().iter().zip(&oof).take(6) {
        let o = oracle_nuisances(&s, s_.x[0], Arm(1));
        println!(
            "{:>5.1}  {:>6.1} / {:>6.1}  {:>6.1} / {:>6.1}  {:.2} / {:.2}  {:.2} / {:.2}",
            s_.x[0], n.nu0, o.nu0, n.nu1, o.nu1, n.xi, o.xi, n.pi, o.pi
        );
    }
    Ok(())
}
