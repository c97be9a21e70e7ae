//! Widening cell-level bounds for hidden confounding with the generalized
//! marginal sensitivity model.
//!
//! `cargo run --release --example gmsm_confounding`

use censorbounds::sensitivity::{
    cell_ingredients, gmsm_bound_adjustment, gmsm_shift_masses, gmsm_weights, CellUpper, GmsmSpec, ShiftDirection,
};
use censorbounds::simulation::{generate, Design, Family, Scenario};
use censorbounds::Arm;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let w = gmsm_weights(2.0, 0.5)?;
    println!("Γ = 2, π = 0.5: s⁻ = {:.4}, s⁺ = {:.4}", w.s_minus, w.s_plus);
    let masses = gmsm_shift_masses(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4], w.s_minus, w.s_plus, ShiftDirection::Plus)?;
    println!("plus shift of a uniform 4-point law: {masses:?}");

    let s = Scenario::new(Family::Sin, Design::Observational, 0.4, 2000, 2);
    let (d, _) = generate(&s)?;
    let cell: Vec<_> = d.subjects().iter().filter(|s| s.x[0] > 70.0 && s.arm() == Arm(1)).collect();
    let in_range = d.subjects().iter().filter(|s| s.x[0] > 70.0).count();
    let pi = cell.len() as f64 / in_range as f64;
    let (lower, upper) = cell_ingredients(&cell, CellUpper::Conservative { t_max: d.t_max() });
    println!("\ncell x > 70, arm 1: n = {}, π = {pi:.3}", cell.len());
    for gamma in [1.0, 1.5, 2.0, 4.0] {
        let c = gmsm_bound_adjustment(&lower, &upper, pi, GmsmSpec { gamma })?;
        println!(
            "  Γ = {gamma}: [{:.2}, {:.2}] (plug-in [{:.2}, {:.2}])",
            c.widened.lower, c.widened.upper, c.plugin.lower, c.plugin.upper
        );
    }
    Ok(())
}
