//! CAPO and CATE bounds straight from the identification formulas.
//!
//! `cargo run --example closed_form_bounds`

use censorbounds::bounds::{capo_lower, capo_upper_conservative, capo_upper_domain, cate_bounds};
use censorbounds::BoundPair;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t_max = 30.0;
    // (ν₀, ν₁, ξ) for two arms at one covariate profile
    let treated = (10.0, 5.0, 0.4);
    let control = (8.0, 6.0, 0.2);

    for (name, gamma) in [("γ = 3", Some(3.0)), ("conservative", None)] {
        let capo = |(nu0, nu1, xi): (f64, f64, f64)| -> Result<BoundPair, Box<dyn std::error::Error>> {
            let upper = match gamma {
                Some(g) => capo_upper_domain(nu0, nu1, xi, g, t_max)?,
                None => capo_upper_conservative(nu0, xi, t_max),
            };
            Ok(BoundPair::new(capo_lower(nu0, nu1, xi), upper))
        };
        let (a1, a0) = (capo(treated)?, capo(control)?);
        let cate = cate_bounds(a1, a0);
        println!(
            "{name:>12}: CAPO(1) = [{:.2}, {:.2}]  CAPO(0) = [{:.2}, {:.2}]  CATE = [{:.2}, {:.2}]",
            a1.lower, a1.upper, a0.lower, a0.upper, cate.lower, cate.upper
        );
    }

    // γ + ν₁ beyond t_max is rejected rather than silently clipped
    match capo_upper_domain(10.0, 25.0, 0.4, 10.0, t_max) {
        Err(e) => println!("rejected: {e}"),
        Ok(v) => println!("unexpected value {v}"),
    }
    Ok(())
}
