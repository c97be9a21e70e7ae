//! Synthetic benchmark data with known nuisances and oracle bounds.
//!
//! `cargo run --release --example simulate_and_oracle`

use censorbounds::bounds::{BoundCase, Target};
use censorbounds::simulation::{generate, oracle_bounds, Design, Family, Scenario};
use censorbounds::Arm;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for family in Family::PAPER {
        let s = Scenario::new(family, Design::Rct, 0.4, 2000, 7);
        let (d, latent) = generate(&s)?;
        let censored = d.subjects().iter().filter(|s| s.censored).count();
        println!(
            "{family:>7}: n = {}, censored = {:.3} (expected {:.3}), t_max = {:.1}",
            d.len(),
            censored as f64 / d.len() as f64,
            s.mean_censoring(),
            d.t_max()
        );
        let row = &latent[0];
        println!("         first subject: x = {:.1}, arm {}, T = {:.2}, C = {:?}", row.x, row.arm, row.t_true, row.c);
    }

    let s = Scenario::new(Family::Sin, Design::Rct, 0.4, 2000, 7);
    let treated = Target::Pair { treated: Arm(1), control: Arm(0) };
    println!("\n   x   true CATE   domain (γ=3)        conservative");
    for x in [20.0, 40.0, 60.0, 80.0] {
        let dom = oracle_bounds(&s, x, treated, &BoundCase::domain(3.0))?;
        let con = oracle_bounds(&s, x, treated, &BoundCase::Conservative)?;
        println!(
            "{x:>4}   {:>8.2}   [{:>6.2}, {:>6.2}]   [{:>7.2}, {:>6.2}]",
            s.true_cate(x),
            dom.lower,
            dom.upper,
            con.lower,
            con.upper
        );
    }
    Ok(())
}
