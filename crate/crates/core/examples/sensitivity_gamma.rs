//! The post-dropout function γ(x, a) in its four forms.
//!
//! `cargo run --example sensitivity_gamma`

use censorbounds::sensitivity::{eval_gamma, load_gamma_table, SensitivitySpec};
use censorbounds::Arm;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t_max = 30.0;
    let constant = SensitivitySpec::constant(3.0);
    let per_arm = SensitivitySpec::PerArm { values: vec![(Arm(0), 2.0), (Arm(1), 4.5)] };
    println!("constant:      {}", eval_gamma(&constant, &[50.0], Arm(1), None, t_max)?);
    println!("per arm (1):   {}", eval_gamma(&per_arm, &[50.0], Arm(1), None, t_max)?);
    println!("conservative:  {}", eval_gamma(&SensitivitySpec::Conservative, &[50.0], Arm(1), Some(22.0), t_max)?);

    let dir = std::env::temp_dir().join("censorbounds-gamma-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("gamma.csv");
    std::fs::write(&path, "bin_low,bin_high,arm,gamma\n0,50,0,1.0\n50,100,0,2.0\n0,100,1,3.0\n")?;
    let table = load_gamma_table(&path, 0)?;
    for (x, arm) in [(20.0, 0), (70.0, 0), (70.0, 1)] {
        println!("table at x = {x}, arm {arm}: {}", eval_gamma(&table, &[x], Arm(arm), None, t_max)?);
    }
    match eval_gamma(&table, &[150.0], Arm(0), None, t_max) {
        Err(e) => println!("outside the table: {e}"),
        Ok(g) => println!("unexpected {g}"),
    }
    Ok(())
}
