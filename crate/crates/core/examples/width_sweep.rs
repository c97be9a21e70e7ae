//! Bound width against censoring strength, estimated and oracle.
//!
//! `cargo run --release --example width_sweep`

use censorbounds::analysis::{width_sweep, CaseSpec, LearnerChoice};
use censorbounds::simulation::Family;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for case in [CaseSpec::domain(3.0), CaseSpec::conservative()] {
        let rows = width_sweep(&case, &[0.1, 0.2, 0.4, 0.6], Family::Sin, 2000, &[0, 1, 2], LearnerChoice::Survb)?;
        println!("{}:", case.name);
        for r in rows {
            let est = if r.estimated_width.is_nan() { "-".to_string() } else { format!("{:.3}", r.estimated_width) };
            println!("  ξ = {:.1}: estimated {est:>8}, oracle {:>8.3}", r.xi, r.oracle_width);
        }
    }
    Ok(())
}
