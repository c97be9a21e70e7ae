//! Kernel-smoothed bounds at a continuous dose, SurvB against plug-in.
//!
//! `cargo run --release --example continuous_dose`

use censorbounds::analysis::{LearnerChoice, PipelineConfig};
use censorbounds::bounds::{capo_lower, capo_upper_conservative, BoundCase, BoundPredictor, Kernel, Target};
use censorbounds::nuisance::{DoseSmoothing, PropensityMode};
use censorbounds::simulation::DoseScenario;
use censorbounds::Matrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = DoseScenario::new(0.3, 5000, 5);
    let d = s.generate()?;
    let xs = [30.0, 55.0, 80.0];
    let dose = 3.0;
    println!("dose {dose}, t_max {:.1}", s.t_max());

    for learner in [LearnerChoice::Survb, LearnerChoice::Plugin] {
        let mut cfg = PipelineConfig::new(learner, PropensityMode::Estimate, 5);
        cfg.smoothing = DoseSmoothing { kernel: Kernel::Gaussian, bandwidth: Some(0.5) };
        let model = cfg.fit(&d, Target::Dose { dose }, &BoundCase::Conservative)?;
        println!("{}:", learner.name());
        for (x, b) in xs.iter().zip(model.predict_bounds(&Matrix::column(&xs))?) {
            let n = s.oracle_nuisances(*x, dose);
            println!(
                "  x = {x}: estimated [{:.2}, {:.2}]  oracle [{:.2}, {:.2}]",
                b.lower,
                b.upper,
                capo_lower(n.nu0, n.nu1, n.xi),
                capo_upper_conservative(n.nu0, n.xi, s.t_max())
            );
        }
    }
    Ok(())
}
