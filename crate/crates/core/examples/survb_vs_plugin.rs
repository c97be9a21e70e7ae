//! Two-stage SurvB learner against the plug-in learner on simulated data,
//! scored against the oracle bounds.
//!
//! `cargo run --release --example survb_vs_plugin`

use censorbounds::analysis::{rmse_vs_oracle, LearnerChoice, PipelineConfig, EVAL_GRID, TREATED_VS_CONTROL};
use censorbounds::bounds::{BoundCase, BoundPredictor};
use censorbounds::simulation::{generate, x_grid, Design, Family, Scenario};
use censorbounds::Matrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = Scenario::new(Family::Sin, Design::Rct, 0.4, 2000, 11);
    let (d, _) = generate(&s)?;
    let grid = x_grid(EVAL_GRID);
    let case = BoundCase::domain(3.0);

    for learner in [LearnerChoice::Survb, LearnerChoice::Plugin] {
        let cfg = PipelineConfig::for_scenario(learner, &s);
        let model = cfg.fit(&d, TREATED_VS_CONTROL, &case)?;
        let r = rmse_vs_oracle(&model, &s, &grid, &case)?;
        let pred = model.predict(&Matrix::column(&[30.0, 60.0, 90.0]))?;
        println!(
            "{:>6}: RMSE lower {:.3}, upper {:.3}, joint {:.3}; crossings on grid {}",
            learner.name(),
            r.lower,
            r.upper,
            r.joint,
            model.predict(&Matrix::column(&grid))?.crossing_count()
        );
        for (x, b) in [30.0, 60.0, 90.0].iter().zip(&pred.bounds) {
            println!("        x = {x}: CATE in [{:.2}, {:.2}]", b.lower, b.upper);
        }
    }
    Ok(())
}
