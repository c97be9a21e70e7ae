//! Kaplan–Meier-style curves of per-subject expected-survival bounds,
//! written as CSV and SVG.
//!
//! `cargo run --release --example survival_curves`

use censorbounds::analysis::curves::time_grid;
use censorbounds::analysis::{bound_survival_curves, LearnerChoice, PipelineConfig};
use censorbounds::bounds::{BoundCase, BoundPredictor, Target};
use censorbounds::cli::svg::{line_chart, Series};
use censorbounds::simulation::{generate, Design, Family, Scenario};
use censorbounds::Arm;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = Scenario::new(Family::LogisticSin, Design::Rct, 0.3, 1500, 9);
    let (d, _) = generate(&s)?;
    let cfg = PipelineConfig::for_scenario(LearnerChoice::Survb, &s);
    let ns = cfg.fit_nuisances(&d)?;
    let grid = time_grid(d.t_max(), 61);
    let mut series = Vec::new();
    for arm in [Arm(0), Arm(1)] {
        let model = cfg.fit_bounds(&d, &ns, Target::Arm { arm }, &BoundCase::domain(3.0))?;
        let curves = bound_survival_curves(&model.predict_bounds(&d.covariates())?, &grid);
        let half = |p: &[f64]| grid.iter().zip(p).find(|(_, &v)| v < 0.5).map_or(f64::NAN, |(t, _)| *t);
        println!(
            "arm {arm}: median lower bound ≈ {:.1}, median upper bound ≈ {:.1}",
            half(&curves.lower),
            half(&curves.upper)
        );
        series.push(Series {
            name: format!("arm {arm} lower"),
            points: grid.iter().copied().zip(curves.lower).collect(),
        });
        series.push(Series {
            name: format!("arm {arm} upper"),
            points: grid.iter().copied().zip(curves.upper).collect(),
        });
    }
    let path = std::env::temp_dir().join("censorbounds-curves.svg");
    std::fs::write(&path, line_chart("Bounds on expected survival", "months", "P(bound > t)", &series))?;
    println!("chart written to {}", path.display());
    Ok(())
}
