//! The supervised learners behind both stages, and the binary model
//! container.
//!
//! `cargo run --release --example forest_models`

use censorbounds::models::persist::{read_model, write_model};
use censorbounds::models::{fit_classifier, fit_regressor, FittedRegressor, LearnerSpec, Matrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let xs: Vec<f64> = (0..400).map(|i| i as f64 / 40.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x.sin() * 3.0 + 0.1 * x).collect();
    let x = Matrix::column(&xs);
    let probe = Matrix::column(&[1.0, 4.5, 8.0]);

    for spec in [LearnerSpec::random_forest(1), LearnerSpec::knn(15), LearnerSpec::ridge(1.0), LearnerSpec::constant()]
    {
        let m = fit_regressor(&spec, &x, &ys)?;
        println!(
            "{:<40} {:?}",
            format!("{:?}", spec.kind),
            m.predict(&probe)?.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
        );
    }

    let labels: Vec<u32> = xs.iter().map(|&x| u32::from(x > 5.0)).collect();
    let clf = fit_classifier(&LearnerSpec::random_forest(2), &x, &labels)?;
    println!("P(class 1) at {:?}: {:?}", probe.as_slice(), clf.prob_of(&probe, 1)?);

    let forest = fit_regressor(&LearnerSpec::random_forest(3), &x, &ys)?;
    let mut bytes = Vec::new();
    write_model(&mut bytes, "regressor", &forest)?;
    let back: FittedRegressor = read_model(bytes.as_slice(), "regressor")?;
    println!("container: {} bytes, round trip identical: {}", bytes.len(), back == forest);
    Ok(())
}
