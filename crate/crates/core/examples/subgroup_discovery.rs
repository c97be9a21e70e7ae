//! Finding the subgroup with reliably positive effects: a shallow tree on
//! the sign of the estimated CATE lower bound, then a bootstrap of the
//! subgroup mean.
//!
//! `cargo run --release --example subgroup_discovery`

use censorbounds::analysis::{
    bootstrap_subgroup, fraction_lb_positive, subgroup_tree, LearnerChoice, PipelineConfig, TREATED_VS_CONTROL,
};
use censorbounds::bounds::{BoundCase, BoundPredictor};
use censorbounds::simulation::{generate, Design, Family, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // effect of 40 months only above x = 70
    let s = Scenario::new(Family::Planted, Design::Rct, 0.4, 2000, 4);
    let (d, _) = generate(&s)?;
    let cfg = PipelineConfig::for_scenario(LearnerChoice::Survb, &s);
    let model = cfg.fit(&d, TREATED_VS_CONTROL, &BoundCase::domain(3.0))?;
    let x = d.covariates();
    let lb: Vec<f64> = model.predict_bounds(&x)?.iter().map(|b| b.lower).collect();

    let tree = subgroup_tree(&x, &lb, 2, 2)?;
    for leaf in tree.leaves() {
        let rule: Vec<String> =
            leaf.path.iter().map(|(_, t, left)| format!("x {} {t:.2}", if *left { "<=" } else { ">" })).collect();
        println!(
            "{:<28} n = {:>4}, LB > 0 in {:>5.1}%",
            rule.join(" & "),
            leaf.n,
            100.0 * leaf.n_positive as f64 / leaf.n as f64
        );
    }
    let best = tree.best_leaf_mask(&x);
    println!("\nbest leaf: {:.1}% positive", fraction_lb_positive(&lb, Some(&best))?);
    let b = bootstrap_subgroup(&lb, &best, 2000, 4)?;
    println!("subgroup mean lower bound {:.2} (bootstrap SD {:.3}, {} replicates)", b.mean, b.sd, b.replicates);
    Ok(())
}
