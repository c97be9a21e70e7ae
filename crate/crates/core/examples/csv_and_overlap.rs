//! Loading a censored dataset from CSV (either status convention) and
//! checking overlap.
//!
//! `cargo run --example csv_and_overlap`

use censorbounds::data::{load_csv, save_csv, validate_overlap, CsvSchema, StatusConvention};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("censorbounds-csv-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("trial.csv");
    std::fs::write(
        &path,
        "patient,age,egfr,arm,months,event\n\
         p1,61,1,0,14.2,1\np2,55,0,1,30.5,0\np3,70,1,1,22.0,1\np4,48,0,0,9.1,1\np5,66,1,1,35.0,0\np6,59,0,0,12.7,0\n",
    )?;
    let schema = CsvSchema {
        arm_col: "arm".into(),
        time_col: "months".into(),
        status_col: "event".into(),
        convention: StatusConvention::Event,
        id_col: Some("patient".into()),
        t_max: Some(60.0),
        ..CsvSchema::default()
    };
    let d = load_csv(&path, &schema)?;
    println!("{} subjects, covariates {:?}, arms {:?}, t_max {}", d.len(), d.covariate_names(), d.arms(), d.t_max());
    for s in d.subjects() {
        println!("  {}: x = {:?}, arm {}, t = {}, censored = {}", s.id, s.x, s.treatment, s.time, s.censored);
    }
    let report = validate_overlap(&d, 0.05);
    for a in &report.per_arm {
        println!("arm {}: {} subjects, {} censored", a.arm, a.n, a.censored);
    }
    println!("warnings: {:?}", report.warnings);

    let out = dir.join("trial_censored.csv");
    save_csv(&d, &out, &CsvSchema { status_col: "censored".into(), convention: StatusConvention::Censored, ..schema })?;
    println!("\n{}", std::fs::read_to_string(out)?);
    Ok(())
}
