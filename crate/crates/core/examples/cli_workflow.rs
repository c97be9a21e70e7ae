//! The command-line workflow driven in-process: simulate, fit, evaluate,
//! then replay the fit from its recorded configuration.
//!
//! `cargo run --release --example cli_workflow`

use censorbounds::cli::run;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join("censorbounds-cli-example");
    let _ = std::fs::remove_dir_all(&root);
    let p = |name: &str| root.join(name).display().to_string();

    let steps: Vec<Vec<String>> = vec![
        vec!["simulate", "--scenario", "sin", "--xi", "0.4", "--n", "2000", "--seed", "1", "--out", &p("sim")],
        vec![
            "fit",
            "--data",
            &p("sim/data.csv"),
            "--case",
            "domain",
            "--gamma",
            "3",
            "--propensity",
            "known:0.5",
            "--out",
            &p("fit"),
        ],
        vec!["evaluate", "--model", &p("fit"), "--out", &p("eval")],
        vec!["replay", &p("fit/effective_config.json"), "--out", &p("fit_again")],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();

    for args in steps {
        let code = run(std::iter::once("censorbounds".to_string()).chain(args.iter().cloned()));
        println!("censorbounds {} -> exit {code}", args[0]);
    }
    let a = std::fs::read(root.join("fit/bounds.csv"))?;
    let b = std::fs::read(root.join("fit_again/bounds.csv"))?;
    println!("replayed bounds identical: {}", a == b);
    Ok(())
}
