mod common;

use std::path::Path;

use common::{cli, path_str, read_tree, write_trial_csv};

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = path_str(dir.path());
    assert_eq!(cli(&["simulate", "--scenario", "sin", "--out", &out]), 2);
    assert_eq!(cli(&["simulate", "--scenario", "sin", "--xi", "1.5", "--out", &out]), 2);
    assert_eq!(cli(&["frobnicate"]), 2);
}

#[test]
fn unreadable_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "id,x,a,t_obs,censored\n1,,0,3,0\n").unwrap();
    let out = path_str(&dir.path().join("out"));
    assert_eq!(cli(&["fit", "--data", &path_str(&bad), "--out", &out]), 3);
    assert_eq!(cli(&["fit", "--data", &path_str(&dir.path().join("nope.csv")), "--out", &out]), 3);
}

#[test]
fn simulate_is_deterministic_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = path_str(&dir.path().join(name));
        let args = [
            "simulate",
            "--scenario",
            "sin",
            "--xi",
            "0.4",
            "--n",
            "2000",
            "--design",
            "rct",
            "--seed",
            "1",
            "--out",
            &out,
        ];
        assert_eq!(cli(&args), 0);
        read_tree(&dir.path().join(name))
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    let (_, rows) = read_csv(&dir.path().join("a/data.csv"));
    assert_eq!(rows.len(), 2000);
    let (header, latent) = read_csv(&dir.path().join("a/data_latent.csv"));
    assert_eq!(latent.len(), 2000);
    assert!(header.contains(&"t_true".to_string()));
}

#[test]
fn fit_resolves_t_max_and_learners_differ() {
    let dir = tempfile::tempdir().unwrap();
    let sim = path_str(&dir.path().join("sim"));
    assert_eq!(cli(&["simulate", "--scenario", "sin", "--xi", "0.4", "--n", "800", "--seed", "2", "--out", &sim]), 0);
    let data = format!("{sim}/data.csv");
    for learner in ["survb", "plugin"] {
        let out = path_str(&dir.path().join(learner));
        let args = [
            "fit",
            "--data",
            &data,
            "--learner",
            learner,
            "--case",
            "domain",
            "--gamma",
            "3",
            "--propensity",
            "known:0.5",
            "--out",
            &out,
        ];
        assert_eq!(cli(&args), 0);
        for file in ["bounds.csv", "model.cbnd", "run_meta.json", "effective_config.json"] {
            assert!(dir.path().join(learner).join(file).exists(), "{learner}: {file}");
        }
    }
    let a = std::fs::read(dir.path().join("survb/bounds.csv")).unwrap();
    let b = std::fs::read(dir.path().join("plugin/bounds.csv")).unwrap();
    assert_ne!(a, b);

    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("plugin/run_meta.json")).unwrap()).unwrap();
    let sim_meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(format!("{sim}/data_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["t_max"], sim_meta["t_max"]);

    let (header, rows) = read_csv(&dir.path().join("plugin/bounds.csv"));
    let (l, u) = (column(&header, "lower"), column(&header, "upper"));
    assert!(rows.iter().all(|r| r[u].parse::<f64>().unwrap() >= r[l].parse::<f64>().unwrap()));

    let eval = path_str(&dir.path().join("eval"));
    assert_eq!(cli(&["evaluate", "--model", &path_str(&dir.path().join("plugin")), "--out", &eval]), 0);
    assert!(dir.path().join("eval/eval_report.json").exists());
}

#[test]
fn evaluate_reports_every_cell_and_zero_sd_for_one_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = path_str(dir.path());
    let args = [
        "evaluate",
        "--scenario",
        "sin",
        "--xi",
        "0.2,0.4,0.6",
        "--n",
        "400",
        "--seeds",
        "1",
        "--grid",
        "40",
        "--out",
        &out,
    ];
    assert_eq!(cli(&args), 0);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("eval_report.json")).unwrap()).unwrap();
    let cells = report["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 6);
    assert!(cells.iter().all(|c| c["rmse_sd"].as_f64() == Some(0.0)));
}

#[test]
fn evaluate_scores_the_oracle_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = path_str(dir.path());
    let args = [
        "evaluate",
        "--xi",
        "0.4",
        "--seeds",
        "0,1",
        "--learners",
        "oracle",
        "--cases",
        "domain,conservative",
        "--out",
        &out,
    ];
    assert_eq!(cli(&args), 0);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("eval_report.json")).unwrap()).unwrap();
    assert!(report["cells"].as_array().unwrap().iter().all(|c| c["rmse_mean"].as_f64() == Some(0.0)));
}

#[test]
fn audit_writes_the_full_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = path_str(&write_trial_csv(dir.path(), 1));
    let report = path_str(&dir.path().join("report"));
    assert_eq!(cli(&["audit", "--data", &data, "--bootstrap", "200", "--report", &report]), 0);
    for file in
        ["bounds.csv", "fractions.csv", "pairs.csv", "subgroups.json", "bootstrap.json", "curves.csv", "curves.svg"]
    {
        assert!(dir.path().join("report").join(file).exists(), "{file}");
    }

    let (header, rows) = read_csv(&dir.path().join("report/pairs.csv"));
    let (n, pct) = (column(&header, "n"), column(&header, "pct_lb_positive"));
    for r in &rows {
        assert_eq!(r[n] == "0", r[pct].is_empty(), "{r:?}");
    }

    let (header, rows) = read_csv(&dir.path().join("report/curves.csv"));
    let (arm, lo, up) = (column(&header, "arm"), column(&header, "p_lower"), column(&header, "p_upper"));
    for a in ["0", "1"] {
        let series: Vec<(f64, f64)> =
            rows.iter().filter(|r| r[arm] == a).map(|r| (r[lo].parse().unwrap(), r[up].parse().unwrap())).collect();
        assert!(!series.is_empty());
        assert!(series.windows(2).all(|w| w[1].0 <= w[0].0 && w[1].1 <= w[0].1));
        assert!(series.iter().all(|&(l, u)| (0.0..=1.0).contains(&l) && l <= u && u <= 1.0));
    }

    let tree: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("report/subgroups.json")).unwrap()).unwrap();
    assert_eq!(tree["tree"]["min_leaf"], 2);
}

#[test]
fn gmsm_collapses_at_one_and_widens_above() {
    let dir = tempfile::tempdir().unwrap();
    let data = path_str(&write_trial_csv(dir.path(), 2));
    let out = path_str(&dir.path().join("g"));
    assert_eq!(
        cli(&["gmsm", "--data", &data, "--gamma-confounding", "2,1,4", "--cells", "age:30,50,65,85", "--out", &out]),
        0
    );
    let (header, rows) = read_csv(&dir.path().join("g/gmsm.csv"));
    let idx = |name: &str| column(&header, name);
    let num = |r: &[String], name: &str| r[idx(name)].parse::<f64>().unwrap();
    let mut checked = 0;
    for r in rows.iter().filter(|r| !r[idx("plugin_lower")].is_empty()) {
        assert_eq!(num(r, "lower_gamma_1"), num(r, "plugin_lower"));
        assert_eq!(num(r, "upper_gamma_1"), num(r, "plugin_upper"));
        assert!(
            num(r, "lower_gamma_2") <= num(r, "lower_gamma_1") && num(r, "upper_gamma_2") >= num(r, "upper_gamma_1")
        );
        assert!(
            num(r, "lower_gamma_4") <= num(r, "lower_gamma_2") && num(r, "upper_gamma_4") >= num(r, "upper_gamma_2")
        );
        checked += 1;
    }
    assert!(checked >= 4);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    std::fs::write(&config, r#"{"scenario": "exp", "xi": 0.3, "n": 150, "seed": 4}"#).unwrap();
    let out = path_str(&dir.path().join("sim"));
    assert_eq!(cli(&["--config", &path_str(&config), "simulate", "--n", "120", "--out", &out]), 0);
    let (_, rows) = read_csv(&dir.path().join("sim/data.csv"));
    assert_eq!(rows.len(), 120);
    let effective: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("sim/effective_config.json")).unwrap()).unwrap();
    let text = effective.to_string();
    assert!(text.contains("\"xi\":0.3") && text.contains("\"seed\":4"), "{text}");
}
