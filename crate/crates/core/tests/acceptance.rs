//! The ten acceptance criteria. Each test writes one `criterion N [PASS|FAIL]`
//! line to stderr before asserting.

mod common;

use std::time::Instant;

use censorbounds::analysis::{
    bound_survival_curves, read_bound_pairs, rmse_vs_oracle, run_benchmark, subgroup_tree, width_sweep, BenchmarkPlan,
    CaseSpec, LearnerChoice, PipelineConfig, EVAL_GRID, TREATED_VS_CONTROL,
};
use censorbounds::bounds::{
    capo_lower, capo_upper_conservative, capo_upper_domain_value, cate_bounds, fit_plugin, pseudo_cate, pseudo_outcome,
    ArmInput, BoundCase, BoundPredictor, PseudoOutcomeCase,
};
use censorbounds::nuisance::Nuisances;
use censorbounds::sensitivity::{
    gmsm_bound_adjustment, gmsm_shift_expectation, gmsm_shift_masses, gmsm_weights, GmsmSpec, ShiftDirection,
};
use censorbounds::simulation::{generate, oracle_nuisances, x_grid, Design, Family, OracleNuisances, Scenario};
use censorbounds::{Arm, BoundPair, Matrix, Subject};
use common::{cli, path_str, read_tree, report, write_trial_csv};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[test]
fn c01_oracle_plugin_reproduces_oracle_bounds() {
    let start = Instant::now();
    let grid = x_grid(EVAL_GRID);
    let mut worst: f64 = 0.0;
    for family in Family::PAPER {
        for xi in [0.2, 0.4, 0.6] {
            let s = Scenario::new(family, Design::Rct, xi, 2000, 0);
            for case in [BoundCase::domain(3.0), BoundCase::Conservative] {
                let model = fit_plugin(OracleNuisances::new(&s), TREATED_VS_CONTROL, case.clone());
                let r = rmse_vs_oracle(&model, &s, &grid, &case).unwrap();
                worst = worst.max(r.joint);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst == 0.0 && secs < 10.0;
    report(1, "oracle plug-in identity", pass, &format!("max RMSE {worst:e}, {secs:.2}s"));
    assert!(pass);
}

#[test]
fn c02_pseudo_outcomes_are_doubly_robust() {
    let start = Instant::now();
    let mut worst_z: f64 = 0.0;
    let mut lines = Vec::new();
    for family in Family::PAPER {
        let s = Scenario::new(family, Design::Rct, 0.4, 100_000, 17);
        let (d, _) = generate(&s).unwrap();
        let t_max = d.t_max();
        let cases = [
            PseudoOutcomeCase::Lower,
            PseudoOutcomeCase::UpperDomain { gamma: 3.0 },
            PseudoOutcomeCase::UpperConservative { t_max },
        ];
        type Perturb = fn(Nuisances) -> Nuisances;
        let perturbations: [(&str, Perturb); 2] = [
            ("pi=0.7", |n| Nuisances { pi: 0.7, ..n }),
            ("nu,xi x1.5", |n| Nuisances { nu0: 1.5 * n.nu0, nu1: 1.5 * n.nu1, xi: 1.5 * n.xi, pi: 0.5 }),
        ];
        for arm in [Arm(0), Arm(1)] {
            for (label, perturb) in perturbations {
                for case in cases {
                    // deviation of each pseudo-outcome from its subject's closed-form bound
                    let diffs: Vec<f64> = d
                        .subjects()
                        .iter()
                        .map(|subj| {
                            let truth = oracle_nuisances(&s, subj.x[0], arm);
                            let target = match case {
                                PseudoOutcomeCase::Lower => capo_lower(truth.nu0, truth.nu1, truth.xi),
                                PseudoOutcomeCase::UpperDomain { gamma } => {
                                    capo_upper_domain_value(truth.nu0, truth.nu1, truth.xi, gamma)
                                }
                                PseudoOutcomeCase::UpperConservative { t_max } => {
                                    capo_upper_conservative(truth.nu0, truth.xi, t_max)
                                }
                            };
                            pseudo_outcome(subj, &perturb(truth), arm, case) - target
                        })
                        .collect();
                    let n = diffs.len() as f64;
                    let mean = diffs.iter().sum::<f64>() / n;
                    let sd = (diffs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                    let z = mean / (sd / n.sqrt());
                    worst_z = worst_z.max(z.abs());
                    if z.abs() >= 3.0 {
                        lines.push(format!("{} arm {} {label} {case:?}: z = {z:.2}", family.name(), arm.0));
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = lines.is_empty() && secs < 120.0;
    report(2, "pseudo-outcome consistency", pass, &format!("max |z| {worst_z:.2} over 36 checks, {secs:.1}s"));
    assert!(pass, "{lines:?}");
}

fn sin_plan(xis: Vec<f64>, sizes: Vec<usize>, cases: Vec<CaseSpec>, learners: Vec<LearnerChoice>) -> BenchmarkPlan {
    BenchmarkPlan {
        families: vec![Family::Sin],
        xis,
        sizes,
        design: Design::Rct,
        seeds: SEEDS.to_vec(),
        cases,
        learners,
        grid: EVAL_GRID,
    }
}

#[test]
fn c03_survb_beats_plugin() {
    let start = Instant::now();
    let plan = sin_plan(
        vec![0.2, 0.4, 0.6],
        vec![2000],
        vec![CaseSpec::domain(3.0), CaseSpec::conservative()],
        vec![LearnerChoice::Survb, LearnerChoice::Plugin],
    );
    let rep = run_benchmark(&plan).unwrap();
    let mut wins = 0;
    let mut cells = Vec::new();
    for case in &plan.cases {
        for &xi in &plan.xis {
            let sb = rep.cell(Family::Sin, xi, 2000, &case.name, LearnerChoice::Survb).unwrap().rmse_mean;
            let pi = rep.cell(Family::Sin, xi, 2000, &case.name, LearnerChoice::Plugin).unwrap().rmse_mean;
            wins += usize::from(sb < pi);
            cells.push(format!("{} {xi}: {sb:.2} vs {pi:.2}", case.name));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = wins == cells.len() && secs < 600.0;
    report(
        3,
        "SurvB RMSE below plug-in",
        pass,
        &format!("{wins}/{} cells [{}], {secs:.0}s", cells.len(), cells.join("; ")),
    );
    assert!(pass);
}

#[test]
fn c04_conservative_width_tracks_oracle() {
    let start = Instant::now();
    let rows =
        width_sweep(&CaseSpec::conservative(), &[0.1, 0.2, 0.4, 0.6], Family::Sin, 2000, &SEEDS, LearnerChoice::Survb)
            .unwrap();
    let rows: Vec<_> = rows.into_iter().filter(|r| r.xi > 0.0).collect();
    let increasing = rows.windows(2).all(|w| w[1].estimated_width > w[0].estimated_width);
    let errors: Vec<f64> = rows.iter().map(|r| (r.estimated_width - r.oracle_width).abs() / r.oracle_width).collect();
    let secs = start.elapsed().as_secs_f64();
    let pass = increasing && errors.iter().all(|&e| e < 0.15) && secs < 600.0;
    let detail: Vec<String> = rows
        .iter()
        .zip(&errors)
        .map(|(r, e)| format!("{}: {:.1} vs {:.1} ({:.1}%)", r.xi, r.estimated_width, r.oracle_width, 100.0 * e))
        .collect();
    report(4, "width grows with censoring", pass, &format!("{}, {secs:.0}s", detail.join("; ")));
    assert!(pass);
}

#[test]
fn c05_survb_error_shrinks_with_n() {
    let start = Instant::now();
    let sizes = vec![500, 2000, 10000];
    let plan = sin_plan(vec![0.4], sizes.clone(), vec![CaseSpec::conservative()], vec![LearnerChoice::Survb]);
    let rep = run_benchmark(&plan).unwrap();
    let rmse: Vec<f64> = sizes
        .iter()
        .map(|&n| rep.cell(Family::Sin, 0.4, n, "conservative", LearnerChoice::Survb).unwrap().rmse_mean)
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let pass = rmse.windows(2).all(|w| w[1] < w[0]) && secs < 1200.0;
    report(5, "SurvB RMSE decreases in n", pass, &format!("n = 500/2000/10000: {rmse:.3?}, {secs:.0}s"));
    assert!(pass);
}

#[test]
fn c06_off_arm_subjects_collapse_to_plugin() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let draw = |rng: &mut ChaCha8Rng| Nuisances {
            nu0: rng.random_range(0.0..200.0),
            nu1: rng.random_range(0.0..200.0),
            xi: rng.random_range(0.0..1.0),
            pi: rng.random_range(0.01..1.0),
        };
        let (n1, n2) = (draw(&mut rng), draw(&mut rng));
        let upper = |rng: &mut ChaCha8Rng| {
            if rng.random::<bool>() {
                PseudoOutcomeCase::UpperDomain { gamma: rng.random_range(0.0..50.0) }
            } else {
                PseudoOutcomeCase::UpperConservative { t_max: rng.random_range(200.0..400.0) }
            }
        };
        let (u1, u2) = (upper(&mut rng), upper(&mut rng));
        let subject = Subject {
            id: "s".into(),
            x: vec![rng.random_range(0.0..100.0)],
            treatment: f64::from(rng.random_range(2..6u32)),
            time: rng.random_range(0.0..300.0),
            censored: rng.random(),
        };
        let capo = |n: &Nuisances, u: PseudoOutcomeCase| {
            let upper = match u {
                PseudoOutcomeCase::UpperDomain { gamma } => capo_upper_domain_value(n.nu0, n.nu1, n.xi, gamma),
                PseudoOutcomeCase::UpperConservative { t_max } => capo_upper_conservative(n.nu0, n.xi, t_max),
                PseudoOutcomeCase::Lower => unreachable!(),
            };
            BoundPair::new(capo_lower(n.nu0, n.nu1, n.xi), upper)
        };
        let expected = cate_bounds(capo(&n1, u1), capo(&n2, u2));
        let (lo, up) = pseudo_cate(
            &subject,
            &ArmInput { arm: Arm(0), nuisances: n1, upper: u1 },
            &ArmInput { arm: Arm(1), nuisances: n2, upper: u2 },
        )
        .unwrap();
        worst = worst.max((lo - expected.lower).abs()).max((up - expected.upper).abs());
    }
    let pass = worst <= 1e-12;
    report(6, "off-arm collapse", pass, &format!("max deviation {worst:e} over 10^4 configurations"));
    assert!(pass);
}

#[test]
fn c07_gmsm_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();

    // Γ = 1 leaves every cell at its plug-in bounds
    for _ in 0..100 {
        let n = rng.random_range(10..80);
        let lower: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
        let upper: Vec<f64> = lower.iter().map(|v| v + rng.random_range(0.0..30.0)).collect();
        let c = gmsm_bound_adjustment(&lower, &upper, rng.random_range(0.05..0.95), GmsmSpec { gamma: 1.0 }).unwrap();
        if c.widened != c.plugin {
            failures.push(format!("collapse: {:?} vs {:?}", c.widened, c.plugin));
        }
    }

    // increasing Γ gives nested intervals
    for cell in 0..100 {
        let n = rng.random_range(10..120);
        let lower: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..150.0)).collect();
        let upper: Vec<f64> = lower.iter().map(|v| if rng.random::<bool>() { *v } else { v + 3.0 }).collect();
        let pi = rng.random_range(0.05..0.95);
        let mut gammas: Vec<f64> = (0..6).map(|_| rng.random_range(1.0..8.0)).collect();
        gammas.push(1.0);
        gammas.sort_by(f64::total_cmp);
        let cells: Vec<BoundPair> = gammas
            .iter()
            .map(|&g| gmsm_bound_adjustment(&lower, &upper, pi, GmsmSpec { gamma: g }).unwrap().widened)
            .collect();
        if !cells.windows(2).all(|w| w[1].contains(&w[0])) {
            failures.push(format!("nesting broken in cell {cell}"));
        }
    }

    // four equally likely points 1..4 at Γ = 2, π = 0.5: s⁻ = 2/3, s⁺ = 4/3, c⁺ = 1/2
    let w = gmsm_weights(2.0, 0.5).unwrap();
    let masses =
        gmsm_shift_masses(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4], w.s_minus, w.s_plus, ShiftDirection::Plus).unwrap();
    let oracle = [0.1875, 0.1875, 0.25, 0.375];
    let mass_err = masses.iter().zip(oracle).map(|(m, o)| (m - o).abs()).fold(0.0, f64::max);
    let e =
        gmsm_shift_expectation(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4], w.s_minus, w.s_plus, ShiftDirection::Plus).unwrap();
    if mass_err > 1e-12 || (e - 2.8125).abs() > 1e-12 {
        failures.push(format!("4-point example: masses {masses:?}, expectation {e}"));
    }

    let pass = failures.is_empty();
    report(
        7,
        "GMSM collapse, nesting, 4-point shift",
        pass,
        &format!("{} failures; 4-point max error {mass_err:e}", failures.len()),
    );
    assert!(pass, "{failures:?}");
}

#[test]
fn c08_subgroup_tree_recovers_planted_split() {
    let mut thresholds = Vec::new();
    for seed in SEEDS {
        let s = Scenario::new(Family::Planted, Design::Rct, 0.4, 2000, seed);
        let (d, _) = generate(&s).unwrap();
        let model = PipelineConfig::for_scenario(LearnerChoice::Survb, &s)
            .fit(&d, TREATED_VS_CONTROL, &BoundCase::domain(3.0))
            .unwrap();
        let x = d.covariates();
        let lb: Vec<f64> = model.predict_bounds(&x).unwrap().iter().map(|b| b.lower).collect();
        let tree = subgroup_tree(&x, &lb, 1, 2).unwrap();
        thresholds.push(tree.root.split.as_ref().map_or(f64::NAN, |s| s.threshold));
    }
    let hits = thresholds.iter().filter(|t| (65.0..=75.0).contains(*t)).count();

    let x = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![0.0], vec![0.0]]);
    let tree = subgroup_tree(&x, &[1.0, 1.0, -1.0, -1.0], 2, 2).unwrap();
    let split = tree.root.split.as_ref().unwrap();
    let enumeration_ok = split.threshold == 0.5
        && split.right.n == 2
        && split.right.n_positive == 2
        && split.left.n_positive == 0
        && tree.best_leaf().rows == vec![0, 1];

    let pass = hits >= 4 && enumeration_ok;
    report(
        8,
        "planted subgroup recovery",
        pass,
        &format!("{hits}/5 thresholds in [65, 75] {thresholds:.2?}; 4-subject case ok: {enumeration_ok}"),
    );
    assert!(pass);
}

#[test]
fn c09_curves_from_fuzzed_bounds_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = Vec::new();
    for file in 0..50 {
        let n = rng.random_range(1..400);
        let scale = 10f64.powf(rng.random_range(-1.0..3.0));
        let mut text = String::from("id,x,lower,upper\n");
        for i in 0..n {
            let a = rng.random_range(-0.5..1.0) * scale;
            let b = a + rng.random_range(-0.3..1.0) * scale;
            let cell = |rng: &mut ChaCha8Rng, v: f64| match rng.random_range(0..40) {
                0 => String::new(),
                1 => "NaN".into(),
                _ => format!("{v}"),
            };
            let (l, u) = (cell(&mut rng, a), cell(&mut rng, b));
            text.push_str(&format!("{i},{},{l},{u}\n", rng.random::<f64>()));
        }
        let path = dir.path().join(format!("bounds_{file}.csv"));
        std::fs::write(&path, text).unwrap();

        let (pairs, _) = read_bound_pairs(&path, "lower", "upper").unwrap();
        let (lo, hi) =
            pairs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.lower), h.max(p.upper)));
        let (lo, hi) = if lo.is_finite() { (lo - 1.0, hi + 1.0) } else { (0.0, 1.0) };
        let grid: Vec<f64> = (0..=100).map(|i| lo + (hi - lo) * i as f64 / 100.0).collect();
        let c = bound_survival_curves(&pairs, &grid);
        let in_unit = c.lower.iter().chain(&c.upper).all(|p| (0.0..=1.0).contains(p));
        let monotone = c.lower.windows(2).all(|w| w[1] <= w[0]) && c.upper.windows(2).all(|w| w[1] <= w[0]);
        let dominates = c.upper.iter().zip(&c.lower).all(|(u, l)| u >= l);
        if !(in_unit && monotone && dominates) {
            violations.push(file);
        }
    }
    let pass = violations.is_empty();
    report(9, "curve invariants", pass, &format!("{} of 50 fuzzed files violate", violations.len()));
    assert!(pass, "{violations:?}");
}

#[test]
fn c10_replay_is_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| path_str(&dir.path().join(name));
    let trial = path_str(&write_trial_csv(dir.path(), 10));
    let runs: Vec<(&str, Vec<String>)> = vec![
        (
            "sim",
            vec![
                "simulate".into(),
                "--scenario".into(),
                "sin".into(),
                "--xi".into(),
                "0.4".into(),
                "--n".into(),
                "600".into(),
                "--seed".into(),
                "3".into(),
            ],
        ),
        (
            "fit",
            vec![
                "fit".into(),
                "--data".into(),
                p("sim/data.csv"),
                "--case".into(),
                "domain".into(),
                "--gamma".into(),
                "3".into(),
                "--seed".into(),
                "3".into(),
            ],
        ),
        (
            "eval",
            vec![
                "evaluate".into(),
                "--xi".into(),
                "0.4".into(),
                "--n".into(),
                "500".into(),
                "--seeds".into(),
                "0,1".into(),
                "--grid".into(),
                "50".into(),
            ],
        ),
        (
            "audit",
            vec![
                "audit".into(),
                "--data".into(),
                trial.clone(),
                "--bootstrap".into(),
                "200".into(),
                "--seed".into(),
                "5".into(),
            ],
        ),
        (
            "gmsm",
            vec![
                "gmsm".into(),
                "--data".into(),
                trial,
                "--gamma-confounding".into(),
                "1,2,4".into(),
                "--cells".into(),
                "age:30,55,85".into(),
            ],
        ),
    ];
    let mut mismatches = Vec::new();
    let mut files = 0;
    for (name, args) in runs {
        let mut first: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = p(name);
        first.extend(["--out", out.as_str()]);
        assert_eq!(cli(&first), 0, "{name} failed");
        let replay_dir = p(&format!("{name}_replay"));
        let config = path_str(&dir.path().join(name).join("effective_config.json"));
        assert_eq!(cli(&["replay", &config, "--out", &replay_dir]), 0, "{name} replay failed");
        let (a, b) = (read_tree(&dir.path().join(name)), read_tree(&dir.path().join(format!("{name}_replay"))));
        files += a.len();
        if a != b {
            mismatches.push(name);
        }
    }
    let pass = mismatches.is_empty();
    report(
        10,
        "replay reproducibility",
        pass,
        &format!("{files} files across 5 subcommands, mismatched runs {mismatches:?}"),
    );
    assert!(pass);
}
