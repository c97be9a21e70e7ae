//! Property tests for invariants that hold across inputs.

use censorbounds::analysis::{bootstrap_subgroup, bound_survival_curves, subgroup_tree};
use censorbounds::bounds::{
    capo_lower, capo_upper_conservative, capo_upper_domain_value, cate_bounds, pseudo_cate, repair, ArmInput,
    BoundCase, PseudoOutcomeCase, Target,
};
use censorbounds::data::{load_csv, save_csv, CsvSchema, StatusConvention};
use censorbounds::models::{fit_classifier, fit_regressor, ForestParams, LearnerKind};
use censorbounds::nuisance::{assign_folds, fit_nuisances, NuisanceOptions, Nuisances, PropensityMode};
use censorbounds::sensitivity::{gmsm_bound_adjustment, gmsm_shift_masses, gmsm_weights, GmsmSpec, ShiftDirection};
use censorbounds::simulation::{generate, oracle_bounds, x_grid, Design, Family, Scenario};
use censorbounds::{Arm, BoundPair, Dataset, LearnerSpec, Matrix, Subject, TreatmentMode};
use proptest::prelude::*;

fn subject_strategy(dim: usize) -> impl Strategy<Value = Subject> {
    (prop::collection::vec(-1e3..1e3f64, dim), 0..3u32, 0.01..500.0f64, any::<bool>())
        .prop_map(|(x, a, t, c)| Subject { id: String::new(), x, treatment: f64::from(a), time: t, censored: c })
}

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    (1..4usize).prop_flat_map(|dim| {
        prop::collection::vec(subject_strategy(dim), 1..60).prop_map(move |mut subjects| {
            for (i, s) in subjects.iter_mut().enumerate() {
                s.id = format!("s{i}");
            }
            let names = (0..dim).map(|j| format!("x{j}")).collect();
            Dataset::new(subjects, names, Some(600.0), TreatmentMode::Discrete).unwrap()
        })
    })
}

fn nuisances() -> impl Strategy<Value = Nuisances> {
    (0.0..200.0f64, 0.0..200.0f64, 0.0..1.0f64, 0.01..1.0f64).prop_map(|(nu0, nu1, xi, pi)| Nuisances {
        nu0,
        nu1,
        xi,
        pi,
    })
}

fn pair() -> impl Strategy<Value = BoundPair> {
    (-100.0..100.0f64, 0.0..50.0f64).prop_map(|(l, w)| BoundPair::new(l, l + w))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_identity(d in dataset_strategy(), event in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let schema = CsvSchema {
            id_col: Some("id".into()),
            t_max: Some(600.0),
            convention: if event { StatusConvention::Event } else { StatusConvention::Censored },
            status_col: "status".into(),
            ..CsvSchema::default()
        };
        save_csv(&d, &path, &schema).unwrap();
        let back = load_csv(&path, &schema).unwrap();
        prop_assert_eq!(back.len(), d.len());
        prop_assert_eq!(back.covariate_names(), d.covariate_names());
        for (a, b) in d.subjects().iter().zip(back.subjects()) {
            prop_assert_eq!(&a.id, &b.id);
            prop_assert_eq!(a.censored, b.censored);
            prop_assert!(b.delta() <= 1);
            prop_assert!((a.time - b.time).abs() <= 1e-12 * a.time.abs());
            prop_assert!((a.treatment - b.treatment).abs() == 0.0);
            for (u, v) in a.x.iter().zip(&b.x) {
                prop_assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
            }
        }
    }

    #[test]
    fn cate_bounds_are_antisymmetric(a in pair(), b in pair()) {
        let ab = cate_bounds(a, b);
        let ba = cate_bounds(b, a);
        prop_assert_eq!(ab.lower, -ba.upper);
        prop_assert_eq!(ab.upper, -ba.lower);
        prop_assert!(ab.lower <= ab.upper);
    }

    #[test]
    fn cate_pseudo_outcomes_are_antisymmetric(
        n1 in nuisances(),
        n2 in nuisances(),
        gamma in 0.0..20.0f64,
        arm in 0..3u32,
        t in 0.0..300.0f64,
        censored in any::<bool>(),
    ) {
        let s = Subject { id: "s".into(), x: vec![], treatment: f64::from(arm), time: t, censored };
        let upper = PseudoOutcomeCase::UpperDomain { gamma };
        let a1 = ArmInput { arm: Arm(0), nuisances: n1, upper };
        let a2 = ArmInput { arm: Arm(1), nuisances: n2, upper };
        let (lo, up) = pseudo_cate(&s, &a1, &a2).unwrap();
        let (lo_r, up_r) = pseudo_cate(&s, &a2, &a1).unwrap();
        prop_assert_eq!(lo, -up_r);
        prop_assert_eq!(up, -lo_r);
    }

    #[test]
    fn capo_bounds_are_ordered(n in nuisances(), gamma in 0.0..50.0f64, g2 in 0.0..50.0f64) {
        let t_max = 400.0;
        let lo = capo_lower(n.nu0, n.nu1, n.xi);
        let dom = capo_upper_domain_value(n.nu0, n.nu1, n.xi, gamma);
        prop_assert!(lo <= dom);
        prop_assert!(lo <= capo_upper_conservative(n.nu0, n.xi, t_max));
        // linear in γ with slope ξ
        let slope = (capo_upper_domain_value(n.nu0, n.nu1, n.xi, g2) - dom) / (g2 - gamma);
        if (g2 - gamma).abs() > 1e-3 {
            prop_assert!((slope - n.xi).abs() < 1e-9);
        }
    }

    #[test]
    fn repair_yields_ordered_pairs_in_range(l in -500.0..500.0f64, u in -500.0..500.0f64) {
        let (p, crossed) = repair(l, u, 0.0, 300.0);
        prop_assert!(0.0 <= p.lower && p.lower <= p.upper && p.upper <= 300.0);
        prop_assert_eq!(crossed, l.clamp(0.0, 300.0) > u.clamp(0.0, 300.0));
    }

    #[test]
    fn gmsm_weights_straddle_one(gamma in 1.0..20.0f64, pi in 0.01..0.99f64) {
        let w = gmsm_weights(gamma, pi).unwrap();
        prop_assert!(w.s_minus <= 1.0 + 1e-15 && 1.0 - 1e-15 <= w.s_plus);
        prop_assert_eq!(w.is_degenerate(), gamma == 1.0);
    }

    #[test]
    fn gmsm_shift_preserves_mass(
        values in prop::collection::vec(0.0..100.0f64, 1..50),
        gamma in 1.0..10.0f64,
        pi in 0.01..0.99f64,
        plus in any::<bool>(),
    ) {
        let w = gmsm_weights(gamma, pi).unwrap();
        let weights: Vec<f64> = (0..values.len()).map(|i| 1.0 + (i % 3) as f64).collect();
        let dir = if plus { ShiftDirection::Plus } else { ShiftDirection::Minus };
        let m = gmsm_shift_masses(&values, &weights, w.s_minus, w.s_plus, dir).unwrap();
        prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(m.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn gmsm_bounds_nest_in_gamma(
        values in prop::collection::vec(0.0..100.0f64, 10..60),
        extra in 0.0..20.0f64,
        pi in 0.05..0.95f64,
        g1 in 1.0..5.0f64,
        dg in 0.0..5.0f64,
    ) {
        let upper: Vec<f64> = values.iter().enumerate().map(|(i, v)| if i % 2 == 0 { v + extra } else { *v }).collect();
        let small = gmsm_bound_adjustment(&values, &upper, pi, GmsmSpec { gamma: g1 }).unwrap();
        let large = gmsm_bound_adjustment(&values, &upper, pi, GmsmSpec { gamma: g1 + dg }).unwrap();
        prop_assert!(small.widened.contains(&small.plugin));
        prop_assert!(large.widened.contains(&small.widened));
    }

    #[test]
    fn curves_are_monotone_and_ordered(
        pairs in prop::collection::vec((-50.0..200.0f64, -50.0..200.0f64), 1..100),
        grid in prop::collection::vec(-100.0..300.0f64, 1..60),
    ) {
        let bounds: Vec<BoundPair> = pairs.iter().map(|&(a, b)| BoundPair::new(a.min(b), a.max(b))).collect();
        let mut grid = grid;
        grid.sort_by(f64::total_cmp);
        let c = bound_survival_curves(&bounds, &grid);
        prop_assert!(c.lower.iter().chain(&c.upper).all(|p| (0.0..=1.0).contains(p)));
        prop_assert!(c.lower.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(c.upper.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(c.upper.iter().zip(&c.lower).all(|(u, l)| u >= l));
        let below_all = bounds.iter().map(|b| b.lower).fold(f64::INFINITY, f64::min) - 1.0;
        let start = bound_survival_curves(&bounds, &[below_all]);
        prop_assert_eq!((start.lower[0], start.upper[0]), (1.0, 1.0));
    }

    #[test]
    fn subgroup_tree_ignores_monotone_transforms(
        rows in prop::collection::vec((0..40i32, 0..40i32, -5..5i32), 4..80),
        depth in 1..3usize,
        min_leaf in 1..4usize,
    ) {
        let x: Vec<Vec<f64>> = rows.iter().map(|&(a, b, _)| vec![f64::from(a), f64::from(b)]).collect();
        let lb: Vec<f64> = rows.iter().map(|&(_, _, v)| f64::from(v)).collect();
        let moved: Vec<Vec<f64>> = x.iter().map(|r| vec![(r[0] / 10.0).exp(), 3.0 * r[1] - 7.0]).collect();
        let t1 = subgroup_tree(&Matrix::from_rows(&x), &lb, depth, min_leaf).unwrap();
        let t2 = subgroup_tree(&Matrix::from_rows(&moved), &lb, depth, min_leaf).unwrap();
        let sets = |t: &censorbounds::analysis::SubgroupTree| -> Vec<Vec<usize>> { t.leaves().into_iter().map(|l| l.rows).collect() };
        prop_assert_eq!(sets(&t1), sets(&t2));
        for leaf in t1.leaves() {
            prop_assert!(leaf.n >= min_leaf.min(rows.len()));
        }
    }

    #[test]
    fn bootstrap_is_deterministic(lb in prop::collection::vec(-10.0..10.0f64, 2..80), seed in any::<u64>()) {
        let mask = vec![true; lb.len()];
        let a = bootstrap_subgroup(&lb, &mask, 50, seed).unwrap();
        let b = bootstrap_subgroup(&lb, &mask, 50, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn classifier_probabilities_form_a_distribution(seed in any::<u64>(), n in 20..120usize) {
        let xs: Vec<f64> = (0..n).map(|i| ((i as u64).wrapping_mul(seed | 1) % 97) as f64).collect();
        let labels: Vec<u32> = xs.iter().map(|&v| (v as u32) % 3).collect();
        let clf = fit_classifier(&LearnerSpec::random_forest(seed), &Matrix::column(&xs), &labels).unwrap();
        let p = clf.predict_proba(&Matrix::column(&[0.0, 13.5, 50.0, 200.0])).unwrap();
        for i in 0..p.rows() {
            let row: Vec<f64> = (0..p.cols()).map(|k| p.get(i, k)).collect();
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn forests_without_bootstrap_ignore_row_order(seed in any::<u64>(), shift in 1..50usize) {
        let xs: Vec<f64> = (0..60).map(|i| i as f64 * 0.37).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.sin() + 0.1 * x).collect();
        let params = ForestParams { bootstrap: false, n_trees: 10, ..ForestParams::default() };
        let spec = LearnerSpec { kind: LearnerKind::RandomForest(params), seed };
        let a = fit_regressor(&spec, &Matrix::column(&xs), &ys).unwrap();
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        idx.rotate_left(shift % xs.len());
        let xr: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
        let yr: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
        let b = fit_regressor(&spec, &Matrix::column(&xr), &yr).unwrap();
        let probe = Matrix::column(&[0.5, 7.3, 15.0, 21.9]);
        for (u, v) in a.predict(&probe).unwrap().iter().zip(b.predict(&probe).unwrap()) {
            prop_assert!((u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn folds_partition_and_cover_every_cell(seed in any::<u64>(), k in 2..5usize) {
        let s = Scenario::new(Family::Exponential, Design::Observational, 0.4, 300, seed);
        let (d, _) = generate(&s).unwrap();
        let plan = assign_folds(&d, k, seed).unwrap();
        prop_assert_eq!(plan.fold_sizes().iter().sum::<usize>(), d.len());
        let cells = |rows: &[usize]| -> std::collections::BTreeSet<(u32, bool)> {
            rows.iter().map(|&i| (d.subjects()[i].arm().0, d.subjects()[i].censored)).collect()
        };
        let all = cells(&(0..d.len()).collect::<Vec<_>>());
        for f in 0..k {
            let train = plan.training_rows(f);
            prop_assert!(train.iter().all(|&i| plan.fold_of(i) != f));
            prop_assert_eq!(cells(&train), all.clone());
        }
    }
}

#[test]
fn estimated_nuisances_respect_clipping() {
    let s = Scenario::new(Family::Sin, Design::Observational, 0.6, 800, 3);
    let (d, _) = generate(&s).unwrap();
    let plan = assign_folds(&d, 3, 3).unwrap();
    let opts = NuisanceOptions::new(LearnerSpec::random_forest(3), PropensityMode::Estimate);
    let ns = fit_nuisances(&d, &plan, &opts).unwrap();
    let clip = ns.clip();
    for arm in [0.0, 1.0] {
        for n in ns
            .out_of_fold(&d, arm)
            .unwrap()
            .iter()
            .chain(&ns.evaluate_averaged(&Matrix::column(&x_grid(50)), arm).unwrap())
        {
            assert!(n.pi >= clip.pi - 1e-15 && n.pi <= 1.0 - clip.pi + 1e-15, "{n:?}");
            assert!(n.xi >= 0.0 && n.xi <= 1.0 - clip.xi, "{n:?}");
        }
    }
}

#[test]
fn simulated_censoring_is_consistent() {
    for family in Family::PAPER {
        let s = Scenario::new(family, Design::Rct, 0.4, 3000, 8);
        let (d, latent) = generate(&s).unwrap();
        for (subj, row) in d.subjects().iter().zip(&latent) {
            assert!(subj.time <= row.t_true);
            assert_eq!(subj.time == row.t_true, !subj.censored);
            if subj.censored {
                let ratio = subj.time / row.t_true;
                assert!((0.7..=0.95).contains(&ratio), "{ratio}");
            }
        }
    }
}

#[test]
fn true_cate_lies_inside_oracle_conservative_bounds() {
    let treated = Target::Pair { treated: Arm(1), control: Arm(0) };
    for family in Family::PAPER {
        for xi in [0.2, 0.4, 0.6] {
            let s = Scenario::new(family, Design::Rct, xi, 2000, 0);
            for x in x_grid(100) {
                let b = oracle_bounds(&s, x, treated, &BoundCase::Conservative).unwrap();
                let tau = s.true_cate(x);
                assert!(b.lower <= tau && tau <= b.upper, "{family:?} ξ={xi} x={x}: {tau} ∉ {b:?}");
            }
        }
    }
}
