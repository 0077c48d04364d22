mod common;

use common::{cluster_se, hc1_se, normal_equations};
use frontier::panel::{BankType, ObsKey, PanelDataset};
use frontier::regress::{
    first_difference_regression, ols, panel_regression, ClusterBy, Covariance,
    DependentTransform, FixedEffects, OlsOptions, RegressionSpec,
};
use frontier::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Panel of `banks` firms over `years` with columns q, x1, x2 and a firm effect in q.
fn toy_panel(banks: usize, years: i32, seed: u64) -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    let mut keys = Vec::new();
    let mut types = Vec::new();
    let (mut q, mut x1, mut x2) = (Vec::new(), Vec::new(), Vec::new());
    for b in 0..banks {
        let alpha: f64 = z.sample(&mut rng);
        let shock: f64 = z.sample(&mut rng);
        for t in 0..years {
            let a = alpha + z.sample(&mut rng);
            let c = 0.5 * alpha + z.sample(&mut rng);
            keys.push(ObsKey { bank_id: format!("B{b:02}"), year: 2010 + t });
            types.push(Some(BankType::ALL[b % 3]));
            x1.push(Some(a));
            x2.push(Some(c));
            q.push(Some(1.0 + 0.5 * a - 0.3 * c + 2.0 * alpha + 0.5 * shock * z.sample(&mut rng)));
        }
    }
    let mut cols = BTreeMap::new();
    cols.insert("q".to_string(), q);
    cols.insert("x1".to_string(), x1);
    cols.insert("x2".to_string(), x2);
    PanelDataset::new(keys, types, cols).unwrap()
}

fn spec(fe: FixedEffects, intercept: bool) -> RegressionSpec {
    RegressionSpec {
        label: "t".into(),
        dependent: "q".into(),
        transform: DependentTransform::Level,
        efficiency: names(&["x1"]),
        firm_controls: names(&["x2"]),
        macro_controls: Vec::new(),
        fixed_effects: fe,
        intercept,
        cluster_by: ClusterBy::Firm,
        period: None,
    }
}

fn column(panel: &PanelDataset, name: &str) -> Vec<f64> {
    panel.column(name).unwrap().iter().map(|v| v.unwrap()).collect()
}

#[test]
fn five_point_instance_matches_normal_equations() {
    let y = [1.0, 3.0, 2.0, 5.0, 4.0];
    let cols = vec![vec![1.0; 5], vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![2.0, -1.0, 0.5, 1.0, 3.0]];
    let fit = ols(&y, &cols, &names(&["c", "a", "b"]), &OlsOptions::default()).unwrap();
    let oracle = normal_equations(&y, &cols);
    let rss: f64 = oracle.resid.iter().map(|r| r * r).sum();
    for (j, c) in fit.coefficients.iter().enumerate() {
        assert!((c.estimate - oracle.beta[j]).abs() < 1e-10);
        let se = (oracle.xtx_inv[j][j] * rss / 2.0).sqrt();
        assert!((c.se - se).abs() < 1e-10);
    }
}

proptest! {
    #[test]
    fn random_five_point_instances(
        y in prop::collection::vec(-10.0f64..10.0, 5),
        a in prop::collection::vec(-5.0f64..5.0, 5),
        b in prop::collection::vec(-5.0f64..5.0, 5),
    ) {
        let cols = vec![vec![1.0; 5], a, b];
        let fit = ols(&y, &cols, &names(&["c", "a", "b"]), &OlsOptions::default());
        prop_assume!(fit.is_ok());
        let fit = fit.unwrap();
        let oracle = normal_equations(&y, &cols);
        for (c, o) in fit.coefficients.iter().zip(&oracle.beta) {
            prop_assert!((c.estimate - o).abs() < 1e-10 * (1.0 + o.abs()), "{} vs {}", c.estimate, o);
        }
    }

    #[test]
    fn rescaling_a_regressor_rescales_its_coefficient(k in 0.01f64..100.0, seed in 0u64..500) {
        let panel = toy_panel(8, 6, seed);
        let scaled = panel
            .with_column("x1", column(&panel, "x1").iter().map(|v| Some(v * k)).collect())
            .unwrap();
        let a = panel_regression(&spec(FixedEffects::None, true), &panel).unwrap();
        let b = panel_regression(&spec(FixedEffects::None, true), &scaled).unwrap();
        let (ca, cb) = (a.coefficient("x1").unwrap(), b.coefficient("x1").unwrap());
        prop_assert!((ca.estimate - cb.estimate * k).abs() < 1e-9 * (1.0 + ca.estimate.abs()));
        prop_assert!((ca.t_stat - cb.t_stat).abs() < 1e-7 * (1.0 + ca.t_stat.abs()));
        prop_assert!((a.r_squared - b.r_squared).abs() < 1e-10);
    }
}

#[test]
fn clustered_errors_match_brute_force_sandwich() {
    let panel = toy_panel(10, 5, 1);
    let r = panel_regression(&spec(FixedEffects::None, true), &panel).unwrap();
    let y = column(&panel, "q");
    let cols = vec![column(&panel, "x1"), column(&panel, "x2"), vec![1.0; y.len()]];
    let labels: Vec<String> = panel.keys().iter().map(|k| k.bank_id.clone()).collect();
    let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
    let oracle = normal_equations(&y, &cols);
    let se = cluster_se(&cols, &oracle, &labels, 3);
    assert_eq!(r.clusters, Some(10));
    assert_eq!(r.covariance, Covariance::Cluster);
    for (j, c) in r.coefficients.iter().enumerate() {
        assert!((c.estimate - oracle.beta[j]).abs() < 1e-10);
        assert!((c.se - se[j]).abs() < 1e-10, "{}: {} vs {}", c.name, c.se, se[j]);
    }
}

#[test]
fn singleton_clusters_reduce_to_hc1() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 40;
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| 1.0 + v + v.abs() * rng.random_range(-1.0..1.0)).collect();
    let cols = vec![x, vec![1.0; n]];
    let labels: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
    let nm = names(&["x", "_cons"]);
    let clustered = ols(
        &y,
        &cols,
        &nm,
        &OlsOptions { clusters: Some(labels), ..Default::default() },
    )
    .unwrap();
    let hc1 = ols(&y, &cols, &nm, &OlsOptions { covariance: Some(Covariance::Hc1), ..Default::default() })
        .unwrap();
    let oracle = hc1_se(&cols, &normal_equations(&y, &cols), 2);
    for j in 0..2 {
        assert!((clustered.coefficients[j].se - hc1.coefficients[j].se).abs() < 1e-8);
        assert!((hc1.coefficients[j].se - oracle[j]).abs() < 1e-10);
    }
}

#[test]
fn within_estimator_equals_firm_dummies() {
    let panel = toy_panel(7, 5, 3);
    let within = panel_regression(&spec(FixedEffects::Firm, false), &panel).unwrap();
    let y = column(&panel, "q");
    let banks: Vec<String> = panel.keys().iter().map(|k| k.bank_id.clone()).collect();
    let mut cols = vec![column(&panel, "x1"), column(&panel, "x2")];
    let mut nm = names(&["x1", "x2"]);
    for b in panel.bank_ids() {
        cols.push(banks.iter().map(|v| f64::from(u8::from(*v == b))).collect());
        nm.push(b);
    }
    let dummies = ols(
        &y,
        &cols,
        &nm,
        &OlsOptions { clusters: Some(banks.clone()), ..Default::default() },
    )
    .unwrap();
    assert_eq!(within.k, dummies.k);
    for name in ["x1", "x2"] {
        let (a, b) = (within.coefficient(name).unwrap(), dummies.coefficient(name).unwrap());
        assert!((a.estimate - b.estimate).abs() < 1e-8);
        assert!((a.se - b.se).abs() < 1e-8, "{name}: {} vs {}", a.se, b.se);
    }
}

#[test]
fn type_dummies_drop_a_base_level_and_vanish_under_firm_effects() {
    let panel = toy_panel(9, 4, 4);
    let typed = panel_regression(&spec(FixedEffects::Type, true), &panel).unwrap();
    let dummy_names: Vec<&str> = typed
        .coefficients
        .iter()
        .map(|c| c.name.as_str())
        .filter(|n| n.starts_with("type_"))
        .collect();
    assert_eq!(dummy_names.len(), 2);
    let both = panel_regression(&spec(FixedEffects::TypeAndFirm, false), &panel).unwrap();
    assert!(both.coefficients.iter().all(|c| !c.name.starts_with("type_")));
    assert_eq!(both.warnings.len(), 2);
    let firm = panel_regression(&spec(FixedEffects::Firm, false), &panel).unwrap();
    assert_eq!(both.coefficients, firm.coefficients);
}

#[test]
fn lead_drops_each_bank_last_year() {
    let panel = toy_panel(5, 4, 5);
    let mut s = spec(FixedEffects::None, true);
    s.transform = DependentTransform::Lead;
    let r = panel_regression(&s, &panel).unwrap();
    assert_eq!(r.n, 5 * 3);
    assert_eq!(r.dependent, "lead_q");
}

#[test]
fn gap_years_break_leads_and_differences() {
    let panel = toy_panel(4, 6, 6);
    let keep: Vec<usize> = (0..panel.len()).filter(|&i| panel.keys()[i].year != 2012).collect();
    let keys: Vec<ObsKey> = keep.iter().map(|&i| panel.keys()[i].clone()).collect();
    let types = keep.iter().map(|&i| panel.bank_types()[i]).collect();
    let mut cols = BTreeMap::new();
    for c in ["q", "x1", "x2"] {
        let col = panel.column(c).unwrap();
        cols.insert(c.to_string(), keep.iter().map(|&i| col[i]).collect());
    }
    let gappy = PanelDataset::new(keys, types, cols).unwrap();

    let mut lead = spec(FixedEffects::None, true);
    lead.transform = DependentTransform::Lead;
    // Years 2010, 2011, 2013, 2014, 2015: leads exist from 2010, 2013 and 2014.
    assert_eq!(panel_regression(&lead, &gappy).unwrap().n, 4 * 3);

    let mut diff = spec(FixedEffects::None, true);
    diff.transform = DependentTransform::Diff;
    diff.efficiency = names(&["diff_x1"]);
    diff.period = Some((2010, 2015));
    // Differences exist for 2011, 2014 and 2015.
    assert_eq!(first_difference_regression(&diff, &gappy).unwrap().n, 4 * 3);
}

#[test]
fn first_difference_window_is_applied_before_differencing() {
    let panel = toy_panel(6, 6, 7);
    let mut s = spec(FixedEffects::None, true);
    s.efficiency = names(&["diff_x1"]);
    s.firm_controls.clear();
    s.period = Some((2012, 2015));
    let r = first_difference_regression(&s, &panel).unwrap();
    assert_eq!(r.n, 6 * 3);
    assert_eq!(r.dependent, "diff_q");
    assert_eq!(r.clusters, Some(6));
}

#[test]
fn collinear_regressors_are_named() {
    let y = [1.0, 2.0, 3.0, 5.0];
    let a = vec![1.0, 2.0, 3.0, 4.0];
    let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
    match ols(&y, &[a, b], &names(&["a", "b"]), &OlsOptions::default()) {
        Err(Error::Collinear(v)) => assert!(!v.is_empty()),
        other => panic!("{other:?}"),
    }
}

#[test]
fn constant_dependent_flags_r_squared() {
    let y = [2.0; 6];
    let cols = vec![vec![1.0; 6], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]];
    let r = ols(&y, &cols, &names(&["c", "x"]), &OlsOptions::default()).unwrap();
    assert!(r.degenerate_r_squared);
    assert_eq!(r.r_squared, 0.0);
}

#[test]
fn clustered_intervals_cover_the_true_slope() {
    let z = Normal::new(0.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let reps = 400;
    let mut covered = 0;
    for _ in 0..reps {
        let (g, t) = (30, 6);
        let mut y = Vec::new();
        let mut x = Vec::new();
        let mut labels = Vec::new();
        for c in 0..g {
            let xc: f64 = z.sample(&mut rng);
            let uc: f64 = z.sample(&mut rng);
            for _ in 0..t {
                let xi = xc + z.sample(&mut rng);
                x.push(xi);
                y.push(1.0 + 0.5 * xi + uc + z.sample(&mut rng));
                labels.push(format!("g{c}"));
            }
        }
        let n = y.len();
        let r = ols(
            &y,
            &[x, vec![1.0; n]],
            &names(&["x", "_cons"]),
            &OlsOptions { clusters: Some(labels), ..Default::default() },
        )
        .unwrap();
        let c = &r.coefficients[0];
        let crit = 2.045; // t(29), two-sided 95%
        if (c.estimate - 0.5).abs() <= crit * c.se {
            covered += 1;
        }
    }
    let rate = covered as f64 / reps as f64;
    assert!((0.9..=0.985).contains(&rate), "coverage {rate}");
}

#[test]
fn non_finite_regressor_is_an_error() {
    let y = [1.0, 2.0, 3.0, 5.0];
    let a = vec![1.0, f64::INFINITY, 3.0, 4.0];
    match ols(&y, &[a], &names(&["a"]), &OlsOptions::default()) {
        Err(Error::Data(msg)) => assert!(msg.contains("`a`"), "{msg}"),
        other => panic!("{other:?}"),
    }
}
