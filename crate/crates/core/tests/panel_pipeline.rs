mod common;

use common::interpolated_quantile;
use frontier::panel::{
    derive_variables, generate_synthetic, read_panel, regenerate_tobinsq, winsor_bounds,
    winsorize, write_panel, BankType, ObsKey, SyntheticConfig, REQUIRED_COLUMNS,
};
use frontier::Error;
use std::collections::BTreeMap;

fn header() -> String {
    let mut cols = vec!["bank_id", "year", "bank_type"];
    cols.extend(REQUIRED_COLUMNS);
    cols.push("market_equity");
    cols.join(",")
}

fn row(bank: &str, year: i32, ta: f64, be: f64, me: f64) -> String {
    let mut cells = vec![bank.to_string(), year.to_string(), "jsb".to_string()];
    for c in REQUIRED_COLUMNS {
        cells.push(
            match *c {
                "total_assets" => ta,
                "book_equity" => be,
                "net_profit" => 2.0,
                "total_debt" => ta - be,
                "npl" => 1.5,
                "loans" => 50.0,
                "noninterest_income" => 1.0,
                "total_income" => 4.0,
                _ => 3.0,
            }
            .to_string(),
        );
    }
    cells.push(me.to_string());
    cells.join(",")
}

#[test]
fn derived_variables_from_components() {
    let csv = format!(
        "{}\n{}\n{}\n{}\n",
        header(),
        row("A", 2006, 100.0, 10.0, 30.0),
        row("A", 2007, 110.0, 10.0, 30.0),
        row("A", 2009, 121.0, 10.0, 30.0)
    );
    let panel = derive_variables(&read_panel(csv.as_bytes()).unwrap()).unwrap();
    assert!((panel.value(0, "tobinsq").unwrap() - 1.2).abs() < 1e-12);
    assert!((panel.value(0, "size").unwrap() - 100f64.ln()).abs() < 1e-12);
    assert!((panel.value(0, "roa").unwrap() - 0.02).abs() < 1e-12);
    assert!((panel.value(0, "roe").unwrap() - 0.2).abs() < 1e-12);
    assert!((panel.value(0, "levr").unwrap() - 0.9).abs() < 1e-12);
    assert!((panel.value(0, "nplratio").unwrap() - 0.03).abs() < 1e-12);
    assert!((panel.value(0, "niiratio").unwrap() - 0.25).abs() < 1e-12);
    assert_eq!(panel.value(0, "growth"), None);
    assert!((panel.value(1, "growth").unwrap() - 0.1).abs() < 1e-12);
    assert_eq!(panel.value(2, "growth"), None);
    assert_eq!(derive_variables(&panel).unwrap(), panel);
}

#[test]
fn missing_column_is_a_schema_error() {
    let csv = format!("{}\n", header().replace(",loans", ""));
    match read_panel(csv.as_bytes()) {
        Err(Error::Schema(c)) => assert_eq!(c, "loans"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn bad_cell_reports_row_and_column() {
    let good = row("A", 2006, 100.0, 10.0, 30.0);
    let bad = row("B", 2006, 100.0, 10.0, 30.0).replacen("100", "abc", 1);
    let csv = format!("{}\n{good}\n{bad}\n", header());
    match read_panel(csv.as_bytes()) {
        Err(Error::Parse { row, column, .. }) => {
            assert_eq!(row, 3);
            assert_eq!(column, "total_assets");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn duplicate_key_is_rejected() {
    let r = row("A", 2006, 100.0, 10.0, 30.0);
    let csv = format!("{}\n{r}\n{r}\n", header());
    assert!(matches!(read_panel(csv.as_bytes()), Err(Error::Duplicate { .. })));
}

#[test]
fn zero_denominator_is_reported() {
    let csv = format!("{}\n{}\n", header(), row("A", 2006, 100.0, 0.0, 30.0));
    let err = derive_variables(&read_panel(csv.as_bytes()).unwrap()).unwrap_err();
    assert!(err.to_string().contains("book_equity"), "{err}");
}

#[test]
fn synthetic_panel_round_trips_through_csv() {
    let synth = generate_synthetic(&SyntheticConfig::default()).unwrap();
    let mut buf = Vec::new();
    write_panel(&synth.panel, &mut buf).unwrap();
    let back = read_panel(buf.as_slice()).unwrap();
    assert_eq!(back, synth.panel);
}

#[test]
fn default_synthetic_panel_shape() {
    let synth = generate_synthetic(&SyntheticConfig::default()).unwrap();
    assert_eq!(synth.panel.len(), 756);
    assert_eq!(synth.panel.bank_ids().len(), 42);
    assert_eq!(synth.panel.years(), (2006..2024).collect::<Vec<_>>());
    let sob = synth.panel.bank_types().iter().filter(|t| **t == Some(BankType::Sob)).count();
    assert_eq!(sob, 6 * 18);
    let again = generate_synthetic(&SyntheticConfig::default()).unwrap();
    assert_eq!(again.panel, synth.panel);
    assert_eq!(again.truth, synth.truth);
}

#[test]
fn synthetic_truth_moments() {
    let synth = generate_synthetic(&SyntheticConfig::default()).unwrap();
    let cfg = SyntheticConfig::default();
    let ineff: Vec<f64> = synth.truth.iter().filter(|t| !t.core).map(|t| t.inefficiency).collect();
    let mean_u = ineff.iter().sum::<f64>() / ineff.len() as f64;
    let expected = cfg.sigma_u * (2.0 / std::f64::consts::PI).sqrt();
    assert!((mean_u - expected).abs() < 0.05, "{mean_u} vs {expected}");
    for t in &synth.truth {
        assert!((t.efficiency - (-t.inefficiency).exp()).abs() < 1e-15);
        if t.core {
            assert_eq!(t.inefficiency, 0.0);
        }
    }
    let derived = derive_variables(&synth.panel).unwrap();
    for (i, t) in synth.truth.iter().enumerate() {
        assert!((derived.value(i, "tobinsq").unwrap() - t.tobinsq).abs() < 1e-9 * t.tobinsq);
    }
}

#[test]
fn different_seeds_differ() {
    let a = generate_synthetic(&SyntheticConfig::default()).unwrap();
    let b = generate_synthetic(&SyntheticConfig { seed: 7, ..Default::default() }).unwrap();
    assert_ne!(a.panel, b.panel);
}

fn one_to_two_hundred() -> frontier::panel::PanelDataset {
    let keys = (0..200).map(|i| ObsKey { bank_id: format!("B{i:03}"), year: 2006 }).collect();
    let mut cols = BTreeMap::new();
    cols.insert("v".to_string(), (1..=200).map(|i| Some(f64::from(i))).collect());
    frontier::panel::PanelDataset::new(keys, vec![None; 200], cols).unwrap()
}

#[test]
fn winsor_bounds_match_hand_quantiles() {
    let panel = one_to_two_hundred();
    let sorted: Vec<f64> = (1..=200).map(f64::from).collect();
    let (lo, hi) = winsor_bounds(panel.column("v").unwrap(), 0.01).unwrap();
    assert_eq!(lo, interpolated_quantile(&sorted, 0.01));
    assert_eq!(hi, interpolated_quantile(&sorted, 0.99));
    assert!((lo - 2.99).abs() < 1e-12);
    assert!((hi - 198.01).abs() < 1e-12);

    let w = winsorize(&panel, &["v"], 0.01).unwrap();
    let col: Vec<f64> = w.column("v").unwrap().iter().map(|v| v.unwrap()).collect();
    assert_eq!(col.iter().copied().fold(f64::INFINITY, f64::min), lo);
    assert_eq!(col.iter().copied().fold(f64::NEG_INFINITY, f64::max), hi);
    assert_eq!(col[100], 101.0);
}

#[test]
fn second_winsorization_stays_inside_first_bounds() {
    let once = winsorize(&one_to_two_hundred(), &["v"], 0.01).unwrap();
    let twice = winsorize(&once, &["v"], 0.01).unwrap();
    let (lo, hi) = winsor_bounds(once.column("v").unwrap(), 0.01).unwrap();
    assert!(lo >= 2.99 && hi <= 198.01);
    for (a, b) in once.column("v").unwrap().iter().zip(twice.column("v").unwrap()) {
        assert!((a.unwrap() - b.unwrap()).abs() <= 0.01);
    }
}

#[test]
fn regenerated_q_is_seeded_and_tracks_its_driver() {
    let synth = generate_synthetic(&SyntheticConfig::default()).unwrap();
    let truth: Vec<Option<f64>> = synth.truth.iter().map(|t| Some(t.efficiency)).collect();
    let panel = synth.panel.with_column("true_eff", truth).unwrap();
    let a = regenerate_tobinsq(&panel, "true_eff", 2.0, 0.1, 9).unwrap();
    let b = regenerate_tobinsq(&panel, "true_eff", 2.0, 0.1, 9).unwrap();
    assert_eq!(a, b);
    let q: Vec<f64> = a.column("tobinsq").unwrap().iter().map(|v| v.unwrap()).collect();
    let e: Vec<f64> = synth.truth.iter().map(|t| t.efficiency).collect();
    assert!(common::naive_pearson(&q, &e) > 0.5);
}
