mod common;

use common::{frontier_sample, naive_spearman};
use frontier::panel::{generate_synthetic, SyntheticConfig};
use frontier::sfa::{
    build_frontier_design, fit_frontier, log_likelihood, log_likelihood_gradient,
    technical_efficiency, translog_term_names, DesignOptions, SfaOptions, SfaParams,
    SYNTHETIC_TERM_COUNT,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn six_variable_translog_has_28_terms() {
    let names = translog_term_names(&["a", "b", "c", "d", "e", "f"]);
    assert_eq!(names.len(), 28);
    assert_eq!(names[0], "intercept");
    assert_eq!(names[7], "a^2");
    assert_eq!(names[13], "a*b");
}

#[test]
fn synthetic_panel_design_reads_back() {
    let synth = generate_synthetic(&SyntheticConfig::default()).unwrap();
    let design = build_frontier_design(&synth.panel, &DesignOptions::default()).unwrap();
    assert_eq!(design.n_terms(), SYNTHETIC_TERM_COUNT);
    assert_eq!(design.n_obs(), synth.panel.len());
    assert!(design.shift_theta >= 1.0);
    let row = 5;
    let key = &design.obs_keys[row];
    let r = synth.panel.row_of(&key.bank_id, key.year).unwrap();
    let profit = synth.panel.value(r, "net_profit").unwrap();
    assert!((design.dependent[row] - (profit + design.shift_theta).ln()).abs() < 1e-12);
    let trend = design.regressors[(row, SYNTHETIC_TERM_COUNT - 1)];
    assert_eq!(trend, (key.year - 2006) as f64);
}

#[test]
fn gradient_matches_central_differences() {
    let sample = frontier_sample(200, 0.6, 0.2, 3);
    let design = &sample.design;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let params = SfaParams {
            beta: sample.beta.iter().map(|b| b + rng.random_range(-0.05..0.05)).collect(),
            sigma_sq: rng.random_range(0.05..0.6),
            gamma: rng.random_range(0.1..0.9),
        };
        let grad = log_likelihood_gradient(&params, design).unwrap();
        let k = params.beta.len();
        for j in 0..k + 2 {
            let h = 1e-6;
            let bump = |d: f64| {
                let mut p = params.clone();
                match j {
                    _ if j < k => p.beta[j] += d,
                    _ if j == k => p.sigma_sq += d,
                    _ => p.gamma += d,
                }
                log_likelihood(&p, design).unwrap()
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            let rel = (fd - grad[j]).abs() / grad[j].abs().max(1.0);
            assert!(rel < 1e-4, "component {j}: analytic {} numeric {fd}", grad[j]);
        }
    }
}

#[test]
fn recovers_a_known_frontier() {
    let sample = frontier_sample(2000, 0.7, 0.2, 5);
    let fit = fit_frontier(&sample.design, &SfaOptions::default()).unwrap();
    assert!(fit.converged);
    for j in 1..=6 {
        let rel = (fit.beta[j] - sample.beta[j]).abs() / sample.beta[j].abs();
        assert!(rel < 0.2, "{}: {} vs {}", fit.term_names[j], fit.beta[j], sample.beta[j]);
    }
    assert!((0.5..=0.85).contains(&fit.gamma), "gamma {}", fit.gamma);
    let rho = naive_spearman(&fit.efficiency, &sample.true_efficiency);
    assert!(rho > 0.5, "spearman {rho}");
    assert!(fit.log_likelihood >= fit.start_log_likelihood - 1e-9);
}

#[test]
fn pure_noise_drives_gamma_down() {
    let sample = frontier_sample(2000, 1e-6, 0.1, 6);
    let fit = fit_frontier(&sample.design, &SfaOptions::default()).unwrap();
    assert!(fit.gamma < 0.15, "gamma {}", fit.gamma);
}

#[test]
fn fits_are_deterministic() {
    let sample = frontier_sample(300, 0.7, 0.2, 7);
    let a = fit_frontier(&sample.design, &SfaOptions::default()).unwrap();
    let b = fit_frontier(&sample.design, &SfaOptions::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(technical_efficiency(&a, &sample.design), a.efficiency);
    assert!(a.efficiency.iter().all(|e| *e > 0.0 && *e <= 1.0));
}
