mod common;

use taxrisk::monte_carlo::{estimate_exit_transform, estimate_survival, exit_transform_outcomes, McConfig};
use taxrisk::scale::{exit_transform, phi_zero, scale_function, survival_probability, ExitProblemSpec};
use taxrisk::RateFunction;

use common::*;

fn threshold_problem(q: f64) -> ExitProblemSpec {
    ExitProblemSpec::new(5.0, 15.0, q, RateFunction::threshold(5.0, 10.0, 0.2, 0.5).unwrap()).unwrap()
}

#[test]
fn coverage_over_many_seeds() {
    let model = cl_levy();
    let problem = threshold_problem(0.0);
    let target = exit_transform(&problem, &scale_function(model, 0.0).unwrap()).unwrap().value;
    let hits = (0..100u64)
        .filter(|&seed| {
            estimate_exit_transform(&model, &problem, &McConfig::new(2000, 500.0, 1000 + seed))
                .unwrap()
                .agrees_with(target, 3.0)
        })
        .count();
    assert!(hits >= 99, "{hits} of 100 within 3 standard errors");
}

#[test]
fn standard_error_scales_with_sample_size() {
    let model = cl_levy();
    let problem = threshold_problem(0.05);
    let small = estimate_exit_transform(&model, &problem, &McConfig::new(20_000, 500.0, 5)).unwrap();
    let large = estimate_exit_transform(&model, &problem, &McConfig::new(40_000, 500.0, 6)).unwrap();
    let ratio = large.std_error / small.std_error;
    let expected = std::f64::consts::FRAC_1_SQRT_2;
    assert!((ratio - expected).abs() <= 0.2 * expected, "ratio {ratio}");
}

#[test]
fn constant_rate_log_ratio() {
    // The log of the exit transform scales by 1 / (1 - c).
    let model = cl_levy();
    let untaxed = ExitProblemSpec::new(5.0, 15.0, 0.0, RateFunction::constant(5.0, 0.0).unwrap()).unwrap();
    let taxed = ExitProblemSpec::new(5.0, 15.0, 0.0, RateFunction::constant(5.0, 0.5).unwrap()).unwrap();
    let cfg = McConfig::new(50_000, 500.0, 77);
    let a = estimate_exit_transform(&model, &untaxed, &cfg).unwrap();
    let b = estimate_exit_transform(&model, &taxed, &cfg).unwrap();
    let ratio = b.value.ln() / a.value.ln();
    // delta method on both logs
    let spread = 3.0 * (b.std_error / b.value + 2.0 * a.std_error / a.value) * ratio.abs();
    assert!((ratio - 2.0).abs() <= spread + 0.01, "ratio {ratio} spread {spread}");
}

#[test]
fn discounting_lowers_the_transform() {
    let model = cl_levy();
    let cfg = McConfig::new(5000, 500.0, 3);
    let plain = estimate_exit_transform(&model, &threshold_problem(0.0), &cfg).unwrap();
    let discounted = estimate_exit_transform(&model, &threshold_problem(0.05), &cfg).unwrap();
    assert!(discounted.value < plain.value);
    assert_eq!(discounted.unresolved, 0);
}

#[test]
fn outcomes_are_indicators_when_undiscounted() {
    let out = exit_transform_outcomes(&cl_levy(), &threshold_problem(0.0), &McConfig::new(500, 500.0, 8)).unwrap();
    assert!(out.iter().all(|o| o.value == 0.0 || o.value == 1.0));
}

#[test]
fn survival_matches_constant_rate_identity() {
    let model = cl_levy();
    let x = 3.0;
    let rate = RateFunction::constant(x, 0.5).unwrap();
    let exact = phi_zero(model, x).unwrap().powf(2.0);
    assert!((survival_probability(model, x, &rate).unwrap().value - exact).abs() <= 1e-8);
    let est = estimate_survival(&model, x, &rate, &McConfig::new(20_000, 200.0, 11)).unwrap();
    assert!(est.agrees_with(exact, 4.0), "{est:?} vs {exact}");
}

#[test]
fn brownian_exit_agrees() {
    let model = brownian_levy();
    let problem = ExitProblemSpec::new(1.0, 3.0, 0.2, RateFunction::constant(1.0, 0.3).unwrap()).unwrap();
    let target = exit_transform(&problem, &scale_function(model, 0.2).unwrap()).unwrap().value;
    let mut cfg = McConfig::new(2000, 25.0, 21);
    cfg.step = 2e-3;
    let est = estimate_exit_transform(&model, &problem, &cfg).unwrap();
    // Grid monitoring misses some crossings; allow a discretisation margin.
    assert!((est.value - target).abs() <= 4.0 * est.std_error + est.truncation_bias + 0.03, "{est:?} vs {target}");
}
