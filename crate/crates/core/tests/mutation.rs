//! The gradient check must notice a broken gradient.

use dropauc::checks::run_gradient_check_with;
use dropauc::losses::{opauc_kl_objective_and_grad, tpauc_kl_objective_and_grad};

#[test]
fn intact_gradients_pass() {
    let report = run_gradient_check_with(0, &opauc_kl_objective_and_grad, &tpauc_kl_objective_and_grad);
    assert!(report.passed, "{report}");
}

#[test]
fn sign_flipped_one_way_gradient_fails() {
    let flipped = |m: &_, d: &_, l: &_, lambda: f64| {
        opauc_kl_objective_and_grad(m, d, l, lambda).map(|(v, g)| (v, g.into_iter().map(|x: f64| -x).collect()))
    };
    let report = run_gradient_check_with(0, &flipped, &tpauc_kl_objective_and_grad);
    assert!(!report.passed, "{report}");
}

#[test]
fn sign_flipped_two_way_gradient_fails() {
    let flipped = |m: &_, d: &_, l: &_, lambda: f64, lambda_prime: f64| {
        tpauc_kl_objective_and_grad(m, d, l, lambda, lambda_prime)
            .map(|(v, g)| (v, g.into_iter().map(|x: f64| -x).collect()))
    };
    let report = run_gradient_check_with(0, &opauc_kl_objective_and_grad, &flipped);
    assert!(!report.passed, "{report}");
}
