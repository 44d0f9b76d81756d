//! Finite-difference checks of every differentiation primitive.

mod support;

use support::grad_sweep::{self as sweep, TOL};

fn assert_all(results: Vec<(&str, f64)>) {
    for (name, worst) in results {
        assert!(worst < TOL, "{name}: max relative error {worst:e}");
    }
}

#[test]
fn matmul_gradient_is_tight() {
    assert!(sweep::matmul_tight() < 1e-6);
}

#[test]
fn elementwise_primitives() {
    assert_all(sweep::elementwise());
}

#[test]
fn reductions() {
    assert_all(sweep::reductions());
}

#[test]
fn structural_primitives() {
    assert_all(sweep::structural());
}

#[test]
fn losses() {
    assert_all(sweep::losses());
}

#[test]
fn grad_reverse_matches_explicit_negated_surrogate() {
    assert!(sweep::grad_reverse() < TOL);
}

#[test]
fn composite_loss_matches_finite_differences() {
    let worst = sweep::composite(sweep::TRIALS);
    assert!(worst < TOL, "composite loss: max relative error {worst:e}");
}
