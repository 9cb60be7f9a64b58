//! Central finite-difference checks of every analytic gradient on the tiny
//! configuration (V=20, K=3, D=2, E=8, H=8, L=6).

mod common;

use common::GRAD_TOLERANCE;
use dtdmn::gradcheck::GradCheck;

fn assert_close(check: GradCheck) {
    assert!(check.entries > 0);
    assert!(
        check.max_relative_error < GRAD_TOLERANCE,
        "{:e} at {}",
        check.max_relative_error,
        check.location
    );
}

#[test]
fn factor_loss_gradient() {
    assert_close(common::factor_loss_gradient());
}

#[test]
fn process_turn_gradient() {
    assert_close(common::process_turn_gradient());
}

#[test]
fn summarize_and_score_gradient() {
    assert_close(common::summarize_and_score_gradient());
}

#[test]
fn pairwise_loss_gradient() {
    assert_close(common::pairwise_loss_gradient());
}
