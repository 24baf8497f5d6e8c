//! Finite-difference checks of every trainable block.

#[allow(dead_code)]
#[path = "support/gradcheck.rs"]
mod gradcheck;

use gradcheck::TOL;
use pathlink::encoders::EncoderKind;
use pathlink::models::PhiKind;

fn assert_close(e: f64) {
    assert!(e < TOL, "worst relative error {e}");
}

#[test]
fn gcn_layer() {
    assert_close(gradcheck::encoder_layer(EncoderKind::Gcn));
}

#[test]
fn sage_layer() {
    assert_close(gradcheck::encoder_layer(EncoderKind::Sage));
}

#[test]
fn lstm_cell() {
    assert_close(gradcheck::phi_block(PhiKind::Recurrent));
}

#[test]
fn attention_block() {
    assert_close(gradcheck::phi_block(PhiKind::Attention));
}

#[test]
fn injective_sum_phi() {
    assert_close(gradcheck::phi_block(PhiKind::InjectiveSum));
}

#[test]
fn rho_mlp() {
    assert_close(gradcheck::rho_mlp());
}

#[test]
fn full_sp4lp_logit() {
    assert_close(gradcheck::sp4lp_logit());
}
