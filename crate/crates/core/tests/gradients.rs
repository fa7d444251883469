//! Analytic gradients against central finite differences of independent
//! dense reference implementations.

mod common;

use common::gradcheck;

#[test]
fn mse_gradient() {
    gradcheck::mse_gradient();
}

#[test]
fn smooth_prox_partials() {
    gradcheck::smooth_prox_partials();
}

#[test]
fn entropy_gradient() {
    gradcheck::entropy_gradient();
}

#[test]
fn softmax_relaxation_per_sample() {
    gradcheck::softmax_relaxation_per_sample();
}

#[test]
fn softmax_relaxation_top_m() {
    gradcheck::softmax_relaxation_top_m();
}

#[test]
fn lista_gradients() {
    gradcheck::lista_gradients();
}

#[test]
fn fc_gradients() {
    gradcheck::fc_gradients();
}

#[test]
fn pg2d_gradients() {
    gradcheck::pg2d_gradients();
}

#[test]
fn end_to_end_chain_lista() {
    gradcheck::end_to_end_chain_lista();
}

#[test]
fn end_to_end_chain_fc() {
    gradcheck::end_to_end_chain_fc();
}

#[test]
fn end_to_end_chain_pg2d() {
    gradcheck::end_to_end_chain_pg2d();
}
