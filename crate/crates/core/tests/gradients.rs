//! Analytic GRAPE gradients against finite differences.

mod common;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use nvopt::grape::{TargetWeights, TransferProblem};
use nvopt::model::NvModel;
use nvopt::pulses::{ControlField, Tone};
use nvopt::units::{AmplitudeConvention, PhysicalConstants};

fn assert_first_order(pr: &TransferProblem, field: &ControlField, g: &nvopt::grape::GradientBundle, a: f64, b: f64) {
    let (rel, p) = worst_first_order_error(pr, field, g, a, b);
    assert!(rel < 1e-3, "{p:?}: relative error {rel:e}");
}

#[test]
fn first_order_fd_matches_p3_and_p4bar() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (dims, blocks, seg) in [(3, 40, 1), (4, 60, 1), (3, 12, 5), (4, 10, 6)] {
        let pr = problem(dims);
        for _ in 0..2 {
            let field = random_field(&mut rng, &pr, blocks, seg, 0.005);
            let g3 = pr.grad_p3(&field).unwrap();
            let g4 = pr.grad_p4bar(&field).unwrap();
            assert!(g3.is_finite() && g4.is_finite());
            assert_first_order(&pr, &field, &g3, 1.0, 0.0);
            assert_first_order(&pr, &field, &g4, 0.0, 1.0);
        }
    }
}

#[test]
fn first_order_fd_matches_phi_with_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pr = problem(4);
    let field = random_field(&mut rng, &pr, 20, 2, 0.005);
    let w = TargetWeights { lambda: -0.7, lambda_e: -2e-3 };
    let (_, g) = pr.grad_phi(&field, &w).unwrap();
    let h = 1e-4;
    for p in all_params(&field) {
        let f = |s: f64| {
            let energy = moved(&field, p, s).energy();
            first_order_objective(&pr, &field, p, s, 1.0, w.lambda) + w.lambda_e * energy
        };
        let fd = (f(h) - f(-h)) / (2.0 * h);
        let an = component(&g, p);
        assert!((an - fd).abs() / fd.abs().max(1e-9) < 1e-3, "{p:?}: {an:e} vs {fd:e}");
    }
}

#[test]
fn non_minus_one_initial_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = NvModel::build(&PhysicalConstants::default(), 4).unwrap();
    let mut rho0 = DMatrix::<C64>::zeros(4, 4);
    rho0[(0, 0)] = C64::from(0.6);
    rho0[(1, 1)] = C64::from(0.3);
    rho0[(2, 2)] = C64::from(0.1);
    rho0[(0, 2)] = C64::new(0.1, 0.05);
    rho0[(2, 0)] = C64::new(0.1, -0.05);
    let pr = TransferProblem::new(model, &rho0).unwrap();
    let field = random_field(&mut rng, &pr, 30, 1, 0.005);
    assert_first_order(&pr, &field, &pr.grad_p3(&field).unwrap(), 1.0, 0.0);
    assert_first_order(&pr, &field, &pr.grad_p4bar(&field).unwrap(), 0.0, 1.0);
}

#[test]
fn exact_fd_error_halves_with_dt() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for dims in [3, 4] {
        let pr = problem(dims);
        // the same 10 envelope blocks of 0.03 ns at both step sizes
        let coarse = random_field(&mut rng, &pr, 10, 3, 0.01);
        let o1 = coarse.omega(Tone::One).to_vec();
        let o2 = coarse.omega(Tone::Two).to_vec();
        let fine = ControlField::from_blocks(o1, o2, 6, 0.005, pr.model.carriers(), AmplitudeConvention::Plain)
            .unwrap()
            .with_delta(coarse.delta_global());
        for (a, b) in [(1.0, 0.0), (0.0, 1.0)] {
            let e1 = exact_fd_error(&pr, &coarse, a, b);
            let e2 = exact_fd_error(&pr, &fine, a, b);
            let ratio = e2 / e1;
            assert!((0.4..0.6).contains(&ratio), "dims {dims} ({a},{b}): {e1:e} -> {e2:e}, ratio {ratio}");
        }
    }
}

#[test]
fn p4bar_gradient_vanishes_at_zero_field() {
    let pr = problem(3);
    let field = ControlField::zero(0.2, 0.005, pr.model.carriers()).unwrap();
    let g = pr.grad_p4bar(&field).unwrap();
    let h = 1e-4;
    for p in all_params(&field) {
        let an = component(&g, p);
        let fd = (exact_objective(&pr, &moved(&field, p, h), 0.0, 1.0)
            - exact_objective(&pr, &moved(&field, p, -h), 0.0, 1.0))
            / (2.0 * h);
        assert!(an.abs() < 1e-8 && fd.abs() < 1e-8, "{p:?}: {an:e} / {fd:e}");
    }
}

#[test]
fn block_gradient_is_sum_of_segment_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pr = problem(4);
    let blocky = random_field(&mut rng, &pr, 8, 5, 0.005);
    let expanded = ControlField::from_blocks(
        blocky.omega(Tone::One).iter().flat_map(|&v| [v; 5]).collect(),
        blocky.omega(Tone::Two).iter().flat_map(|&v| [v; 5]).collect(),
        1,
        0.005,
        pr.model.carriers(),
        AmplitudeConvention::Plain,
    )
    .unwrap()
    .with_delta(blocky.delta_global());
    let gb = pr.grad_p3(&blocky).unwrap();
    let gs = pr.grad_p3(&expanded).unwrap();
    for k in 0..8 {
        let s1: f64 = gs.d_omega1[5 * k..5 * k + 5].iter().sum();
        let s2: f64 = gs.d_omega2[5 * k..5 * k + 5].iter().sum();
        assert!((gb.d_omega1[k] - s1).abs() < 1e-12 * (1.0 + s1.abs()));
        assert!((gb.d_omega2[k] - s2).abs() < 1e-12 * (1.0 + s2.abs()));
    }
    assert!((gb.d_delta - gs.d_delta).abs() < 1e-12 * (1.0 + gs.d_delta.abs()));
}
