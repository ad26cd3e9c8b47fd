//! Finite-difference gradient oracles shared by the integration tests.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use nvopt::grape::{GradientBundle, TargetWeights, TransferProblem};
use nvopt::linalg::expm;
use nvopt::model::{Level, NvModel};
use nvopt::pulses::{ControlField, Tone};
use nvopt::units::{AmplitudeConvention, PhysicalConstants};

/// Which parameter a finite difference moves.
#[derive(Clone, Copy, Debug)]
pub enum Param {
    Omega(Tone, usize),
    Delta,
}

pub fn dense_mul(m: &DMatrix<C64>, v: &[C64]) -> Vec<C64> {
    let x = DMatrix::from_column_slice(v.len(), 1, v);
    (m * x).as_slice().to_vec()
}

/// a·p3 + b·p̄4 where every segment propagator e^{L_j dt} touched by `param`
/// is replaced by e^{h·dt·c_j·Leps}·e^{L_j dt}. Its derivative in h at 0 is
/// exactly what the analytic gradient computes.
pub fn first_order_objective(pr: &TransferProblem, field: &ControlField, param: Param, h: f64, a: f64, b: f64) -> f64 {
    let ne = pr.ne();
    let n = field.n_segments();
    let dt = field.dt();
    let plus = pr.model.position(Level::PlusOne).unwrap();
    let exc = pr.model.position(Level::A2).unwrap();
    let leps = &pr.split.leps;
    let mut v = pr.rho0().to_vec();
    let mut p4 = 0.0;
    for j in 0..n {
        let lj = &pr.split.l0 + leps * C64::from(field.sample_eps(j));
        v = dense_mul(&expm(&(lj * C64::from(dt))), &v);
        let c = match param {
            Param::Omega(tone, blk) if field.block_of(j) == blk => field.d_eps_d_omega(tone, j),
            Param::Omega(..) => 0.0,
            Param::Delta => field.d_eps_d_delta(j),
        };
        if c != 0.0 {
            v = dense_mul(&expm(&(leps * C64::from(h * dt * c))), &v);
        }
        p4 += v[exc + exc * ne].re;
    }
    a * v[plus + plus * ne].re + b * p4 / n as f64
}

pub fn moved(field: &ControlField, param: Param, h: f64) -> ControlField {
    let mut f = field.clone();
    match param {
        Param::Omega(tone, blk) => f.omega_mut(tone)[blk] += h,
        Param::Delta => f.set_delta_global(f.delta_global() + h),
    }
    f
}

/// a·p3 + b·p̄4 with exact propagators.
pub fn exact_objective(pr: &TransferProblem, field: &ControlField, a: f64, b: f64) -> f64 {
    let v = pr.eval_phi(field, &TargetWeights::default()).unwrap();
    a * v.p3 + b * v.p4bar
}

pub fn all_params(field: &ControlField) -> Vec<Param> {
    let mut ps: Vec<Param> =
        (0..field.n_blocks()).flat_map(|k| [Param::Omega(Tone::One, k), Param::Omega(Tone::Two, k)]).collect();
    ps.push(Param::Delta);
    ps
}

pub fn component(g: &GradientBundle, p: Param) -> f64 {
    match p {
        Param::Omega(Tone::One, k) => g.d_omega1[k],
        Param::Omega(Tone::Two, k) => g.d_omega2[k],
        Param::Delta => g.d_delta,
    }
}

pub fn random_field(rng: &mut ChaCha8Rng, pr: &TransferProblem, blocks: usize, seg: usize, dt: f64) -> ControlField {
    let o1 = (0..blocks).map(|_| rng.random_range(-8.0..8.0)).collect();
    let o2 = (0..blocks).map(|_| rng.random_range(-8.0..8.0)).collect();
    ControlField::from_blocks(o1, o2, seg, dt, pr.model.carriers(), AmplitudeConvention::Plain)
        .unwrap()
        .with_delta(rng.random_range(-3.0..3.0))
}

pub fn problem(dims: usize) -> TransferProblem {
    TransferProblem::from_minus_one(NvModel::build(&PhysicalConstants::default(), dims).unwrap()).unwrap()
}

/// Worst relative error of `g` against first-order central differences,
/// with the offending parameter.
pub fn worst_first_order_error(
    pr: &TransferProblem,
    field: &ControlField,
    g: &GradientBundle,
    a: f64,
    b: f64,
) -> (f64, Param) {
    let h = 1e-4;
    let mut worst = (0.0_f64, Param::Delta);
    for p in all_params(field) {
        let fd =
            (first_order_objective(pr, field, p, h, a, b) - first_order_objective(pr, field, p, -h, a, b)) / (2.0 * h);
        let rel = (component(g, p) - fd).abs() / fd.abs().max(1e-9);
        if rel > worst.0 {
            worst = (rel, p);
        }
    }
    worst
}

/// Norm of (analytic − exact central difference) over all components.
pub fn exact_fd_error(pr: &TransferProblem, field: &ControlField, a: f64, b: f64) -> f64 {
    let g = if b == 0.0 { pr.grad_p3(field).unwrap() } else { pr.grad_p4bar(field).unwrap() };
    let h = 1e-5;
    all_params(field)
        .into_iter()
        .map(|p| {
            let fd = (exact_objective(pr, &moved(field, p, h), a, b) - exact_objective(pr, &moved(field, p, -h), a, b))
                / (2.0 * h);
            (component(&g, p) - fd).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}
