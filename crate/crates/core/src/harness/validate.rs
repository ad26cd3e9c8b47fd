//! Self-checks run by the `validate` subcommand.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::Setup;
use crate::error::Result;
use crate::grape::{GradientScheme, TargetWeights, TransferProblem};
use crate::linalg::{expm, hermiticity_defect, max_abs_diff};
use crate::liouville::{
    jump_positions, oracle, propagate_trajectory, step_propagate, vectorize, LiouvillianSplit, RecordOptions,
};
use crate::model::{Level, NvModel};
use crate::pulses::{gaussian_stirap, ControlField, GaussianParams, Tone};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name: name.into(), passed, detail }
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<C64> {
    let a = DMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)));
    (&a + a.adjoint()) * C64::from(0.5)
}

fn random_jumps(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize, f64)> {
    let mut jumps = Vec::new();
    for from in 0..n {
        for to in 0..n {
            if from != to && rng.random_bool(0.6) {
                jumps.push((from, to, rng.random_range(0.0..0.5)));
            }
        }
    }
    jumps
}

/// Tensor-identity vs column-probe superoperators, worst elementwise
/// difference over the 10-level model and `random` small models.
pub(crate) fn liouvillian_oracle_gap(setup: &Setup, random: usize) -> Result<f64> {
    let model = NvModel::build(&setup.constants, 10)?;
    let split = LiouvillianSplit::assemble(&model);
    let mut worst = max_abs_diff(&split.l0, &oracle::tensor_liouvillian(&model.h_static, &jump_positions(&model)));
    worst = worst.max(max_abs_diff(&split.leps, &oracle::tensor_liouvillian(&model.v_pattern, &[])));
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..random {
        let n = 2 + i % 3;
        let h = random_hermitian(&mut rng, n);
        let v = random_hermitian(&mut rng, n);
        let jumps = random_jumps(&mut rng, n);
        let s = LiouvillianSplit::probe(&h, &v, &jumps);
        worst = worst.max(max_abs_diff(&s.l0, &oracle::tensor_liouvillian(&h, &jumps)));
        worst = worst.max(max_abs_diff(&s.leps, &oracle::tensor_liouvillian(&v, &[])));
    }
    Ok(worst)
}

/// Runs every self-check; never stops at the first failure.
pub fn run_invariant_suite(setup: &Setup) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let c = &setup.constants;

    let mut herm = 0.0_f64;
    for dims in [3, 4, 10] {
        let m = NvModel::build(c, dims)?;
        herm = herm.max(hermiticity_defect(&m.h_static)).max(hermiticity_defect(&m.v_pattern));
    }
    out.push(check("model hermiticity", herm < 1e-12, format!("max defect {herm:.3e}")));

    let gap = liouvillian_oracle_gap(setup, 20)?;
    out.push(check("liouvillian tensor oracle", gap < 1e-12, format!("max elementwise gap {gap:.3e}")));

    let m10 = NvModel::build(c, 10)?;
    let split = LiouvillianSplit::assemble(&m10);
    let leak = split.trace_leak();
    out.push(check("trace functional is a left null vector", leak < 1e-10, format!("max leak {leak:.3e}")));

    // one step against a dense exponential
    let rho0 = m10.pure_state(Level::MinusOne)?;
    let (eps, dt) = (7.0, setup.dt);
    let v = step_propagate(&split, &vectorize(&rho0), eps, dt)?;
    let dense = expm(&((&split.l0 + &split.leps * C64::from(eps)) * C64::from(dt)));
    let x = DMatrix::from_column_slice(v.len(), 1, &vectorize(&rho0));
    let reference = &dense * x;
    let err = v.iter().zip(reference.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    out.push(check("propagator vs dense exponential", err < 1e-11, format!("max difference {err:.3e}")));

    // analytic decay of a single excited level
    let gamma = 1.0 / 24.0;
    let decay = LiouvillianSplit::probe(&DMatrix::zeros(2, 2), &DMatrix::zeros(2, 2), &[(1, 0, gamma)]);
    let mut excited = DMatrix::zeros(2, 2);
    excited[(1, 1)] = C64::new(1.0, 0.0);
    let after = step_propagate(&decay, &vectorize(&excited), 0.0, 24.0)?;
    let e = (after[3].re - (-1.0_f64).exp()).abs();
    out.push(check("two-level decay", e < 1e-12, format!("|P(24 ns) - 1/e| = {e:.3e}")));

    // dark without drive
    let m4 = NvModel::build(c, 4)?.without_dissipation();
    let s4 = LiouvillianSplit::assemble(&m4);
    let zero = ControlField::zero(5.0, setup.dt, m4.carriers())?;
    let tr = propagate_trajectory(
        &m4,
        &s4,
        &zero,
        &m4.pure_state(Level::MinusOne)?,
        &RecordOptions::final_only(vec![Level::MinusOne]),
    )?;
    let p = tr.final_population(Level::MinusOne).unwrap_or(f64::NAN);
    out.push(check("zero field leaves |-1> untouched", (p - 1.0).abs() < 1e-12, format!("P_-1(T) = {p}")));

    // physicality along a dissipative STIRAP run
    let m4d = NvModel::build(c, 4)?;
    let s4d = LiouvillianSplit::assemble(&m4d);
    let f =
        gaussian_stirap(&GaussianParams::stirap_defaults(5.0, 10.0), 10.0, setup.dt, m4d.carriers(), setup.convention)?;
    let tr = propagate_trajectory(
        &m4d,
        &s4d,
        &f,
        &m4d.pure_state(Level::MinusOne)?,
        &RecordOptions { levels: vec![Level::PlusOne], stride: 10, check_physicality: true },
    )?;
    let ph = tr.physicality;
    out.push(check(
        "physicality along a trajectory",
        ph.is_physical(),
        format!(
            "trace drift {:.2e}, hermiticity {:.2e}, min eigenvalue {:.2e}",
            ph.max_trace_drift, ph.max_hermiticity_defect, ph.min_eigenvalue
        ),
    ));

    // midpoint gradient against exact central differences on a fine grid
    let lam = NvModel::build(c, 3)?;
    let car = lam.carriers();
    let pr = TransferProblem::from_minus_one(lam)?.with_scheme(GradientScheme::Midpoint);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let o1: Vec<f64> = (0..8).map(|_| rng.random_range(-6.0..6.0)).collect();
    let o2: Vec<f64> = (0..8).map(|_| rng.random_range(-6.0..6.0)).collect();
    let field = ControlField::from_blocks(o1, o2, 10, 0.001, car, setup.convention)?.with_delta(0.7);
    let w = TargetWeights::default();
    let (_, g) = pr.grad_phi(&field, &w)?;
    let h = 1e-5;
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..field.n_blocks() {
        let mut fp = field.clone();
        fp.omega_mut(Tone::One)[k] += h;
        let mut fm = field.clone();
        fm.omega_mut(Tone::One)[k] -= h;
        let fd = (pr.eval_phi(&fp, &w)?.phi - pr.eval_phi(&fm, &w)?.phi) / (2.0 * h);
        num += (g.d_omega1[k] - fd).powi(2);
        den += fd * fd;
    }
    let rel = (num / den.max(1e-300)).sqrt();
    out.push(check("gradient vs finite differences", rel < 1e-2, format!("relative error {rel:.3e}")));

    Ok(out)
}
