//! Gradient ascent over piecewise-constant envelopes.
//!
//! The target is φ = p3 + λ·p̄4 + λ_E·E where p3 is the final |+1⟩
//! population, p̄4 the A2 population averaged over the segment ends and E the
//! control energy. Gradients default to the first-order propagator
//! derivative ∂e^{L_j dt}/∂u ≈ dt·(∂L_j/∂u)·e^{L_j dt}, so
//!
//! ```text
//! ∂ρ_N/∂u(j)   = dt · c_j · U_back(j) · Leps · ρ_j
//! ∂ρ_ave/∂u(j) = dt/N · c_j · U_stair(j) · Leps · ρ_j
//! ```
//!
//! with c_j = ∂ε'_x(j)/∂u. Both backward products are evaluated by one
//! reverse sweep over a costate vector instead of materializing them. A
//! symmetric midpoint variant is available through [`GradientScheme`].

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liouville::{population_at, vectorize, LiouvillianSplit, Stepper};
use crate::model::{Level, NvModel};
use crate::pulses::{ControlField, PulseFile, Tone};

/// Weights of the average-A2 and energy terms; both ≤ 0 in practice.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetWeights {
    pub lambda: f64,
    pub lambda_e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiValue {
    pub phi: f64,
    pub p3: f64,
    pub p4bar: f64,
    pub energy: f64,
}

/// ∂φ/∂(parameters), per envelope block and for the global detuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBundle {
    pub d_omega1: Vec<f64>,
    pub d_omega2: Vec<f64>,
    pub d_delta: f64,
}

impl GradientBundle {
    pub fn zeros(blocks: usize) -> Self {
        Self { d_omega1: vec![0.0; blocks], d_omega2: vec![0.0; blocks], d_delta: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.d_omega1.iter().chain(&self.d_omega2).all(|v| v.is_finite()) && self.d_delta.is_finite()
    }

    fn axpy(&mut self, k: f64, other: &GradientBundle) {
        for (a, b) in self.d_omega1.iter_mut().zip(&other.d_omega1) {
            *a += k * b;
        }
        for (a, b) in self.d_omega2.iter_mut().zip(&other.d_omega2) {
            *a += k * b;
        }
        self.d_delta += k * other.d_delta;
    }
}

/// Approximation of the segment propagator derivative ∂e^{L_j dt}/∂u.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientScheme {
    /// dt·(∂L_j/∂u)·e^{L_j dt}; error O(dt) over a fixed duration.
    #[default]
    FirstOrder,
    /// dt·e^{L_j dt/2}·(∂L_j/∂u)·e^{L_j dt/2}; error O(dt²), about 1.5× the
    /// reverse-sweep cost.
    Midpoint,
}

impl std::str::FromStr for GradientScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first-order" => Ok(Self::FirstOrder),
            "midpoint" => Ok(Self::Midpoint),
            other => {
                Err(Error::Config(vec![format!("unknown gradient scheme '{other}' (allowed: first-order, midpoint)")]))
            }
        }
    }
}

/// State-transfer problem: model, its superoperator split and the initial
/// state, with |+1⟩ as the target and A2 as the penalized level.
#[derive(Debug, Clone)]
pub struct TransferProblem {
    pub model: NvModel,
    pub split: LiouvillianSplit,
    rho0: Vec<C64>,
    target: usize,
    excited: usize,
    scheme: GradientScheme,
}

impl TransferProblem {
    pub fn new(model: NvModel, rho0: &DMatrix<C64>) -> Result<Self> {
        let ne = model.dims();
        if rho0.shape() != (ne, ne) {
            return Err(Error::DimensionMismatch(format!(
                "initial state is {}x{}, model has {ne} levels",
                rho0.nrows(),
                rho0.ncols()
            )));
        }
        let target = model.position(Level::PlusOne)?;
        let excited = model.position(Level::A2)?;
        let split = LiouvillianSplit::assemble(&model);
        Ok(Self { model, split, rho0: vectorize(rho0), target, excited, scheme: GradientScheme::default() })
    }

    /// Transfer |-1⟩ → |+1⟩.
    pub fn from_minus_one(model: NvModel) -> Result<Self> {
        let rho0 = model.pure_state(Level::MinusOne)?;
        Self::new(model, &rho0)
    }

    pub fn with_scheme(mut self, scheme: GradientScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn scheme(&self) -> GradientScheme {
        self.scheme
    }

    pub fn ne(&self) -> usize {
        self.model.dims()
    }

    pub fn rho0(&self) -> &[C64] {
        &self.rho0
    }

    fn check(&self, field: &ControlField) -> Result<()> {
        if field.n_segments() == 0 {
            return Err(Error::InvalidField("field has no segments".into()));
        }
        Ok(())
    }

    /// Forward pass storing ρ_1 … ρ_N.
    pub fn forward(&self, field: &ControlField) -> Result<ForwardSweep> {
        self.check(field)?;
        let ne = self.ne();
        let n = field.n_segments();
        let mut states = Vec::with_capacity(n);
        let mut eps = Vec::with_capacity(n);
        let mut v = self.rho0.clone();
        let mut stepper = Stepper::default();
        let mut p4_sum = 0.0;
        for j in 0..n {
            let e = field.sample_eps(j);
            if !e.is_finite() {
                return Err(Error::NonFinite(format!("field value at segment {j}")));
            }
            stepper.step(&self.split, &mut v, e, field.dt());
            p4_sum += v[self.excited + self.excited * ne].re;
            states.push(v.clone());
            eps.push(e);
        }
        let p3 = population_at(&v, ne, self.target);
        Ok(ForwardSweep { states, eps, p3, p4bar: p4_sum / n as f64, energy: field.energy() })
    }

    /// φ and its parts for `field`.
    pub fn eval_phi(&self, field: &ControlField, w: &TargetWeights) -> Result<PhiValue> {
        Ok(self.forward(field)?.phi(w))
    }

    /// Reverse sweep. The costate starts at `a·vec(P_+1) + (b/N)·vec(P_A2)`
    /// and picks up `(b/N)·vec(P_A2)` after every step, which yields the
    /// gradient of a·p3 + b·p̄4.
    fn adjoint(&self, field: &ControlField, fwd: &ForwardSweep, a: f64, b: f64) -> GradientBundle {
        let ne = self.ne();
        let n = field.n_segments();
        let dt = field.dt();
        let src = b / n as f64;
        let mut chi = vec![C64::default(); ne * ne];
        chi[self.target + self.target * ne] += a;
        chi[self.excited + self.excited * ne] += src;

        let mut grad = GradientBundle::zeros(field.n_blocks());
        let mut stepper = Stepper::default();
        let mut mid = Vec::new();
        let op = self.split.operator();
        for j in (0..n).rev() {
            let e = fwd.eps[j];
            let g = match self.scheme {
                GradientScheme::FirstOrder => dt * op.coupling_form(&chi, &fwd.states[j]).re,
                GradientScheme::Midpoint => {
                    // ∂e^{L dt} ≈ dt·e^{L dt/2}·∂L·e^{L dt/2}
                    mid.clear();
                    mid.extend_from_slice(if j == 0 { &self.rho0 } else { &fwd.states[j - 1] });
                    stepper.step(&self.split, &mut mid, e, 0.5 * dt);
                    stepper.step_transposed(&self.split, &mut chi, e, 0.5 * dt);
                    dt * op.coupling_form(&chi, &mid).re
                }
            };
            let blk = field.block_of(j);
            grad.d_omega1[blk] += g * field.d_eps_d_omega(Tone::One, j);
            grad.d_omega2[blk] += g * field.d_eps_d_omega(Tone::Two, j);
            grad.d_delta += g * field.d_eps_d_delta(j);
            if j > 0 {
                match self.scheme {
                    GradientScheme::FirstOrder => stepper.step_transposed(&self.split, &mut chi, e, dt),
                    GradientScheme::Midpoint => stepper.step_transposed(&self.split, &mut chi, e, 0.5 * dt),
                }
                chi[self.excited + self.excited * ne] += src;
            }
        }
        grad
    }

    pub fn grad_p3(&self, field: &ControlField) -> Result<GradientBundle> {
        let fwd = self.forward(field)?;
        Ok(self.adjoint(field, &fwd, 1.0, 0.0))
    }

    pub fn grad_p4bar(&self, field: &ControlField) -> Result<GradientBundle> {
        let fwd = self.forward(field)?;
        Ok(self.adjoint(field, &fwd, 0.0, 1.0))
    }

    /// ∂φ/∂u from an existing forward sweep.
    pub fn grad_phi_from(&self, field: &ControlField, fwd: &ForwardSweep, w: &TargetWeights) -> GradientBundle {
        let mut g = self.adjoint(field, fwd, 1.0, w.lambda);
        if w.lambda_e != 0.0 {
            g.axpy(w.lambda_e, &grad_energy(field));
        }
        g
    }

    pub fn grad_phi(&self, field: &ControlField, w: &TargetWeights) -> Result<(PhiValue, GradientBundle)> {
        let fwd = self.forward(field)?;
        let g = self.grad_phi_from(field, &fwd, w);
        Ok((fwd.phi(w), g))
    }
}

/// Stored forward states ρ_1 … ρ_N (vectorized) and sampled field values.
#[derive(Debug, Clone)]
pub struct ForwardSweep {
    pub states: Vec<Vec<C64>>,
    pub eps: Vec<f64>,
    pub p3: f64,
    pub p4bar: f64,
    pub energy: f64,
}

impl ForwardSweep {
    pub fn phi(&self, w: &TargetWeights) -> PhiValue {
        PhiValue {
            phi: self.p3 + w.lambda * self.p4bar + w.lambda_e * self.energy,
            p3: self.p3,
            p4bar: self.p4bar,
            energy: self.energy,
        }
    }

    pub fn final_state(&self) -> &[C64] {
        self.states.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// ∂E/∂Ω per block: 2Ω times the number of segments in the block.
pub fn grad_energy(field: &ControlField) -> GradientBundle {
    let n = field.seg_per_block() as f64;
    GradientBundle {
        d_omega1: field.omega(Tone::One).iter().map(|v| 2.0 * n * v).collect(),
        d_omega2: field.omega(Tone::Two).iter().map(|v| 2.0 * n * v).collect(),
        d_delta: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrapeConfig {
    /// Initial gradient step ε.
    pub step_eps: f64,
    pub max_iters: usize,
    pub convergence_window: usize,
    pub convergence_tol: f64,
    pub optimize_detuning: bool,
    /// |Ω| cap in GHz-labelled units.
    pub amplitude_cap: f64,
    pub non_negative: bool,
    pub step_growth: f64,
    pub step_floor: f64,
}

impl Default for GrapeConfig {
    fn default() -> Self {
        Self {
            step_eps: 10.0,
            max_iters: 2000,
            convergence_window: 100,
            convergence_tol: 1e-3,
            optimize_detuning: false,
            amplitude_cap: 12.0,
            non_negative: false,
            step_growth: 1.2,
            step_floor: 1e-12,
        }
    }
}

impl GrapeConfig {
    pub fn validate(&self) -> Result<()> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Every constraint the settings break.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.step_eps > 0.0) {
            errs.push(format!("step_eps must be positive, got {}", self.step_eps));
        }
        if !(self.convergence_tol > 0.0) {
            errs.push(format!("convergence_tol must be positive, got {}", self.convergence_tol));
        }
        if self.convergence_window == 0 {
            errs.push("convergence_window must be positive".into());
        }
        if !(self.amplitude_cap > 0.0) {
            errs.push(format!("amplitude_cap must be positive, got {}", self.amplitude_cap));
        }
        if !(self.step_growth >= 1.0) {
            errs.push(format!("step_growth must be >= 1, got {}", self.step_growth));
        }
        errs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
    StepFloor,
}

/// Outcome of one optimization run.
#[derive(Debug, Clone, Serialize)]
pub struct GrapeOutcome {
    pub best: ControlField,
    pub value: PhiValue,
    /// φ after every accepted iteration, starting with the initial field.
    pub phi_history: Vec<f64>,
    pub iters: usize,
    pub evaluations: usize,
    pub stop: StopReason,
    pub wall_time_s: f64,
}

impl Serialize for ControlField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_pulse_file().serialize(s)
    }
}

fn step_field(field: &ControlField, g: &GradientBundle, step: f64, cfg: &GrapeConfig) -> ControlField {
    let mut f = field.clone();
    for (v, d) in f.omega_mut(Tone::One).iter_mut().zip(&g.d_omega1) {
        *v += step * d;
    }
    for (v, d) in f.omega_mut(Tone::Two).iter_mut().zip(&g.d_omega2) {
        *v += step * d;
    }
    if cfg.optimize_detuning {
        f.set_delta_global(field.delta_global() + step * g.d_delta);
    }
    f.clamp(cfg.amplitude_cap, cfg.non_negative);
    f
}

/// Gradient ascent u ← u + ε·∂φ/∂u with backtracking on ε: a step that
/// lowers φ is retried at ε/2, an accepted step grows ε by `step_growth`.
/// Stops once φ(m) − φ(m − window) < tol, at `max_iters`, or when ε falls
/// below the floor.
pub fn grape_optimize(
    problem: &TransferProblem,
    field0: &ControlField,
    w: &TargetWeights,
    cfg: &GrapeConfig,
) -> Result<GrapeOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let mut field = field0.clone();
    field.clamp(cfg.amplitude_cap, cfg.non_negative);
    let mut fwd = problem.forward(&field)?;
    let mut value = fwd.phi(w);
    if !value.phi.is_finite() {
        return Err(Error::Diverged(format!("initial φ is {}", value.phi)));
    }
    let mut history = vec![value.phi];
    let mut step = cfg.step_eps;
    let mut evaluations = 1;
    let mut stop = StopReason::MaxIters;
    let mut iters = 0;

    while iters < cfg.max_iters {
        let grad = problem.grad_phi_from(&field, &fwd, w);
        if !grad.is_finite() {
            return Err(Error::Diverged(format!("non-finite gradient at iteration {iters}")));
        }
        let accepted = loop {
            if step < cfg.step_floor {
                break None;
            }
            let trial = step_field(&field, &grad, step, cfg);
            let trial_fwd = problem.forward(&trial)?;
            evaluations += 1;
            let trial_value = trial_fwd.phi(w);
            if !trial_value.phi.is_finite() {
                return Err(Error::Diverged(format!("φ = {} at iteration {iters} (step {step:e})", trial_value.phi)));
            }
            if trial_value.phi >= value.phi {
                step *= cfg.step_growth;
                break Some((trial, trial_fwd, trial_value));
            }
            step *= 0.5;
        };
        let Some((f, fw, v)) = accepted else {
            stop = StopReason::StepFloor;
            break;
        };
        field = f;
        fwd = fw;
        value = v;
        history.push(value.phi);
        iters += 1;
        let m = history.len() - 1;
        if m >= cfg.convergence_window && history[m] - history[m - cfg.convergence_window] < cfg.convergence_tol {
            stop = StopReason::Converged;
            break;
        }
    }

    Ok(GrapeOutcome {
        best: field,
        value,
        phi_history: history,
        iters,
        evaluations,
        stop,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

impl GrapeOutcome {
    pub fn best_pulse(&self) -> PulseFile {
        self.best.to_pulse_file()
    }
}
