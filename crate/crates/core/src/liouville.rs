//! Liouville-space propagation of the Lindblad master equation.
//!
//! Density matrices are stacked column-major into length-NE² vectors:
//! component `m + n·NE` (0-based) holds ρ[m, n].

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{expm_action, hermiticity_defect, min_hermitian_eigenvalue, ActionWorkspace, SplitOperator};
use crate::model::{Jump, Level, NvModel};
use crate::pulses::ControlField;

const I: C64 = C64::new(0.0, 1.0);

/// Column-major stacking of a square matrix.
pub fn vectorize(rho: &DMatrix<C64>) -> Vec<C64> {
    assert!(rho.is_square(), "vectorize expects a square matrix");
    rho.as_slice().to_vec()
}

pub fn devectorize(v: &[C64]) -> DMatrix<C64> {
    let n = (v.len() as f64).sqrt().round() as usize;
    assert_eq!(n * n, v.len(), "vector length {} is not a perfect square", v.len());
    DMatrix::from_column_slice(n, n, v)
}

/// Right-hand side of the master equation:
/// −i[H, ρ] + Σ Γ (OρO† − ½{O†O, ρ}) with O = |to⟩⟨from|.
pub fn lindblad_rhs(h: &DMatrix<C64>, jumps: &[(usize, usize, f64)], rho: &DMatrix<C64>) -> DMatrix<C64> {
    let mut out = (h * rho - rho * h) * (-I);
    for &(from, to, rate) in jumps {
        // OρO† = ρ[from,from] |to⟩⟨to|; O†O = |from⟩⟨from|
        out[(to, to)] += rho[(from, from)] * rate;
        let n = rho.nrows();
        for k in 0..n {
            out[(from, k)] -= rho[(from, k)] * (0.5 * rate);
            out[(k, from)] -= rho[(k, from)] * (0.5 * rate);
        }
    }
    out
}

/// Jump list expressed as basis positions of `model`.
pub fn jump_positions(model: &NvModel) -> Vec<(usize, usize, f64)> {
    model
        .jumps
        .iter()
        .map(|j: &Jump| {
            (
                model.position(j.from).expect("jump source in model"),
                model.position(j.to).expect("jump target in model"),
                j.rate,
            )
        })
        .collect()
}

/// Builds a superoperator by applying `map` to every basis matrix |m⟩⟨n|.
fn probe_columns(ne: usize, map: impl Fn(&DMatrix<C64>) -> DMatrix<C64>) -> DMatrix<C64> {
    let mut sup = DMatrix::zeros(ne * ne, ne * ne);
    let mut basis = DMatrix::zeros(ne, ne);
    for l in 0..ne * ne {
        let (m, n) = (l % ne, l / ne);
        basis[(m, n)] = C64::new(1.0, 0.0);
        let image = map(&basis);
        sup.column_mut(l).copy_from_slice(image.as_slice());
        basis[(m, n)] = C64::default();
    }
    sup
}

/// L_j = L0 + ε'_x(j)·Leps, with both parts held dense and in sparse form.
#[derive(Debug, Clone)]
pub struct LiouvillianSplit {
    pub l0: DMatrix<C64>,
    pub leps: DMatrix<C64>,
    op: SplitOperator,
    op_t: SplitOperator,
    ne: usize,
}

impl LiouvillianSplit {
    /// Column-probe assembly from the model's master-equation map.
    pub fn assemble(model: &NvModel) -> Self {
        Self::probe(&model.h_static, &model.v_pattern, &jump_positions(model))
    }

    /// Column-probe assembly for an arbitrary drift `h`, coupling pattern `v`
    /// and jumps given as (from, to, rate) basis positions.
    pub fn probe(h: &DMatrix<C64>, v: &DMatrix<C64>, jumps: &[(usize, usize, f64)]) -> Self {
        let ne = h.nrows();
        let l0 = probe_columns(ne, |rho| lindblad_rhs(h, jumps, rho));
        let leps = probe_columns(ne, |rho| (v * rho - rho * v) * (-I));
        Self::from_parts(l0, leps)
    }

    pub fn from_parts(l0: DMatrix<C64>, leps: DMatrix<C64>) -> Self {
        let ne = (l0.nrows() as f64).sqrt().round() as usize;
        let op = SplitOperator::from_dense(&l0, &leps);
        let op_t = op.transpose();
        Self { l0, leps, op, op_t, ne }
    }

    /// Hilbert-space dimension NE.
    pub fn ne(&self) -> usize {
        self.ne
    }

    pub fn operator(&self) -> &SplitOperator {
        &self.op
    }

    pub fn transposed(&self) -> &SplitOperator {
        &self.op_t
    }

    /// Largest |Σ_m L[(m,m), l]| over columns l: how far the trace
    /// functional is from being a left null vector of L0 and Leps.
    pub fn trace_leak(&self) -> f64 {
        let mut worst = 0.0_f64;
        for m in [&self.l0, &self.leps] {
            for l in 0..m.ncols() {
                let s: C64 = (0..self.ne).map(|k| m[(k + k * self.ne, l)]).sum();
                worst = worst.max(s.norm());
            }
        }
        worst
    }
}

/// Reusable propagation state.
#[derive(Debug, Clone, Default)]
pub struct Stepper {
    ws: ActionWorkspace,
}

impl Stepper {
    /// v ← exp((L0 + eps·Leps)·dt)·v
    pub fn step(&mut self, split: &LiouvillianSplit, v: &mut [C64], eps: f64, dt: f64) {
        expm_action(&split.op, eps, dt, v, &mut self.ws);
    }

    /// v ← exp((L0 + eps·Leps)ᵀ·dt)·v
    pub fn step_transposed(&mut self, split: &LiouvillianSplit, v: &mut [C64], eps: f64, dt: f64) {
        expm_action(&split.op_t, eps, dt, v, &mut self.ws);
    }
}

/// Single piecewise-constant step, with input validation.
pub fn step_propagate(split: &LiouvillianSplit, rho_vec: &[C64], eps: f64, dt: f64) -> Result<Vec<C64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::NonFinite(format!("time step must be positive and finite, got {dt}")));
    }
    if !eps.is_finite() || rho_vec.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("field value or state contains NaN/inf".into()));
    }
    if rho_vec.len() != split.ne * split.ne {
        return Err(Error::DimensionMismatch(format!(
            "state length {} vs superoperator dimension {}",
            rho_vec.len(),
            split.ne * split.ne
        )));
    }
    let mut v = rho_vec.to_vec();
    Stepper::default().step(split, &mut v, eps, dt);
    Ok(v)
}

/// ⟨k|ρ|k⟩ read from a vectorized state, with tiny negative values reported as 0.
pub fn population_at(rho_vec: &[C64], ne: usize, pos: usize) -> f64 {
    clip_population(rho_vec[pos + pos * ne].re)
}

fn clip_population(p: f64) -> f64 {
    if p < 0.0 && p > -1e-7 {
        0.0
    } else {
        p
    }
}

/// Population of `level` in a density matrix of `model`.
pub fn population(model: &NvModel, rho: &DMatrix<C64>, level: Level) -> Result<f64> {
    let p = model.position(level)?;
    Ok(clip_population(rho[(p, p)].re))
}

pub fn trace(rho_vec: &[C64], ne: usize) -> C64 {
    (0..ne).map(|k| rho_vec[k + k * ne]).sum()
}

/// Worst-case physicality defects seen along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Physicality {
    pub max_trace_drift: f64,
    pub max_hermiticity_defect: f64,
    pub min_eigenvalue: f64,
}

impl Physicality {
    pub fn new() -> Self {
        Self { max_trace_drift: 0.0, max_hermiticity_defect: 0.0, min_eigenvalue: f64::INFINITY }
    }

    pub fn observe(&mut self, rho_vec: &[C64], ne: usize) {
        let rho = devectorize(rho_vec);
        self.max_trace_drift = self.max_trace_drift.max((trace(rho_vec, ne) - C64::new(1.0, 0.0)).norm());
        self.max_hermiticity_defect = self.max_hermiticity_defect.max(hermiticity_defect(&rho));
        self.min_eigenvalue = self.min_eigenvalue.min(min_hermitian_eigenvalue(&rho));
    }

    pub fn is_physical(&self) -> bool {
        self.max_trace_drift < 1e-8 && self.max_hermiticity_defect < 1e-10 && self.min_eigenvalue > -1e-7
    }
}

/// Recorded populations along a propagated trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub levels: Vec<Level>,
    /// Times (ns) of the recorded rows; row 0 is t = 0.
    pub times: Vec<f64>,
    /// `populations[row][k]` for `levels[k]`.
    pub populations: Vec<Vec<f64>>,
    pub traces: Vec<f64>,
    pub final_state: Vec<C64>,
    pub physicality: Physicality,
}

impl Trajectory {
    pub fn final_population(&self, level: Level) -> Option<f64> {
        let k = self.levels.iter().position(|&l| l == level)?;
        self.populations.last().map(|row| row[k])
    }
}

/// Options for [`propagate_trajectory`].
#[derive(Debug, Clone)]
pub struct RecordOptions {
    pub levels: Vec<Level>,
    /// Record every `stride` segments (the final segment is always recorded).
    pub stride: usize,
    /// Run the eigenvalue-based physicality checks on recorded rows.
    pub check_physicality: bool,
}

impl RecordOptions {
    pub fn final_only(levels: Vec<Level>) -> Self {
        Self { levels, stride: usize::MAX, check_physicality: false }
    }
}

/// Propagates `rho0` through every segment of `field`.
pub fn propagate_trajectory(
    model: &NvModel,
    split: &LiouvillianSplit,
    field: &ControlField,
    rho0: &DMatrix<C64>,
    record: &RecordOptions,
) -> Result<Trajectory> {
    let ne = model.dims();
    if split.ne() != ne || rho0.nrows() != ne || rho0.ncols() != ne {
        return Err(Error::DimensionMismatch(format!(
            "model has {ne} levels, superoperator {} and state {}x{}",
            split.ne(),
            rho0.nrows(),
            rho0.ncols()
        )));
    }
    let positions: Vec<usize> = record.levels.iter().map(|&l| model.position(l)).collect::<Result<_>>()?;
    let stride = record.stride.max(1);

    let mut v = vectorize(rho0);
    let mut out = Trajectory {
        levels: record.levels.clone(),
        times: Vec::new(),
        populations: Vec::new(),
        traces: Vec::new(),
        final_state: Vec::new(),
        physicality: Physicality::new(),
    };
    let push = |t: f64, v: &[C64], out: &mut Trajectory| {
        out.times.push(t);
        out.populations.push(positions.iter().map(|&p| population_at(v, ne, p)).collect());
        out.traces.push(trace(v, ne).re);
        if record.check_physicality {
            out.physicality.observe(v, ne);
        }
    };
    push(0.0, &v, &mut out);

    let mut stepper = Stepper::default();
    let n = field.n_segments();
    let dt = field.dt();
    for j in 0..n {
        let eps = field.sample_eps(j);
        if !eps.is_finite() {
            return Err(Error::NonFinite(format!("field value at segment {j}")));
        }
        stepper.step(split, &mut v, eps, dt);
        if (j + 1) % stride == 0 || j + 1 == n {
            push((j + 1) as f64 * dt, &v, &mut out);
        }
    }
    if !record.check_physicality {
        out.physicality.observe(&v, ne);
    }
    out.final_state = v;
    Ok(out)
}

/// Independent cross-checks: Kronecker-product superoperators and a
/// matrix-form RK4 integrator that never touches Liouville space.
pub mod oracle {
    use super::*;

    fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
        a.kronecker(b)
    }

    /// −i(I⊗H − Hᵀ⊗I) + Σ Γ (Ō⊗O − ½ I⊗O†O − ½ (O†O)ᵀ⊗I) for column-major stacking.
    pub fn tensor_liouvillian(h: &DMatrix<C64>, jumps: &[(usize, usize, f64)]) -> DMatrix<C64> {
        let n = h.nrows();
        let id = DMatrix::<C64>::identity(n, n);
        let mut l = (kron(&id, h) - kron(&h.transpose(), &id)) * (-I);
        for &(from, to, rate) in jumps {
            let mut o = DMatrix::<C64>::zeros(n, n);
            o[(to, from)] = C64::new(1.0, 0.0);
            let od_o = o.adjoint() * &o;
            l += (kron(&o.conjugate(), &o)
                - kron(&id, &od_o) * C64::from(0.5)
                - kron(&od_o.transpose(), &id) * C64::from(0.5))
                * C64::from(rate);
        }
        l
    }

    /// Classical RK4 on the matrix master equation, `substeps` per segment,
    /// with the field held at the segment's sampled value. Returns the
    /// populations of `levels` after every segment.
    pub fn rk4_populations(
        model: &NvModel,
        field: &ControlField,
        rho0: &DMatrix<C64>,
        levels: &[Level],
        substeps: usize,
    ) -> Result<(Vec<Vec<f64>>, DMatrix<C64>)> {
        let jumps = jump_positions(model);
        let pos: Vec<usize> = levels.iter().map(|&l| model.position(l)).collect::<Result<_>>()?;
        let h_step = field.dt() / substeps as f64;
        let mut rho = rho0.clone();
        let mut rows = Vec::with_capacity(field.n_segments());
        for j in 0..field.n_segments() {
            let h = &model.h_static + &model.v_pattern * C64::from(field.sample_eps(j));
            let f = |r: &DMatrix<C64>| lindblad_rhs(&h, &jumps, r);
            for _ in 0..substeps {
                let k1 = f(&rho);
                let k2 = f(&(&rho + &k1 * C64::from(h_step / 2.0)));
                let k3 = f(&(&rho + &k2 * C64::from(h_step / 2.0)));
                let k4 = f(&(&rho + &k3 * C64::from(h_step)));
                rho += (k1 + (k2 + k3) * C64::from(2.0) + k4) * C64::from(h_step / 6.0);
            }
            rows.push(pos.iter().map(|&p| rho[(p, p)].re).collect());
        }
        Ok((rows, rho))
    }
}
