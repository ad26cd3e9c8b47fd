//! Gaussian STIRAP scans and time-step convergence.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Setup, Variant};
use crate::error::{Error, Result};
use crate::liouville::{oracle, propagate_trajectory, LiouvillianSplit, Physicality, RecordOptions, Trajectory};
use crate::model::{Level, NvModel};
use crate::pulses::{gaussian_stirap, ControlField, GaussianParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSpec {
    pub variants: Vec<Variant>,
    /// Peak amplitudes a in GHz-labelled units.
    pub amplitudes: Vec<f64>,
    #[serde(rename = "T_ns")]
    pub durations: Vec<f64>,
    /// Segments between physicality checks.
    pub check_stride: usize,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            variants: Variant::FOUR.to_vec(),
            amplitudes: vec![0.2, 0.5, 1.0, 3.0, 5.0, 7.0, 9.0],
            durations: vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            check_stride: 100,
        }
    }
}

impl ScanSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.variants.is_empty() || self.amplitudes.is_empty() || self.durations.is_empty() {
            errs.push("stirap_scan: variants, amplitudes and T_ns must be non-empty".into());
        }
        if self.amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            errs.push("stirap_scan.amplitudes: values must be finite and non-negative".into());
        }
        if self.durations.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            errs.push("stirap_scan.T_ns: values must be positive".into());
        }
        if self.check_stride == 0 {
            errs.push("stirap_scan.check_stride must be positive".into());
        }
        errs
    }
}

/// One (variant, a, T) point of a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub variant: String,
    pub dims: usize,
    pub dissipation: bool,
    pub a: f64,
    #[serde(rename = "T_ns")]
    pub t_ns: f64,
    pub p_plus1: f64,
    pub p_minus1: f64,
    pub p_a2: f64,
    pub max_trace_drift: f64,
    pub max_hermiticity_defect: f64,
    pub min_eigenvalue: f64,
}

impl ScanRow {
    pub fn physicality(&self) -> Physicality {
        Physicality {
            max_trace_drift: self.max_trace_drift,
            max_hermiticity_defect: self.max_hermiticity_defect,
            min_eigenvalue: self.min_eigenvalue,
        }
    }
}

fn stirap_trajectory(
    setup: &Setup,
    model: &NvModel,
    split: &LiouvillianSplit,
    a: f64,
    total: f64,
    dt: f64,
    record: &RecordOptions,
) -> Result<(ControlField, Trajectory)> {
    let field =
        gaussian_stirap(&GaussianParams::stirap_defaults(a, total), total, dt, model.carriers(), setup.convention)?;
    let rho0 = model.pure_state(Level::MinusOne)?;
    let tr = propagate_trajectory(model, split, &field, &rho0, record)?;
    Ok((field, tr))
}

/// Final populations for Gaussian pulses with σ = T/10, μ± = T/2 ± σ over
/// every (variant, a, T) of the spec.
pub fn run_stirap_scan(setup: &Setup, spec: &ScanSpec) -> Result<Vec<ScanRow>> {
    let errs = spec.validate();
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let models: Vec<(Variant, NvModel, LiouvillianSplit)> = spec
        .variants
        .iter()
        .map(|v| {
            let m = v.model(&setup.constants)?;
            let s = LiouvillianSplit::assemble(&m);
            Ok((*v, m, s))
        })
        .collect::<Result<_>>()?;
    let mut units = Vec::new();
    for vi in 0..models.len() {
        for &a in &spec.amplitudes {
            for &t in &spec.durations {
                units.push((vi, a, t));
            }
        }
    }
    let record = RecordOptions {
        levels: vec![Level::PlusOne, Level::MinusOne, Level::A2],
        stride: spec.check_stride,
        check_physicality: true,
    };
    let rows: Vec<Result<ScanRow>> = setup.in_pool(|| {
        units
            .par_iter()
            .map(|&(vi, a, t)| {
                let (v, m, s) = &models[vi];
                let (_, tr) = stirap_trajectory(setup, m, s, a, t, setup.dt, &record)?;
                let last = tr.populations.last().expect("trajectory has rows");
                Ok(ScanRow {
                    variant: v.label(),
                    dims: v.dims,
                    dissipation: v.dissipation,
                    a,
                    t_ns: t,
                    p_plus1: last[0],
                    p_minus1: last[1],
                    p_a2: last[2],
                    max_trace_drift: tr.physicality.max_trace_drift,
                    max_hermiticity_defect: tr.physicality.max_hermiticity_defect,
                    min_eigenvalue: tr.physicality.min_eigenvalue,
                })
            })
            .collect()
    })?;
    rows.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DtConvergenceSpec {
    pub variant: Variant,
    pub a: f64,
    #[serde(rename = "T_ns")]
    pub total: f64,
    /// Segment lengths, coarse to fine.
    pub dts: Vec<f64>,
    /// RK4 substeps per segment for the cross-check at the setup's dt; 0
    /// skips it.
    pub rk4_substeps: usize,
    /// Use a zero field instead of the Gaussian pair.
    pub zero_field: bool,
}

impl Default for DtConvergenceSpec {
    fn default() -> Self {
        Self {
            variant: Variant::new(10, true),
            a: 5.0,
            total: 100.0,
            dts: vec![0.02, 0.01, 0.005, 0.0025],
            rk4_substeps: 10,
            zero_field: false,
        }
    }
}

impl DtConvergenceSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.dts.len() < 2 || self.dts.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            errs.push("dt_convergence.dts: need at least two positive step sizes".into());
        }
        if !(self.total.is_finite() && self.total > 0.0) {
            errs.push("dt_convergence.T_ns must be positive".into());
        }
        if !(self.a.is_finite() && self.a >= 0.0) {
            errs.push("dt_convergence.a must be finite and non-negative".into());
        }
        errs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtRow {
    pub dt_ns: f64,
    pub p_plus1: f64,
    /// |p(dt) − p(previous dt)|, empty on the first row.
    pub diff: Option<f64>,
    pub max_trace_drift: f64,
    pub max_hermiticity_defect: f64,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RkCheck {
    pub dt_ns: f64,
    pub substeps: usize,
    /// Largest |P_k(RK4) − P_k(exponential chain)| over all levels and segments.
    pub max_population_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtConvergence {
    pub rows: Vec<DtRow>,
    /// Successive differences shrink monotonically.
    pub monotone: bool,
    pub rk4: Option<RkCheck>,
}

/// Final |+1⟩ population along a ladder of step sizes plus an RK4
/// cross-check of every population at the setup's dt.
pub fn run_dt_convergence(setup: &Setup, spec: &DtConvergenceSpec) -> Result<DtConvergence> {
    let errs = spec.validate();
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let model = spec.variant.model(&setup.constants)?;
    let split = LiouvillianSplit::assemble(&model);
    let rho0 = model.pure_state(Level::MinusOne)?;
    let field_at = |dt: f64| -> Result<ControlField> {
        if spec.zero_field {
            ControlField::zero(spec.total, dt, model.carriers())
        } else {
            gaussian_stirap(
                &GaussianParams::stirap_defaults(spec.a, spec.total),
                spec.total,
                dt,
                model.carriers(),
                setup.convention,
            )
        }
    };
    let record = RecordOptions { levels: vec![Level::PlusOne], stride: 200, check_physicality: true };
    let finals: Vec<Result<(f64, Physicality)>> = setup.in_pool(|| {
        spec.dts
            .par_iter()
            .map(|&dt| {
                let tr = propagate_trajectory(&model, &split, &field_at(dt)?, &rho0, &record)?;
                Ok((tr.final_population(Level::PlusOne).unwrap_or(f64::NAN), tr.physicality))
            })
            .collect()
    })?;
    let mut rows = Vec::new();
    let mut prev: Option<f64> = None;
    for (&dt, r) in spec.dts.iter().zip(finals) {
        let (p, ph) = r?;
        rows.push(DtRow {
            dt_ns: dt,
            p_plus1: p,
            diff: prev.map(|q| (p - q).abs()),
            max_trace_drift: ph.max_trace_drift,
            max_hermiticity_defect: ph.max_hermiticity_defect,
            min_eigenvalue: ph.min_eigenvalue,
        });
        prev = Some(p);
    }
    let diffs: Vec<f64> = rows.iter().filter_map(|r| r.diff).collect();
    let monotone = diffs.windows(2).all(|w| w[1] <= w[0]);

    let rk4 = if spec.rk4_substeps > 0 {
        let field = field_at(setup.dt)?;
        let levels = model.levels().to_vec();
        let tr = propagate_trajectory(
            &model,
            &split,
            &field,
            &rho0,
            &RecordOptions { levels: levels.clone(), stride: 1, check_physicality: false },
        )?;
        let (rk_rows, _) = oracle::rk4_populations(&model, &field, &rho0, &levels, spec.rk4_substeps)?;
        let mut worst = 0.0_f64;
        for (rk, ex) in rk_rows.iter().zip(&tr.populations[1..]) {
            for (a, b) in rk.iter().zip(ex) {
                worst = worst.max((a - b).abs());
            }
        }
        Some(RkCheck { dt_ns: setup.dt, substeps: spec.rk4_substeps, max_population_diff: worst })
    } else {
        None
    };
    Ok(DtConvergence { rows, monotone, rk4 })
}
