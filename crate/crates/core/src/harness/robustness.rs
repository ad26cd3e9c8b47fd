//! Final fidelity under systematic amplitude and detuning errors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Setup;
use crate::error::{Error, Result};
use crate::grape::{TargetWeights, TransferProblem};
use crate::pulses::ControlField;
use crate::units::ghz;

/// `points` evenly spaced values from `min` to `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn symmetric(half_width: f64, points: usize) -> Self {
        Self { min: -half_width, max: half_width, points }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                // the midpoint of a symmetric odd grid comes out as exactly 0
                if 2 * i + 1 == self.points && self.min == -self.max {
                    0.0
                } else {
                    self.min + step * i as f64
                }
            })
            .collect()
    }

    fn violations(&self, name: &str) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            errs.push(format!("{name}: [{}, {}] is not a finite interval", self.min, self.max));
        }
        if self.points == 0 {
            errs.push(format!("{name}.points must be positive"));
        }
        errs
    }
}

/// Relative amplitude error δΩ (common to both tones) against a global
/// detuning offset δΔ in rad/ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessGrid {
    pub d_omega: Axis,
    #[serde(rename = "d_Delta_rad_per_ns")]
    pub d_delta: Axis,
}

impl Default for RobustnessGrid {
    fn default() -> Self {
        Self { d_omega: Axis::symmetric(0.1, 21), d_delta: Axis::symmetric(ghz(0.2), 21) }
    }
}

impl RobustnessGrid {
    pub fn violations(&self, prefix: &str) -> Vec<String> {
        let mut errs = self.d_omega.violations(&format!("{prefix}.d_omega"));
        errs.extend(self.d_delta.violations(&format!("{prefix}.d_Delta_rad_per_ns")));
        if self.d_omega.min <= -1.0 {
            errs.push(format!("{prefix}.d_omega must stay above -1"));
        }
        errs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessMap {
    pub d_omega: Vec<f64>,
    #[serde(rename = "d_Delta_rad_per_ns")]
    pub d_delta: Vec<f64>,
    /// `p3[i][k]` at (d_omega[i], d_delta[k]).
    pub p3: Vec<Vec<f64>>,
    /// Unperturbed final population.
    pub nominal_p3: f64,
    /// Mean of nominal − p3 over the grid.
    pub mean_drop: f64,
    /// Second differences of p3 through the (0, 0) grid point along each axis.
    pub curvature_omega: Option<f64>,
    pub curvature_delta: Option<f64>,
}

impl RobustnessMap {
    /// p3 at the (0, 0) grid point, if the grid contains it.
    pub fn center(&self) -> Option<f64> {
        let i = self.d_omega.iter().position(|&v| v == 0.0)?;
        let k = self.d_delta.iter().position(|&v| v == 0.0)?;
        Some(self.p3[i][k])
    }
}

fn second_difference(xs: &[f64], ys: impl Fn(usize) -> f64) -> Option<f64> {
    let c = xs.iter().position(|&v| v == 0.0)?;
    if c == 0 || c + 1 >= xs.len() {
        return None;
    }
    let (h1, h2) = (xs[c] - xs[c - 1], xs[c + 1] - xs[c]);
    let (y0, y1, y2) = (ys(c - 1), ys(c), ys(c + 1));
    Some(2.0 * (h1 * y2 - (h1 + h2) * y1 + h2 * y0) / (h1 * h2 * (h1 + h2)))
}

/// Propagates `field` perturbed at every grid point.
pub fn run_robustness_map(
    setup: &Setup,
    problem: &TransferProblem,
    field: &ControlField,
    grid: &RobustnessGrid,
) -> Result<RobustnessMap> {
    let errs = grid.violations("robustness.grid");
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let w = TargetWeights::default();
    let nominal_p3 = problem.eval_phi(field, &w)?.p3;
    let d_omega = grid.d_omega.values();
    let d_delta = grid.d_delta.values();
    let scale = field.convention().scale();
    let points: Vec<(usize, usize)> =
        (0..d_omega.len()).flat_map(|i| (0..d_delta.len()).map(move |k| (i, k))).collect();
    let values: Vec<Result<f64>> = setup.in_pool(|| {
        points
            .par_iter()
            .map(|&(i, k)| Ok(problem.eval_phi(&field.perturb(d_omega[i], d_delta[k] / scale)?, &w)?.p3))
            .collect()
    })?;
    let mut p3 = vec![vec![0.0; d_delta.len()]; d_omega.len()];
    for (&(i, k), v) in points.iter().zip(values) {
        p3[i][k] = v?;
    }
    let count = (d_omega.len() * d_delta.len()) as f64;
    let mean_drop = p3.iter().flatten().map(|v| nominal_p3 - v).sum::<f64>() / count;
    let curvature_omega =
        d_delta.iter().position(|&v| v == 0.0).and_then(|k| second_difference(&d_omega, |i| p3[i][k]));
    let curvature_delta =
        d_omega.iter().position(|&v| v == 0.0).and_then(|i| second_difference(&d_delta, |k| p3[i][k]));
    Ok(RobustnessMap { d_omega, d_delta, p3, nominal_p3, mean_drop, curvature_omega, curvature_delta })
}
