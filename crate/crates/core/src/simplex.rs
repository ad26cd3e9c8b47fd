//! Bounded Nelder-Mead maximization.
//!
//! Trial points outside the box are clipped onto it. Non-finite objective
//! values rank below every finite one.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    pub max_evals: usize,
    /// Stop once max φ − min φ over the simplex falls below this.
    pub stall_tol: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Offset of the initial vertices as a fraction of each box width.
    pub initial_step: f64,
}

impl SimplexConfig {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            max_evals: 600,
            stall_tol: 1e-6,
            lower,
            upper,
            initial_step: 0.05,
        }
    }

    /// Box over (a, μ, σ) for a pulse of duration `total`: a ∈ [0, a_max],
    /// μ ∈ [T/4, 3T/4], σ ∈ [T/20, 3T/20].
    pub fn gaussian_box(total: f64, a_max: f64) -> Self {
        Self::new(vec![0.0, total / 4.0, total / 20.0], vec![a_max, 3.0 * total / 4.0, 3.0 * total / 20.0])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            errs.push("bounds must be non-empty and of equal length".to_string());
        }
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                errs.push(format!("bound {i} is not a finite interval: [{lo}, {hi}]"));
            }
        }
        let coeffs = [
            ("reflection", self.reflection > 0.0),
            ("expansion", self.expansion > 1.0),
            ("contraction", self.contraction > 0.0 && self.contraction < 1.0),
            ("shrink", self.shrink > 0.0 && self.shrink < 1.0),
            ("initial_step", self.initial_step > 0.0 && self.initial_step <= 1.0),
        ];
        for (name, ok) in coeffs {
            if !ok {
                errs.push(format!("{name} coefficient out of range"));
            }
        }
        if self.max_evals == 0 {
            errs.push("max_evals must be positive".into());
        }
        if !(self.stall_tol >= 0.0) {
            errs.push(format!("stall_tol must be non-negative, got {}", self.stall_tol));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    fn clip(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexOutcome {
    pub best: Vec<f64>,
    pub value: f64,
    /// Best-so-far φ after the initial simplex and after every iteration.
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub iters: usize,
}

/// Maximizes `objective` inside the configured box starting from `start`.
pub fn nelder_mead<F>(mut objective: F, start: &[f64], cfg: &SimplexConfig) -> Result<SimplexOutcome>
where
    F: FnMut(&[f64]) -> f64,
{
    cfg.validate()?;
    let d = cfg.dim();
    if start.len() != d {
        return Err(Error::DimensionMismatch(format!("start has {} coordinates, box has {d}", start.len())));
    }
    if start.iter().zip(&cfg.lower).zip(&cfg.upper).any(|((x, lo), hi)| !(x >= lo && x <= hi)) {
        return Err(Error::InvalidField(format!("start {start:?} lies outside the box")));
    }

    let evals = Cell::new(0usize);
    // internally minimize g = −φ with non-finite mapped to +∞
    let mut g = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let v = objective(x);
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };

    let mut pts: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..d {
        let mut x = start.to_vec();
        let step = cfg.initial_step * (cfg.upper[i] - cfg.lower[i]);
        x[i] = if x[i] + step <= cfg.upper[i] { x[i] + step } else { x[i] - step };
        pts.push(x);
    }
    let mut vals: Vec<f64> = pts.iter().map(|x| g(x)).collect();

    let mut history = Vec::new();
    let mut iters = 0;
    loop {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        history.push(-vals[0]);

        let spread = vals[d] - vals[0];
        if evals.get() >= cfg.max_evals || (spread.is_finite() && spread <= cfg.stall_tol) {
            break;
        }
        iters += 1;

        let mut c = vec![0.0; d];
        for p in &pts[..d] {
            for (ci, pi) in c.iter_mut().zip(p) {
                *ci += pi / d as f64;
            }
        }
        let toward = |from: &[f64], to: &[f64], k: f64| -> Vec<f64> {
            let mut x: Vec<f64> = from.iter().zip(to).map(|(f, t)| f + k * (t - f)).collect();
            cfg.clip(&mut x);
            x
        };

        let xr = toward(&c, &pts[d], -cfg.reflection);
        let gr = g(&xr);
        if gr < vals[0] {
            let xe = toward(&c, &xr, cfg.expansion);
            let ge = g(&xe);
            if ge < gr {
                pts[d] = xe;
                vals[d] = ge;
            } else {
                pts[d] = xr;
                vals[d] = gr;
            }
            continue;
        }
        if gr < vals[d - 1] {
            pts[d] = xr;
            vals[d] = gr;
            continue;
        }
        let (xc, gc, accept) = if gr < vals[d] {
            let xc = toward(&c, &xr, cfg.contraction);
            let gc = g(&xc);
            (xc, gc, gc <= gr)
        } else {
            let xc = toward(&c, &pts[d], cfg.contraction);
            let gc = g(&xc);
            (xc, gc, gc < vals[d])
        };
        if accept {
            pts[d] = xc;
            vals[d] = gc;
            continue;
        }
        for i in 1..=d {
            pts[i] = toward(&pts[0], &pts[i], cfg.shrink);
            vals[i] = g(&pts[i]);
        }
    }

    Ok(SimplexOutcome { best: pts[0].clone(), value: -vals[0], history, evaluations: evals.get(), iters })
}
