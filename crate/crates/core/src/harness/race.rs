//! Random-restart optimization race over the four strategies.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Method, Setup, Variant};
use crate::error::{Error, Result};
use crate::grape::{grape_optimize, GradientScheme, GrapeConfig, TargetWeights, TransferProblem};
use crate::liouville::{propagate_trajectory, Physicality, RecordOptions};
use crate::model::Level;
use crate::pulses::{gaussian_stirap, ControlField, GaussianParams, PulseFile};
use crate::simplex::{nelder_mead, SimplexConfig};

/// Ranges the random initial points are drawn from (uniformly).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitRanges {
    /// Peak or constant amplitude a, GHz-labelled.
    pub amplitude: [f64; 2],
    /// Gaussian centre μ as a fraction of T.
    pub mu_frac: [f64; 2],
    /// Gaussian width σ as a fraction of T.
    pub sigma_frac: [f64; 2],
    /// Initial global detuning for rabi-detuning, GHz-labelled.
    pub delta: [f64; 2],
}

impl Default for InitRanges {
    fn default() -> Self {
        Self { amplitude: [0.0, 3.0], mu_frac: [0.25, 0.75], sigma_frac: [0.05, 0.15], delta: [0.0, 3.0] }
    }
}

/// Search box and stopping rule of the Nelder-Mead strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimplexSettings {
    pub max_evals: usize,
    pub stall_tol: f64,
    /// Upper bound on a; defaults to the GRAPE amplitude cap.
    pub amplitude_max: Option<f64>,
    pub mu_frac: [f64; 2],
    pub sigma_frac: [f64; 2],
}

impl Default for SimplexSettings {
    fn default() -> Self {
        Self { max_evals: 600, stall_tol: 1e-6, amplitude_max: None, mu_frac: [0.0, 1.0], sigma_frac: [0.005, 1.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RaceSpec {
    pub methods: Vec<Method>,
    #[serde(rename = "T_ns")]
    pub durations: Vec<f64>,
    pub n_restarts: usize,
    pub seed: u64,
    pub variant: Variant,
    /// Envelope hold length ℓ in ns; `None` holds per segment.
    pub resolution_ns: Option<f64>,
    pub weights: TargetWeights,
    pub grape: GrapeConfig,
    pub gradient: GradientScheme,
    pub simplex: SimplexSettings,
    pub init: InitRanges,
}

impl Default for RaceSpec {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            durations: vec![1.0],
            n_restarts: 500,
            seed: 0,
            variant: Variant::new(10, true),
            resolution_ns: None,
            weights: TargetWeights::default(),
            grape: GrapeConfig::default(),
            gradient: GradientScheme::default(),
            simplex: SimplexSettings::default(),
            init: InitRanges::default(),
        }
    }
}

fn check_range(errs: &mut Vec<String>, name: &str, r: [f64; 2]) {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        errs.push(format!("{name}: [{}, {}] is not an interval", r[0], r[1]));
    }
}

impl RaceSpec {
    pub fn validate(&self, prefix: &str) -> Vec<String> {
        let mut errs = Vec::new();
        if self.methods.is_empty() {
            errs.push(format!("{prefix}.methods must not be empty"));
        }
        if self.durations.is_empty() || self.durations.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            errs.push(format!("{prefix}.T_ns must be a non-empty list of positive durations"));
        }
        if self.n_restarts == 0 {
            errs.push(format!("{prefix}.n_restarts must be positive"));
        }
        if let Some(l) = self.resolution_ns {
            if !(l.is_finite() && l > 0.0) {
                errs.push(format!("{prefix}.resolution_ns must be positive"));
            }
        }
        errs.extend(self.grape.violations().into_iter().map(|e| format!("{prefix}.grape: {e}")));
        let init = &self.init;
        check_range(&mut errs, &format!("{prefix}.init.amplitude"), init.amplitude);
        check_range(&mut errs, &format!("{prefix}.init.mu_frac"), init.mu_frac);
        check_range(&mut errs, &format!("{prefix}.init.sigma_frac"), init.sigma_frac);
        check_range(&mut errs, &format!("{prefix}.init.delta"), init.delta);
        if init.sigma_frac[0] <= 0.0 {
            errs.push(format!("{prefix}.init.sigma_frac must stay positive"));
        }
        let sx = &self.simplex;
        check_range(&mut errs, &format!("{prefix}.simplex.mu_frac"), sx.mu_frac);
        check_range(&mut errs, &format!("{prefix}.simplex.sigma_frac"), sx.sigma_frac);
        if sx.sigma_frac[0] <= 0.0 {
            errs.push(format!("{prefix}.simplex.sigma_frac must stay positive"));
        }
        if sx.max_evals == 0 {
            errs.push(format!("{prefix}.simplex.max_evals must be positive"));
        }
        if !(sx.stall_tol >= 0.0) {
            errs.push(format!("{prefix}.simplex.stall_tol must be non-negative"));
        }
        if let Some(a) = sx.amplitude_max {
            if !(a.is_finite() && a > 0.0) {
                errs.push(format!("{prefix}.simplex.amplitude_max must be positive"));
            }
        }
        errs
    }

    fn simplex_config(&self, total: f64) -> SimplexConfig {
        let sx = &self.simplex;
        let a_max = sx.amplitude_max.unwrap_or(self.grape.amplitude_cap);
        let mut cfg = SimplexConfig::new(
            vec![0.0, sx.mu_frac[0] * total, sx.sigma_frac[0] * total],
            vec![a_max, sx.mu_frac[1] * total, sx.sigma_frac[1] * total],
        );
        cfg.max_evals = sx.max_evals;
        cfg.stall_tol = sx.stall_tol;
        cfg
    }
}

/// Random starting point of one restart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialPoint {
    pub a: f64,
    pub mu: f64,
    pub sigma: f64,
    #[serde(rename = "Delta")]
    pub delta: f64,
}

/// Record of one restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationRun {
    pub seed: u64,
    pub method: Method,
    pub restart: usize,
    #[serde(rename = "T_ns")]
    pub t_ns: f64,
    pub resolution_ns: f64,
    pub initial: InitialPoint,
    pub phi_history: Vec<f64>,
    pub best_pulse: PulseFile,
    /// (a, μ, σ) of the Nelder-Mead optimum.
    pub gaussian: Option<[f64; 3]>,
    pub phi: f64,
    pub p3: f64,
    pub p4bar: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    pub iters: usize,
    pub evaluations: usize,
    pub stop: String,
    pub max_amplitude: f64,
    pub wall_time_s: f64,
}

fn draw(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    rng.random_range(r[0]..=r[1])
}

/// Runs restart `restart` of `method` at duration `total`. The generator is
/// ChaCha8 seeded with `spec.seed + restart`.
pub fn run_single(
    setup: &Setup,
    problem: &TransferProblem,
    spec: &RaceSpec,
    method: Method,
    total: f64,
    restart: usize,
) -> Result<OptimizationRun> {
    let started = Instant::now();
    let seed = spec.seed.wrapping_add(restart as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = InitialPoint {
        a: draw(&mut rng, spec.init.amplitude),
        mu: draw(&mut rng, spec.init.mu_frac) * total,
        sigma: draw(&mut rng, spec.init.sigma_frac) * total,
        delta: draw(&mut rng, spec.init.delta),
    };
    let resolution = spec.resolution_ns.unwrap_or(setup.dt);
    let car = problem.model.carriers();
    let gaussian = |a: f64, mu: f64, sigma: f64| -> Result<ControlField> {
        gaussian_stirap(&GaussianParams::mirrored(a, mu, sigma, total), total, setup.dt, car, setup.convention)?
            .rebin(resolution)
    };
    let w = &spec.weights;

    let run = |field: &ControlField,
               history: Vec<f64>,
               gaussian: Option<[f64; 3]>,
               iters: usize,
               evaluations: usize,
               stop: String|
     -> Result<OptimizationRun> {
        let value = problem.eval_phi(field, w)?;
        Ok(OptimizationRun {
            seed,
            method,
            restart,
            t_ns: total,
            resolution_ns: resolution,
            initial: init,
            phi_history: history,
            best_pulse: field.to_pulse_file(),
            gaussian,
            phi: value.phi,
            p3: value.p3,
            p4bar: value.p4bar,
            energy: value.energy,
            iters,
            evaluations,
            stop,
            max_amplitude: field.max_amplitude(),
            wall_time_s: started.elapsed().as_secs_f64(),
        })
    };

    match method {
        Method::AdiabaticNm => {
            let cfg = spec.simplex_config(total);
            let mut start = vec![init.a, init.mu, init.sigma];
            for ((x, lo), hi) in start.iter_mut().zip(&cfg.lower).zip(&cfg.upper) {
                *x = x.clamp(*lo, *hi);
            }
            let out = nelder_mead(
                |x| match gaussian(x[0], x[1], x[2]).and_then(|f| problem.eval_phi(&f, w)) {
                    Ok(v) => v.phi,
                    Err(_) => f64::NAN,
                },
                &start,
                &cfg,
            )?;
            let best = [out.best[0], out.best[1], out.best[2]];
            let field = gaussian(best[0], best[1], best[2])?;
            let stop = if out.evaluations >= cfg.max_evals { "max_evals" } else { "stalled" };
            run(&field, out.history, Some(best), out.iters, out.evaluations, stop.into())
        }
        _ => {
            let field0 = match method {
                Method::AdiabaticGrape => gaussian(init.a, init.mu, init.sigma)?,
                Method::RabiResonant => {
                    ControlField::constant(init.a, total, setup.dt, car, setup.convention)?.rebin(resolution)?
                }
                _ => ControlField::constant(init.a, total, setup.dt, car, setup.convention)?
                    .rebin(resolution)?
                    .with_delta(init.delta),
            };
            let cfg = GrapeConfig { optimize_detuning: method == Method::RabiDetuning, ..spec.grape.clone() };
            let out = grape_optimize(problem, &field0, w, &cfg)?;
            let stop = serde_json::to_value(out.stop)?.as_str().unwrap_or_default().to_string();
            run(&out.best, out.phi_history, None, out.iters, out.evaluations, stop)
        }
    }
}

/// Best-of-restarts digest for one (method, T).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceSummary {
    pub method: Method,
    #[serde(rename = "T_ns")]
    pub t_ns: f64,
    pub resolution_ns: f64,
    pub n_runs: usize,
    pub best_p3: f64,
    pub best_restart: usize,
    pub best_seed: u64,
    pub winner_max_amplitude: f64,
    #[serde(rename = "winner_Delta")]
    pub winner_delta: f64,
    pub mean_p3: f64,
    pub median_p3: f64,
    pub min_p3: f64,
    /// Reference best for this configuration, where one exists.
    pub reference_p3: Option<f64>,
    pub winner_physicality: Physicality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceReport {
    pub runs: Vec<OptimizationRun>,
    pub summary: Vec<RaceSummary>,
}

impl RaceReport {
    pub fn summary_for(&self, method: Method, total: f64) -> Option<&RaceSummary> {
        self.summary.iter().find(|s| s.method == method && s.t_ns == total)
    }

    /// Largest p3 among the GRAPE strategies.
    pub fn best_grape_p3(&self) -> Option<f64> {
        self.summary.iter().filter(|s| s.method.is_grape()).map(|s| s.best_p3).reduce(f64::max)
    }
}

/// Reference T = 1 ns bests of the 10-level dissipative model, per segment
/// (`resolution_ns` = dt) and for 0.05 ns envelope blocks.
pub fn reference_p3(method: Method, total: f64, resolution_ns: f64, dt: f64, variant: Variant) -> Option<f64> {
    if variant != Variant::new(10, true) || (total - 1.0).abs() > 1e-12 {
        return None;
    }
    let i = Method::ALL.iter().position(|&m| m == method)?;
    if (resolution_ns - dt).abs() < 1e-12 {
        Some([0.8469, 0.9770, 0.9842, 0.9816][i])
    } else if (resolution_ns - 0.05).abs() < 1e-12 {
        Some([0.8062, 0.9765, 0.9724, 0.9662][i])
    } else {
        None
    }
}

/// Runs `n_restarts` restarts of every (method, T) on the worker pool and
/// merges them in index order.
pub fn run_optimization_race(setup: &Setup, spec: &RaceSpec) -> Result<RaceReport> {
    let errs = spec.validate("optimize");
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let model = spec.variant.model(&setup.constants)?;
    let problem = TransferProblem::from_minus_one(model)?.with_scheme(spec.gradient);
    let mut units = Vec::new();
    for &t in &spec.durations {
        for &m in &spec.methods {
            for r in 0..spec.n_restarts {
                units.push((m, t, r));
            }
        }
    }
    let results: Vec<Result<OptimizationRun>> =
        setup.in_pool(|| units.par_iter().map(|&(m, t, r)| run_single(setup, &problem, spec, m, t, r)).collect())?;
    let runs: Vec<OptimizationRun> = results.into_iter().collect::<Result<_>>()?;

    let mut summary = Vec::new();
    for &t in &spec.durations {
        for &m in &spec.methods {
            let group: Vec<&OptimizationRun> = runs.iter().filter(|r| r.method == m && r.t_ns == t).collect();
            summary.push(summarize(setup, &problem, spec, &group)?);
        }
    }
    Ok(RaceReport { runs, summary })
}

fn summarize(
    setup: &Setup,
    problem: &TransferProblem,
    spec: &RaceSpec,
    group: &[&OptimizationRun],
) -> Result<RaceSummary> {
    // highest p3, ties to the lowest restart index
    let winner = group
        .iter()
        .copied()
        .reduce(|best, r| if r.p3 > best.p3 || (r.p3 == best.p3 && r.restart < best.restart) { r } else { best })
        .ok_or_else(|| Error::Config(vec!["race produced no runs".into()]))?;
    let mut p3s: Vec<f64> = group.iter().map(|r| r.p3).collect();
    p3s.sort_by(f64::total_cmp);
    let n = p3s.len();
    let median = if n % 2 == 1 { p3s[n / 2] } else { 0.5 * (p3s[n / 2 - 1] + p3s[n / 2]) };

    let field = ControlField::from_pulse_file(&winner.best_pulse, problem.model.carriers())?;
    let rho0 = problem.model.pure_state(Level::MinusOne)?;
    let tr = propagate_trajectory(
        &problem.model,
        &problem.split,
        &field,
        &rho0,
        &RecordOptions { levels: vec![Level::PlusOne], stride: 1, check_physicality: true },
    )?;
    Ok(RaceSummary {
        method: winner.method,
        t_ns: winner.t_ns,
        resolution_ns: winner.resolution_ns,
        n_runs: n,
        best_p3: winner.p3,
        best_restart: winner.restart,
        best_seed: winner.seed,
        winner_max_amplitude: winner.max_amplitude,
        winner_delta: winner.best_pulse.delta_ghz,
        mean_p3: p3s.iter().sum::<f64>() / n as f64,
        median_p3: median,
        min_p3: p3s[0],
        reference_p3: reference_p3(winner.method, winner.t_ns, winner.resolution_ns, setup.dt, spec.variant),
        winner_physicality: tr.physicality,
    })
}

/// The race with envelopes held on blocks of `resolution_ns` (0.05 ns unless
/// the spec sets another value).
pub fn run_resolution_study(setup: &Setup, spec: &RaceSpec) -> Result<RaceReport> {
    let spec = RaceSpec { resolution_ns: Some(spec.resolution_ns.unwrap_or(0.05)), ..spec.clone() };
    run_optimization_race(setup, &spec)
}
