//! Command-line entry point. Exit status: 0 on success, 1 on a runtime
//! failure, 2 on a usage or config error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{parse_config, Config};
use crate::error::{Error, Result};
use crate::grape::TransferProblem;
use crate::harness::{
    run_dt_convergence, run_invariant_suite, run_optimization_race, run_resolution_study, run_robustness_map,
    run_stirap_scan, Method, RaceReport, RaceSpec, Setup,
};
use crate::io::{ExperimentWriter, MapCsvRow, RunCsvRow};
use crate::liouville::{propagate_trajectory, LiouvillianSplit, RecordOptions};
use crate::model::Level;
use crate::pulses::{gaussian_stirap, ControlField, GaussianParams, PulseFile};

/// Environment variable that overrides `--workers`.
pub const WORKERS_ENV: &str = "NVOPT_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "nvopt", version, about = "NV-center spin-transfer simulation and optimal control")]
struct Cli {
    /// JSON config; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed of the optimization restarts.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (overridden by NVOPT_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Segment length in ns.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Pulse duration in ns.
    #[arg(long = "T", global = true)]
    total: Option<f64>,
    /// Restrict optimization to one method.
    #[arg(long, global = true)]
    method: Option<Method>,
    /// Restarts per method.
    #[arg(long, global = true)]
    restarts: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Propagate one trajectory and export its populations.
    Simulate,
    /// Final populations over a grid of amplitudes and durations.
    StirapScan,
    /// Random-restart optimization race.
    Optimize,
    /// Fidelity under amplitude and detuning errors.
    Robustness,
    /// The race with envelopes held on coarse time blocks.
    Resolution,
    /// Convergence of the final population in the step size.
    DtConvergence,
    /// Run the invariant suite.
    Validate,
}

impl Command {
    fn kind(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::StirapScan => "stirap-scan",
            Command::Optimize => "optimize",
            Command::Robustness => "robustness",
            Command::Resolution => "resolution",
            Command::DtConvergence => "dt-convergence",
            Command::Validate => "validate",
        }
    }
}

fn restrict(spec: &mut RaceSpec, cli: &Cli) {
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    if let Some(t) = cli.total {
        spec.durations = vec![t];
    }
    if let Some(m) = cli.method {
        spec.methods = vec![m];
    }
    if let Some(n) = cli.restarts {
        spec.n_restarts = n;
    }
}

/// Folds the flags and the environment into the config.
fn effective_config(cli: &Cli, env_workers: Option<String>) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => parse_config(p)?,
        None => Config::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if let Some(w) = env_workers {
        let n = w
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(vec![format!("{WORKERS_ENV}={w} is not a worker count")]))?;
        cfg.workers = Some(n);
    }
    if let Some(dt) = cli.dt {
        cfg.dt_ns = dt;
    }
    restrict(&mut cfg.optimize, cli);
    restrict(&mut cfg.resolution, cli);
    if let Some(n) = cli.restarts {
        cfg.robustness.n_restarts = n;
    }
    if let Some(t) = cli.total {
        cfg.simulate.total = t;
        cfg.stirap_scan.durations = vec![t];
        cfg.dt_convergence.total = t;
    }
    let errs = cfg.violations();
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errs))
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let cfg = match effective_config(&cli, std::env::var(WORKERS_ENV).ok()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("nvopt: {e}");
            return 2;
        }
    };
    match dispatch(cli.command, &cfg) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("nvopt: {e}");
            1
        }
    }
}

/// Returns whether the experiment succeeded.
fn dispatch(command: Command, cfg: &Config) -> Result<bool> {
    let setup = cfg.setup();
    let mut w = ExperimentWriter::create(cfg, command.kind())?;
    let mut seeds = Vec::new();
    let mut notes = Vec::new();
    let mut ok = true;
    match command {
        Command::Simulate => simulate(&setup, cfg, &mut w)?,
        Command::StirapScan => {
            let rows = run_stirap_scan(&setup, &cfg.stirap_scan)?;
            for r in &rows {
                println!("{} a={} T={} ns: P(+1) = {:.6}", r.variant, r.a, r.t_ns, r.p_plus1);
            }
            w.write_results(&rows)?;
        }
        Command::Optimize | Command::Resolution => {
            let spec = if command == Command::Optimize { &cfg.optimize } else { &cfg.resolution };
            let report = if command == Command::Optimize {
                run_optimization_race(&setup, spec)?
            } else {
                run_resolution_study(&setup, spec)?
            };
            write_race(&mut w, &report)?;
            seeds = restart_seeds(spec, spec.n_restarts);
        }
        Command::Robustness => {
            seeds = robustness(&setup, cfg, &mut w)?;
            notes.push(("amplitude_error", "relative, common to both tones".to_string()));
            notes.push(("detuning_error", "rad/ns offset added to the global detuning".to_string()));
        }
        Command::DtConvergence => {
            let conv = run_dt_convergence(&setup, &cfg.dt_convergence)?;
            for r in &conv.rows {
                println!("dt={} ns: P(+1) = {:.9}", r.dt_ns, r.p_plus1);
            }
            if let Some(rk) = &conv.rk4 {
                println!("RK4 ({} substeps) max population gap: {:.3e}", rk.substeps, rk.max_population_diff);
            }
            w.write_results(&conv.rows)?;
            w.write_json("summary.json", &conv)?;
        }
        Command::Validate => {
            let checks = run_invariant_suite(&setup)?;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            ok = checks.iter().all(|c| c.passed);
            w.write_results(&checks)?;
        }
    }
    let dir = w.dir().display().to_string();
    w.finish(&seeds, &notes)?;
    println!("wrote {dir}");
    Ok(ok)
}

fn restart_seeds(spec: &RaceSpec, n: usize) -> Vec<u64> {
    (0..n as u64).map(|r| spec.seed.wrapping_add(r)).collect()
}

fn load_pulse(path: &Path) -> Result<PulseFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    // a bare pulse file, or a run record carrying one
    let pulse = value.get("best_pulse").cloned().unwrap_or(value);
    Ok(serde_json::from_value(pulse)?)
}

fn simulate(setup: &Setup, cfg: &Config, w: &mut ExperimentWriter) -> Result<()> {
    let spec = &cfg.simulate;
    let model = spec.variant.model(&setup.constants)?;
    let split = LiouvillianSplit::assemble(&model);
    let field = match &spec.pulse_file {
        Some(p) => ControlField::from_pulse_file(&load_pulse(p)?, model.carriers())?,
        None => gaussian_stirap(
            &GaussianParams::stirap_defaults(spec.a, spec.total),
            spec.total,
            setup.dt,
            model.carriers(),
            setup.convention,
        )?,
    };
    let record = RecordOptions { levels: model.levels().to_vec(), stride: spec.stride, check_physicality: true };
    let tr = propagate_trajectory(&model, &split, &field, &model.pure_state(Level::MinusOne)?, &record)?;
    let finals: Vec<(String, f64)> =
        tr.levels.iter().map(|&l| (l.column_name().to_string(), tr.final_population(l).unwrap_or(f64::NAN))).collect();
    for (name, p) in &finals {
        println!("{name} = {p:.6}");
    }
    w.write_trajectory(&tr)?;
    #[derive(serde::Serialize)]
    struct Summary<'a> {
        variant: String,
        #[serde(rename = "T_ns")]
        t_ns: f64,
        final_populations: &'a [(String, f64)],
        physicality: crate::liouville::Physicality,
        pulse: PulseFile,
    }
    w.write_run(
        "trajectory",
        &Summary {
            variant: spec.variant.label(),
            t_ns: field.duration(),
            final_populations: &finals,
            physicality: tr.physicality,
            pulse: field.to_pulse_file(),
        },
    )?;
    Ok(())
}

fn write_race(w: &mut ExperimentWriter, report: &RaceReport) -> Result<()> {
    for s in &report.summary {
        let reference = s.reference_p3.map(|r| format!(" (reference {r})")).unwrap_or_default();
        println!(
            "{} T={} ns: best p3 = {:.4}{reference}, median {:.4} over {} restarts",
            s.method, s.t_ns, s.best_p3, s.median_p3, s.n_runs
        );
    }
    let rows: Vec<RunCsvRow> = report.runs.iter().map(RunCsvRow::new).collect();
    w.write_results(&rows)?;
    for run in &report.runs {
        w.write_run(&format!("{}_T{}_r{:04}", run.method, run.t_ns, run.restart), run)?;
    }
    w.write_json("summary.json", &serde_json::json!({ "summary": report.summary }))?;
    Ok(())
}

fn robustness(setup: &Setup, cfg: &Config, w: &mut ExperimentWriter) -> Result<Vec<u64>> {
    let spec = &cfg.robustness;
    let race = &cfg.optimize;
    let problem = TransferProblem::from_minus_one(race.variant.model(&setup.constants)?)?;
    let carriers = problem.model.carriers();
    let mut fields: Vec<(String, ControlField)> = Vec::new();
    let mut seeds = Vec::new();
    match &spec.pulse_file {
        Some(p) => {
            let name = p.file_stem().map_or("pulse".into(), |s| s.to_string_lossy().into_owned());
            fields.push((name, ControlField::from_pulse_file(&load_pulse(p)?, carriers)?));
        }
        None => {
            let race = RaceSpec { n_restarts: spec.n_restarts, ..race.clone() };
            let report = run_optimization_race(setup, &race)?;
            seeds = restart_seeds(&race, race.n_restarts);
            for s in &report.summary {
                let winner = report
                    .runs
                    .iter()
                    .find(|r| r.method == s.method && r.t_ns == s.t_ns && r.restart == s.best_restart)
                    .ok_or_else(|| Error::Config(vec!["race winner missing".into()]))?;
                let name = format!("{}_T{}", s.method, s.t_ns);
                fields.push((name, ControlField::from_pulse_file(&winner.best_pulse, carriers)?));
            }
        }
    }
    let mut rows = Vec::new();
    let mut maps = Vec::new();
    for (name, field) in &fields {
        let map = run_robustness_map(setup, &problem, field, &spec.grid)?;
        println!(
            "{name}: nominal p3 = {:.4}, mean drop {:.4}, curvature dOmega {:?}, dDelta {:?}",
            map.nominal_p3, map.mean_drop, map.curvature_omega, map.curvature_delta
        );
        maps.push((name.clone(), map));
    }
    for (name, map) in &maps {
        for (i, &dw) in map.d_omega.iter().enumerate() {
            for (k, &dd) in map.d_delta.iter().enumerate() {
                rows.push(MapCsvRow { source: name, d_omega: dw, d_delta: dd, p3: map.p3[i][k] });
            }
        }
    }
    w.write_results(&rows)?;
    for (name, map) in &maps {
        w.write_run(&format!("map_{name}"), map)?;
    }
    Ok(seeds)
}
