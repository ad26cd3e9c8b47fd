//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{exact_fd_error, problem, random_field, worst_first_order_error};
use nvopt::harness::{
    run_dt_convergence, run_optimization_race, run_resolution_study, run_stirap_scan, DtConvergenceSpec, Method,
    RaceReport, RaceSpec, ScanRow, ScanSpec, Setup, Variant,
};
use nvopt::linalg::max_abs_diff;
use nvopt::liouville::{jump_positions, oracle, LiouvillianSplit, Physicality};
use nvopt::model::NvModel;
use nvopt::pulses::{ControlField, Tone};
use nvopt::units::AmplitudeConvention;

type Verdict = Result<(bool, String), String>;

/// Physicality of every trajectory propagated along the way, by label.
#[derive(Default)]
struct Ledger {
    trajectories: Vec<(String, Physicality)>,
    populations: Vec<(String, f64)>,
}

impl Ledger {
    fn trajectory(&mut self, label: impl Into<String>, p: Physicality) {
        self.trajectories.push((label.into(), p));
    }

    fn population(&mut self, label: impl Into<String>, p: f64) {
        self.populations.push((label.into(), p));
    }

    fn scan(&mut self, rows: &[ScanRow]) {
        for r in rows {
            let label = format!("scan {} a={} T={}", r.variant, r.a, r.t_ns);
            self.trajectory(label.clone(), r.physicality());
            for p in [r.p_plus1, r.p_minus1, r.p_a2] {
                self.population(label.clone(), p);
            }
        }
    }

    fn race(&mut self, tag: &str, report: &RaceReport) {
        for s in &report.summary {
            self.trajectory(format!("{tag} winner {} T={}", s.method, s.t_ns), s.winner_physicality);
        }
        for r in &report.runs {
            self.population(format!("{tag} {} r{}", r.method, r.restart), r.p3);
        }
    }
}

fn setup() -> Setup {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    Setup { workers, ..Setup::default() }
}

fn find(rows: &[ScanRow], v: Variant, a: f64, t: f64) -> Result<f64, String> {
    rows.iter()
        .find(|r| r.dims == v.dims && r.dissipation == v.dissipation && r.a == a && r.t_ns == t)
        .map(|r| r.p_plus1)
        .ok_or_else(|| format!("no scan row for {} a={a} T={t}", v.label()))
}

fn stirap_quartet(rows: &[ScanRow], elapsed: Duration) -> Verdict {
    // (variant, lower, upper, reference)
    let targets = [
        (Variant::new(4, false), 0.9999, 1.0 + 1e-8, 0.999992),
        (Variant::new(10, false), 0.9995, 1.0 + 1e-8, 0.999958),
        (Variant::new(4, true), 0.895 - 0.01, 0.895 + 0.01, 0.895),
        (Variant::new(10, true), 0.722 - 0.01, 0.722 + 0.01, 0.722),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (v, lo, hi, reference) in targets {
        let p = find(rows, v, 5.0, 100.0)?;
        ok &= (lo..=hi).contains(&p);
        parts.push(format!("{} {p:.6} (reference {reference})", v.label()));
    }
    // the scan also covers the T = 10 ns and extra-amplitude rows, so this
    // bounds the quartet's own cost from above
    let per_variant = elapsed.as_secs_f64() / 4.0;
    ok &= per_variant <= 300.0;
    parts.push(format!("{per_variant:.1} s per variant"));
    Ok((ok, parts.join(", ")))
}

fn stirap_shape(rows: &[ScanRow]) -> Verdict {
    let mut ok = true;
    let mut bad = Vec::new();
    for v in Variant::FOUR {
        for a in [1.0, 3.0, 5.0] {
            let (short, long) = (find(rows, v, a, 10.0)?, find(rows, v, a, 100.0)?);
            if short >= long {
                ok = false;
                bad.push(format!("{} a={a}: T=10 {short:.4} >= T=100 {long:.4}", v.label()));
            }
        }
    }
    let diss = Variant::new(10, true);
    let (p9, p5) = (find(rows, diss, 9.0, 100.0)?, find(rows, diss, 5.0, 100.0)?);
    ok &= p9 < p5;
    let mut detail = format!("12 T=10 < T=100 pairs checked; 10-level-diss a=9 {p9:.4} vs a=5 {p5:.4}");
    if !bad.is_empty() {
        detail.push_str(&format!("; violations: {}", bad.join("; ")));
    }
    Ok((ok, detail))
}

fn race_spec(n_restarts: usize) -> RaceSpec {
    RaceSpec { durations: vec![1.0], n_restarts, seed: 0, variant: Variant::new(10, true), ..RaceSpec::default() }
}

fn t1_race(report: &RaceReport, elapsed: Duration) -> Verdict {
    let grape = report.best_grape_p3().ok_or("no GRAPE results")?;
    let nm = report.summary_for(Method::AdiabaticNm, 1.0).ok_or("no adiabatic-nm result")?.best_p3;
    let minutes = elapsed.as_secs_f64() / 60.0;
    let ok = grape >= 0.95 && (0.78..=0.90).contains(&nm) && minutes <= 30.0;
    let per: Vec<String> = report.summary.iter().map(|s| format!("{} {:.4}", s.method, s.best_p3)).collect();
    Ok((ok, format!("{}; {minutes:.1} min", per.join(", "))))
}

fn no_dissipation(report: &RaceReport) -> Verdict {
    let best = report.best_grape_p3().ok_or("no GRAPE results")?;
    Ok((best >= 0.999, format!("rabi-resonant, 10-level without dissipation: best p3 {best:.6}")))
}

/// Best GRAPE p3 of `report` over restarts below `n`.
fn grape_best_within(report: &RaceReport, n: usize) -> Option<f64> {
    report.runs.iter().filter(|r| r.method.is_grape() && r.restart < n).map(|r| r.p3).reduce(f64::max)
}

fn resolution(coarse: &RaceReport, fine: &RaceReport, n: usize) -> Verdict {
    let c = coarse.best_grape_p3().ok_or("no resolution results")?;
    let f = grape_best_within(fine, n).ok_or("no matched race results")?;
    let per: Vec<String> = coarse.summary.iter().map(|s| format!("{} {:.4}", s.method, s.best_p3)).collect();
    Ok((
        c >= 0.94 && c <= f,
        format!("0.05 ns blocks best {c:.4} ({}); per-segment best over the same {n} seeds {f:.4}", per.join(", ")),
    ))
}

fn gradient_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut worst = 0.0_f64;
    let mut instances = 0;
    for (dims, blocks, seg) in [(3, 60, 1), (4, 60, 1), (3, 20, 3), (4, 15, 4)] {
        let pr = problem(dims);
        let field = random_field(&mut rng, &pr, blocks, seg, 0.005);
        for (a, b) in [(1.0, 0.0), (0.0, 1.0)] {
            let g = if b == 0.0 { pr.grad_p3(&field) } else { pr.grad_p4bar(&field) }.map_err(|e| e.to_string())?;
            worst = worst.max(worst_first_order_error(&pr, &field, &g, a, b).0);
            instances += 1;
        }
    }
    let mut ratios = Vec::new();
    for dims in [3, 4] {
        let pr = problem(dims);
        let coarse = random_field(&mut rng, &pr, 10, 3, 0.01);
        let fine = ControlField::from_blocks(
            coarse.omega(Tone::One).to_vec(),
            coarse.omega(Tone::Two).to_vec(),
            6,
            0.005,
            pr.model.carriers(),
            AmplitudeConvention::Plain,
        )
        .map_err(|e| e.to_string())?
        .with_delta(coarse.delta_global());
        for (a, b) in [(1.0, 0.0), (0.0, 1.0)] {
            ratios.push(exact_fd_error(&pr, &fine, a, b) / exact_fd_error(&pr, &coarse, a, b));
        }
    }
    let halves = ratios.iter().all(|r| (0.4..0.6).contains(r));
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    Ok((
        worst < 1e-3 && halves,
        format!(
            "worst relative error {worst:.2e} over {instances} gradients; exact-FD error ratio at dt/2: {}",
            shown.join(", ")
        ),
    ))
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<C64> {
    let a = DMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)));
    (&a + a.adjoint()) * C64::from(0.5)
}

fn liouvillian_oracle(setup: &Setup) -> Verdict {
    let model = NvModel::build(&setup.constants, 10).map_err(|e| e.to_string())?;
    let split = LiouvillianSplit::assemble(&model);
    let nv = max_abs_diff(&split.l0, &oracle::tensor_liouvillian(&model.h_static, &jump_positions(&model)))
        .max(max_abs_diff(&split.leps, &oracle::tensor_liouvillian(&model.v_pattern, &[])));
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut small = 0.0_f64;
    for _ in 0..20 {
        let n = rng.random_range(2..=5);
        let h = random_hermitian(&mut rng, n);
        let v = random_hermitian(&mut rng, n);
        let jumps: Vec<(usize, usize, f64)> = (0..rng.random_range(1..=n * n))
            .map(|_| (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0.0..1.0)))
            .filter(|(i, j, _)| i != j)
            .collect();
        let s = LiouvillianSplit::probe(&h, &v, &jumps);
        small = small
            .max(max_abs_diff(&s.l0, &oracle::tensor_liouvillian(&h, &jumps)))
            .max(max_abs_diff(&s.leps, &oracle::tensor_liouvillian(&v, &[])));
    }
    Ok((nv < 1e-12 && small < 1e-12, format!("10-level gap {nv:.2e}, 20 random models gap {small:.2e}")))
}

fn physicality(ledger: &Ledger) -> Verdict {
    let mut worst = Physicality::new();
    let mut bad = Vec::new();
    for (label, p) in &ledger.trajectories {
        worst.max_trace_drift = worst.max_trace_drift.max(p.max_trace_drift);
        worst.max_hermiticity_defect = worst.max_hermiticity_defect.max(p.max_hermiticity_defect);
        worst.min_eigenvalue = worst.min_eigenvalue.min(p.min_eigenvalue);
        if !p.is_physical() {
            bad.push(label.clone());
        }
    }
    for (label, p) in &ledger.populations {
        if !(p.is_finite() && (0.0..=1.0 + 1e-8).contains(p)) {
            bad.push(format!("{label} population {p}"));
        }
    }
    let mut detail = format!(
        "{} trajectories, {} populations; worst trace drift {:.2e}, hermiticity {:.2e}, min eigenvalue {:.2e}",
        ledger.trajectories.len(),
        ledger.populations.len(),
        worst.max_trace_drift,
        worst.max_hermiticity_defect,
        worst.min_eigenvalue
    );
    if !bad.is_empty() {
        detail.push_str(&format!("; failing: {}", bad.join(", ")));
    }
    Ok((bad.is_empty() && !ledger.trajectories.is_empty(), detail))
}

fn dt_convergence(setup: &Setup, ledger: &mut Ledger) -> Verdict {
    let conv = run_dt_convergence(setup, &DtConvergenceSpec::default()).map_err(|e| e.to_string())?;
    for r in &conv.rows {
        ledger.trajectory(
            format!("dt ladder {}", r.dt_ns),
            Physicality {
                max_trace_drift: r.max_trace_drift,
                max_hermiticity_defect: r.max_hermiticity_defect,
                min_eigenvalue: r.min_eigenvalue,
            },
        );
        ledger.population(format!("dt ladder {}", r.dt_ns), r.p_plus1);
    }
    let p = |dt: f64| conv.rows.iter().find(|r| r.dt_ns == dt).map(|r| r.p_plus1);
    let (a, b) = (p(0.005).ok_or("dt 0.005 missing")?, p(0.0025).ok_or("dt 0.0025 missing")?);
    let rk = conv.rk4.as_ref().ok_or("RK4 check missing")?;
    let ladder =
        conv.rows.iter().filter_map(|r| r.diff.map(|d| format!("{}: {d:.2e}", r.dt_ns))).collect::<Vec<_>>().join(", ");
    Ok((
        (a - b).abs() < 1e-3 && rk.max_population_diff < 1e-6,
        format!(
            "|p3(0.005) - p3(0.0025)| = {:.2e}; ladder steps {}; RK4 at dt/{} max population gap {:.2e}",
            (a - b).abs(),
            ladder,
            rk.substeps,
            rk.max_population_diff
        ),
    ))
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{
  "optimize": {
    "T_ns": [1.0],
    "n_restarts": 2,
    "seed": 11,
    "grape": {"max_iters": 40},
    "simplex": {"max_evals": 60}
  }
}"#,
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for (run, workers) in [(0, "1"), (1, "2")] {
        let out = dir.path().join(format!("run{run}"));
        let status = Command::new(env!("CARGO_BIN_EXE_nvopt"))
            .arg("optimize")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .env("NVOPT_WORKERS", workers)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("optimize run {run} failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        outputs.push(fs::read(out.join("optimize/results.csv")).map_err(|e| e.to_string())?);
    }
    let rows = outputs[0].iter().filter(|&&b| b == b'\n').count();
    Ok((
        outputs[0] == outputs[1] && rows == 9,
        format!(
            "two optimize runs (1 and 2 workers), {} bytes each, {rows} lines, identical: {}",
            outputs[0].len(),
            outputs[0] == outputs[1]
        ),
    ))
}

fn main() {
    let setup = setup();
    let mut ledger = Ledger::default();
    let mut verdicts: Vec<(usize, &str, Verdict)> = Vec::new();
    let note = |msg: &str| eprintln!("[acceptance] {msg}");

    note("STIRAP scan");
    let started = Instant::now();
    let scan = run_stirap_scan(
        &setup,
        &ScanSpec { amplitudes: vec![1.0, 3.0, 5.0, 9.0], durations: vec![10.0, 100.0], ..ScanSpec::default() },
    );
    let scan_time = started.elapsed();
    match &scan {
        Ok(rows) => {
            ledger.scan(rows);
            verdicts.push((1, "STIRAP reference quartet", stirap_quartet(rows, scan_time)));
            verdicts.push((2, "STIRAP qualitative shape", stirap_shape(rows)));
        }
        Err(e) => {
            verdicts.push((1, "STIRAP reference quartet", Err(e.to_string())));
            verdicts.push((2, "STIRAP qualitative shape", Err(e.to_string())));
        }
    }

    const RESTARTS: usize = 50;
    const MATCHED: usize = 10;
    note("T = 1 ns race, 50 restarts per method");
    let started = Instant::now();
    let race = run_optimization_race(&setup, &race_spec(RESTARTS));
    let race_time = started.elapsed();
    match &race {
        Ok(r) => {
            ledger.race("race", r);
            verdicts.push((3, "T = 1 ns optimization race", t1_race(r, race_time)));
        }
        Err(e) => verdicts.push((3, "T = 1 ns optimization race", Err(e.to_string()))),
    }

    note("no-dissipation GRAPE");
    let lossless = RaceSpec { methods: vec![Method::RabiResonant], variant: Variant::new(10, false), ..race_spec(3) };
    let v = run_optimization_race(&setup, &lossless).map_err(|e| e.to_string()).and_then(|r| {
        ledger.race("lossless", &r);
        no_dissipation(&r)
    });
    verdicts.push((4, "no-dissipation optimal transfer", v));

    note("0.05 ns resolution study");
    let coarse_spec = RaceSpec {
        methods: vec![Method::AdiabaticGrape, Method::RabiResonant, Method::RabiDetuning],
        resolution_ns: Some(0.05),
        ..race_spec(MATCHED)
    };
    let v = match (&race, run_resolution_study(&setup, &coarse_spec)) {
        (Ok(fine), Ok(coarse)) => {
            ledger.race("resolution", &coarse);
            resolution(&coarse, fine, MATCHED)
        }
        (Err(e), _) => Err(format!("race unavailable: {e}")),
        (_, Err(e)) => Err(e.to_string()),
    };
    verdicts.push((5, "resolution study", v));

    note("gradient oracle");
    verdicts.push((6, "gradient oracle", gradient_oracle()));
    note("Liouvillian oracle");
    verdicts.push((7, "Liouvillian oracle", liouvillian_oracle(&setup)));
    note("dt convergence");
    let dt = dt_convergence(&setup, &mut ledger);
    verdicts.push((9, "dt convergence", dt));
    verdicts.push((8, "physicality", physicality(&ledger)));
    note("determinism");
    verdicts.push((10, "determinism", determinism()));

    verdicts.sort_by_key(|v| v.0);
    let mut failed = 0;
    for (id, name, v) in &verdicts {
        let (passed, detail) = match v {
            Ok((p, d)) => (*p, d.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failed += 1;
        }
        println!("criterion {id:>2} {} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
