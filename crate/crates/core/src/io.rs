//! Experiment output: one directory per experiment kind holding
//! `spec.json`, `results.csv`, `runs/*.json` and `MANIFEST`.
//!
//! Every file carries the effective config hash and the amplitude
//! convention. Nothing that varies between identical runs (wall time,
//! thread count) goes into `results.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Config, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::harness::OptimizationRun;
use crate::liouville::Trajectory;
use crate::units::AmplitudeConvention;

/// Envelope of every JSON file written next to results.
#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    schema_version: u32,
    config_hash: &'a str,
    convention: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// Writer for one experiment directory. All files go through it.
#[derive(Debug)]
pub struct ExperimentWriter {
    dir: PathBuf,
    kind: String,
    hash: String,
    convention: AmplitudeConvention,
    files: Vec<String>,
}

impl ExperimentWriter {
    /// Creates `<output_dir>/<kind>/runs` and writes the config echo.
    pub fn create(cfg: &Config, kind: &str) -> Result<Self> {
        let dir = cfg.output_dir.join(kind);
        let runs = dir.join("runs");
        fs::create_dir_all(&runs).map_err(|e| Error::io(&runs, e))?;
        let mut w =
            Self { dir, kind: kind.into(), hash: cfg.hash()?, convention: cfg.amplitude_convention, files: Vec::new() };
        #[derive(Serialize)]
        struct Echo<'a> {
            config: &'a Config,
        }
        w.write_json("spec.json", &Echo { config: cfg })?;
        Ok(w)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.push(name.into());
        Ok(path)
    }

    /// Writes `body` as pretty JSON with the hash and convention stamped in.
    pub fn write_json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<PathBuf> {
        let stamped = Stamped {
            schema_version: SCHEMA_VERSION,
            config_hash: &self.hash,
            convention: self.convention.as_str(),
            body,
        };
        let mut text = serde_json::to_string_pretty(&stamped)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_run<T: Serialize>(&mut self, stem: &str, body: &T) -> Result<PathBuf> {
        self.write_json(&format!("runs/{stem}.json"), body)
    }

    /// Serializes `rows` into `results.csv`, adding `config_hash` and
    /// `convention` columns.
    pub fn write_results<R: Serialize>(&mut self, rows: &[R]) -> Result<PathBuf> {
        let bytes = stamped_csv(rows, &self.hash, self.convention)?;
        self.write_bytes("results.csv", &bytes)
    }

    pub fn write_trajectory(&mut self, tr: &Trajectory) -> Result<PathBuf> {
        let bytes = trajectory_csv(tr, &self.hash, self.convention)?;
        self.write_bytes("results.csv", &bytes)
    }

    /// Writes `MANIFEST` listing versions, seeds and every file written.
    pub fn finish(mut self, seeds: &[u64], notes: &[(&str, String)]) -> Result<PathBuf> {
        let mut m = String::new();
        let _ = writeln!(m, "nvopt {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(m, "experiment: {}", self.kind);
        let _ = writeln!(m, "schema_version: {SCHEMA_VERSION}");
        let _ = writeln!(m, "config_hash: {}", self.hash);
        let _ = writeln!(m, "amplitude_convention: {}", self.convention.as_str());
        let _ = writeln!(m, "linear_algebra: nalgebra 0.35");
        let _ = writeln!(m, "rng: ChaCha8 (rand_chacha 0.9), seeded with seed + restart");
        let _ = writeln!(m, "seeds: {}", format_seeds(seeds));
        for (k, v) in notes {
            let _ = writeln!(m, "{k}: {v}");
        }
        let mut files = std::mem::take(&mut self.files);
        files.sort();
        let _ = writeln!(m, "files:");
        for f in files {
            let _ = writeln!(m, "  {f}");
        }
        self.write_bytes("MANIFEST", m.as_bytes())
    }
}

/// `a..b` for a contiguous run, otherwise a comma list; `none` if empty.
fn format_seeds(seeds: &[u64]) -> String {
    let mut s = seeds.to_vec();
    s.sort_unstable();
    s.dedup();
    match s.as_slice() {
        [] => "none".into(),
        [only] => only.to_string(),
        [first, .., last] if last - first + 1 == s.len() as u64 => format!("{first}..={last}"),
        _ => s.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
    }
}

fn into_bytes(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))
}

/// CSV of `rows` with two trailing columns carrying the hash and convention.
pub fn stamped_csv<R: Serialize>(rows: &[R], hash: &str, convention: AmplitudeConvention) -> Result<Vec<u8>> {
    let mut plain = csv::Writer::from_writer(Vec::new());
    for r in rows {
        plain.serialize(r)?;
    }
    let plain = into_bytes(plain)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(plain.as_slice());
    let mut w = csv::Writer::from_writer(Vec::new());
    for (i, rec) in reader.records().enumerate() {
        let mut rec = rec?;
        if i == 0 {
            rec.push_field("config_hash");
            rec.push_field("convention");
        } else {
            rec.push_field(hash);
            rec.push_field(convention.as_str());
        }
        w.write_record(&rec)?;
    }
    into_bytes(w)
}

/// Header `t_ns, P_<level>..., trace, config_hash, convention`.
pub fn trajectory_csv(tr: &Trajectory, hash: &str, convention: AmplitudeConvention) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t_ns".to_string()];
    header.extend(tr.levels.iter().map(|l| l.column_name().to_string()));
    header.extend(["trace".into(), "config_hash".into(), "convention".into()]);
    w.write_record(&header)?;
    for ((t, pops), trace) in tr.times.iter().zip(&tr.populations).zip(&tr.traces) {
        let mut rec = vec![t.to_string()];
        rec.extend(pops.iter().map(f64::to_string));
        rec.extend([trace.to_string(), hash.to_string(), convention.as_str().to_string()]);
        w.write_record(&rec)?;
    }
    into_bytes(w)
}

/// One restart, without its history, pulse or timing.
#[derive(Debug, Clone, Serialize)]
pub struct RunCsvRow<'a> {
    pub method: &'a str,
    #[serde(rename = "T_ns")]
    pub t_ns: f64,
    pub resolution_ns: f64,
    pub restart: usize,
    pub seed: u64,
    pub a0: f64,
    pub mu0: f64,
    pub sigma0: f64,
    #[serde(rename = "Delta0")]
    pub delta0: f64,
    pub phi: f64,
    pub p3: f64,
    pub p4bar: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    pub iters: usize,
    pub evaluations: usize,
    pub stop: &'a str,
    pub max_amplitude: f64,
    #[serde(rename = "Delta_GHz")]
    pub delta_ghz: f64,
}

impl<'a> RunCsvRow<'a> {
    pub fn new(run: &'a OptimizationRun) -> Self {
        Self {
            method: run.method.as_str(),
            t_ns: run.t_ns,
            resolution_ns: run.resolution_ns,
            restart: run.restart,
            seed: run.seed,
            a0: run.initial.a,
            mu0: run.initial.mu,
            sigma0: run.initial.sigma,
            delta0: run.initial.delta,
            phi: run.phi,
            p3: run.p3,
            p4bar: run.p4bar,
            energy: run.energy,
            iters: run.iters,
            evaluations: run.evaluations,
            stop: &run.stop,
            max_amplitude: run.max_amplitude,
            delta_ghz: run.best_pulse.delta_ghz,
        }
    }
}

/// One point of a robustness map in long format.
#[derive(Debug, Clone, Serialize)]
pub struct MapCsvRow<'a> {
    pub source: &'a str,
    pub d_omega: f64,
    #[serde(rename = "d_Delta_rad_per_ns")]
    pub d_delta: f64,
    pub p3: f64,
}
