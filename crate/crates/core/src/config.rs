//! Run configuration: JSON schema, validation and the effective-config hash.
//!
//! Every key has a default, so `{}` is a complete config. Unknown keys are
//! rejected and all of them are reported at once.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::{DtConvergenceSpec, RaceSpec, RobustnessGrid, ScanSpec, Setup, Variant};
use crate::units::{ghz, AmplitudeConvention, PhysicalConstants, BOHR_MAGNETON_GHZ_PER_T, DEFAULT_FIELD_T};

/// Version stamped into every config echo and run record.
pub const SCHEMA_VERSION: u32 = 1;

/// Level-structure constants in GHz (the 2π is applied on conversion).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsGhz {
    #[serde(rename = "D_gs")]
    pub d_gs: f64,
    pub g_gs: f64,
    #[serde(rename = "D_es")]
    pub d_es: f64,
    #[serde(rename = "Delta")]
    pub delta_ss: f64,
    #[serde(rename = "Delta_pp")]
    pub delta_pp: f64,
    pub l_z: f64,
    pub g_es: f64,
    #[serde(rename = "E_g_eV")]
    pub e_g_ev: f64,
}

impl Default for ConstantsGhz {
    fn default() -> Self {
        Self { d_gs: 2.88, g_gs: 2.01, d_es: 1.42, delta_ss: 1.55, delta_pp: 0.2, l_z: 5.3, g_es: 2.01, e_g_ev: 1.94 }
    }
}

/// Single trajectory with the Gaussian pair, or a pulse file when given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSpec {
    pub variant: Variant,
    pub a: f64,
    #[serde(rename = "T_ns")]
    pub total: f64,
    /// Export every `stride`-th segment.
    pub stride: usize,
    pub pulse_file: Option<PathBuf>,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self { variant: Variant::default(), a: 5.0, total: 100.0, stride: 100, pulse_file: None }
    }
}

/// Robustness maps of either a stored pulse or the race winners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessSpec {
    /// Map this pulse instead of optimizing first.
    pub pulse_file: Option<PathBuf>,
    /// Restarts per method for the race whose winners are mapped; the rest
    /// of the race settings come from the `optimize` block.
    pub n_restarts: usize,
    pub grid: RobustnessGrid,
}

impl Default for RobustnessSpec {
    fn default() -> Self {
        Self { pulse_file: None, n_restarts: 10, grid: RobustnessGrid::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub schema_version: u32,
    pub constants: ConstantsGhz,
    /// Axial field in tesla; defaults to 200 G.
    #[serde(rename = "B_T")]
    pub b_tesla: Option<f64>,
    /// Ground-state Zeeman shift g_gs·μ_B·B in GHz, as an alternative to `B_T`.
    #[serde(rename = "zeeman_GHz")]
    pub zeeman_ghz: Option<f64>,
    pub dt_ns: f64,
    pub amplitude_convention: AmplitudeConvention,
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
    pub simulate: SimulateSpec,
    pub stirap_scan: ScanSpec,
    pub optimize: RaceSpec,
    pub robustness: RobustnessSpec,
    pub resolution: RaceSpec,
    pub dt_convergence: DtConvergenceSpec,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            constants: ConstantsGhz::default(),
            b_tesla: None,
            zeeman_ghz: None,
            dt_ns: 0.005,
            amplitude_convention: AmplitudeConvention::default(),
            output_dir: PathBuf::from("out"),
            workers: None,
            simulate: SimulateSpec::default(),
            stirap_scan: ScanSpec::default(),
            optimize: RaceSpec::default(),
            robustness: RobustnessSpec::default(),
            resolution: RaceSpec { resolution_ns: Some(0.05), ..RaceSpec::default() },
            dt_convergence: DtConvergenceSpec::default(),
        }
    }
}

/// Dotted paths of every key in `user` that `reference` lacks. Arrays are
/// checked element-wise against the reference's first element.
fn unknown_keys(user: &Value, reference: &Value, path: &str, out: &mut Vec<String>) {
    match (user, reference) {
        (Value::Object(u), Value::Object(r)) => {
            for (k, v) in u {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match r.get(k) {
                    Some(rv) => unknown_keys(v, rv, &p, out),
                    None => out.push(format!("unknown key `{p}`")),
                }
            }
        }
        (Value::Array(u), Value::Array(r)) => {
            if let Some(first) = r.first() {
                for (i, v) in u.iter().enumerate() {
                    unknown_keys(v, first, &format!("{path}[{i}]"), out);
                }
            }
        }
        _ => {}
    }
}

impl Config {
    pub fn from_json_str(text: &str) -> Result<Config> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("malformed JSON: {e}")]))?;
        Config::from_value(value)
    }

    /// Schema check, typed parse, then semantic validation.
    pub fn from_value(value: Value) -> Result<Config> {
        if !value.is_object() {
            return Err(Error::Config(vec!["config must be a JSON object".into()]));
        }
        let mut errs = Vec::new();
        unknown_keys(&value, &serde_json::to_value(Config::default())?, "", &mut errs);
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let cfg: Config = serde_path_to_error::deserialize(value)
            .map_err(|e| Error::Config(vec![format!("`{}`: {}", e.path(), e.inner())]))?;
        let errs = cfg.violations();
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            errs.push(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.b_tesla.is_some() && self.zeeman_ghz.is_some() {
            errs.push("give at most one of `B_T` and `zeeman_GHz`".into());
        }
        for (name, v) in [("B_T", self.b_tesla), ("zeeman_GHz", self.zeeman_ghz)] {
            if v.is_some_and(|v| !v.is_finite()) {
                errs.push(format!("`{name}` must be finite"));
            }
        }
        if !(self.dt_ns.is_finite() && self.dt_ns > 0.0) {
            errs.push(format!("`dt_ns` must be positive, got {}", self.dt_ns));
        }
        if self.workers == Some(0) {
            errs.push("`workers` must be positive".into());
        }
        errs.extend(self.constants().validate());
        let sim = &self.simulate;
        if !(sim.a.is_finite() && sim.total.is_finite() && sim.total > 0.0) {
            errs.push("`simulate`: a must be finite and T_ns positive".into());
        }
        if sim.stride == 0 {
            errs.push("`simulate.stride` must be positive".into());
        }
        errs.extend(self.stirap_scan.validate());
        errs.extend(self.optimize.validate("optimize"));
        errs.extend(self.resolution.validate("resolution"));
        errs.extend(self.robustness.grid.violations("robustness.grid"));
        if self.robustness.n_restarts == 0 {
            errs.push("`robustness.n_restarts` must be positive".into());
        }
        errs.extend(self.dt_convergence.validate());
        errs
    }

    pub fn constants(&self) -> PhysicalConstants {
        let c = &self.constants;
        let base = PhysicalConstants {
            d_gs: ghz(c.d_gs),
            g_gs: c.g_gs,
            d_es: ghz(c.d_es),
            delta_ss: ghz(c.delta_ss),
            delta_pp: ghz(c.delta_pp),
            l_z: ghz(c.l_z),
            g_es: c.g_es,
            e_g_ev: c.e_g_ev,
            mu_b_b: ghz(BOHR_MAGNETON_GHZ_PER_T * DEFAULT_FIELD_T),
        };
        match (self.zeeman_ghz, self.b_tesla) {
            (Some(z), _) => base.with_ground_zeeman(ghz(z)),
            (None, Some(b)) => base.with_field_tesla(b),
            (None, None) => base,
        }
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn setup(&self) -> Setup {
        Setup {
            constants: self.constants(),
            dt: self.dt_ns,
            convention: self.amplitude_convention,
            workers: self.workers(),
        }
    }

    /// Pretty JSON of the effective config; parses back to an equal value.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 over the canonical JSON of everything that can change results,
    /// so `output_dir` and `workers` are left out.
    pub fn hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Value::Object(map) = &mut v {
            map.remove("output_dir");
            map.remove("workers");
        }
        let canonical = serde_json::to_vec(&v)?;
        Ok(hex::encode(Sha256::digest(&canonical)))
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Config::from_json_str(&text)
}
