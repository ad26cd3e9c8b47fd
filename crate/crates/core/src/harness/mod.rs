//! End-to-end experiments: STIRAP scans, the optimization race, robustness
//! maps, resolution and time-step studies, and the invariant suite.

mod race;
mod robustness;
mod stirap;
mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NvModel;
use crate::units::{AmplitudeConvention, PhysicalConstants};

pub use race::{
    reference_p3, run_optimization_race, run_resolution_study, run_single, InitRanges, OptimizationRun, RaceReport,
    RaceSpec, RaceSummary, SimplexSettings,
};
pub use robustness::{run_robustness_map, Axis, RobustnessGrid, RobustnessMap};
pub use stirap::{
    run_dt_convergence, run_stirap_scan, DtConvergence, DtConvergenceSpec, DtRow, RkCheck, ScanRow, ScanSpec,
};
pub use validate::{run_invariant_suite, CheckResult};

/// The four optimization strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    AdiabaticNm,
    AdiabaticGrape,
    RabiResonant,
    RabiDetuning,
}

impl Method {
    pub const ALL: [Method; 4] =
        [Method::AdiabaticNm, Method::AdiabaticGrape, Method::RabiResonant, Method::RabiDetuning];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::AdiabaticNm => "adiabatic-nm",
            Method::AdiabaticGrape => "adiabatic-grape",
            Method::RabiResonant => "rabi-resonant",
            Method::RabiDetuning => "rabi-detuning",
        }
    }

    pub fn is_grape(self) -> bool {
        self != Method::AdiabaticNm
    }

    pub fn allowed() -> String {
        Method::ALL.map(Method::as_str).join(", ")
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(vec![format!("unknown method '{s}' (allowed: {})", Method::allowed())]))
    }
}

/// Model size plus whether the jump operators are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub dims: usize,
    pub dissipation: bool,
}

impl Variant {
    pub const fn new(dims: usize, dissipation: bool) -> Self {
        Self { dims, dissipation }
    }

    /// 4-level and 10-level, each without and with dissipation.
    pub const FOUR: [Variant; 4] =
        [Variant::new(4, false), Variant::new(10, false), Variant::new(4, true), Variant::new(10, true)];

    pub fn label(&self) -> String {
        format!("{}-level{}", self.dims, if self.dissipation { "-diss" } else { "" })
    }

    pub fn model(&self, constants: &PhysicalConstants) -> Result<NvModel> {
        let m = NvModel::build(constants, self.dims)?;
        Ok(if self.dissipation { m } else { m.without_dissipation() })
    }
}

impl Default for Variant {
    fn default() -> Self {
        Variant::new(10, true)
    }
}

/// Settings every experiment shares.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub constants: PhysicalConstants,
    /// Segment length in ns.
    pub dt: f64,
    pub convention: AmplitudeConvention,
    pub workers: usize,
}

impl Default for Setup {
    fn default() -> Self {
        Self {
            constants: PhysicalConstants::default(),
            dt: 0.005,
            convention: AmplitudeConvention::default(),
            workers: 1,
        }
    }
}

impl Setup {
    /// Runs `f` on a pool of `workers` threads.
    pub(crate) fn in_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.max(1))
            .build()
            .map_err(|e| Error::Config(vec![format!("cannot start worker pool: {e}")]))?;
        Ok(pool.install(f))
    }
}
