//! Physical constants of the NV center and the frequency-unit conventions.
//!
//! Everything inside the crate works in angular frequency (rad/ns) and time
//! in ns. Interfaces speak GHz.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

/// How a pulse-level frequency quoted in "GHz" maps to rad/ns.
///
/// `Angular` multiplies by 2π exactly like the Hamiltonian constants do,
/// `Plain` takes the number as rad/ns directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AmplitudeConvention {
    Angular,
    #[default]
    Plain,
}

impl AmplitudeConvention {
    /// Multiplier taking a GHz-labelled amplitude to rad/ns.
    pub fn scale(self) -> f64 {
        match self {
            AmplitudeConvention::Angular => TAU,
            AmplitudeConvention::Plain => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AmplitudeConvention::Angular => "angular",
            AmplitudeConvention::Plain => "plain",
        }
    }
}

impl std::str::FromStr for AmplitudeConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "angular" => Ok(Self::Angular),
            "plain" => Ok(Self::Plain),
            other => Err(format!("unknown amplitude convention `{other}` (allowed: angular, plain)")),
        }
    }
}

/// μ_B/h in GHz per tesla.
pub const BOHR_MAGNETON_GHZ_PER_T: f64 = 13.996_244_942;

/// Default axial field: 200 G.
pub const DEFAULT_FIELD_T: f64 = 0.02;

/// 2π·f for a frequency `f` in GHz, giving rad/ns.
#[inline]
pub fn ghz(f: f64) -> f64 {
    TAU * f
}

/// Level-structure constants, stored in rad/ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Ground-state zero-field splitting D_gs.
    pub d_gs: f64,
    pub g_gs: f64,
    /// Excited-state spin-spin parameter D_es.
    pub d_es: f64,
    /// Excited-state spin-spin parameter Δ.
    pub delta_ss: f64,
    /// Excited-state spin-spin parameter Δ''.
    pub delta_pp: f64,
    /// Axial spin-orbit splitting.
    pub l_z: f64,
    pub g_es: f64,
    /// Optical gap in eV. Only used to label detunings; it never enters the
    /// interaction-picture Hamiltonian.
    pub e_g_ev: f64,
    /// μ_B·B in rad/ns; multiplied by `g_gs`/`g_es` to get the Zeeman shift
    /// of each manifold.
    pub mu_b_b: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        let g = 2.01;
        Self {
            d_gs: ghz(2.88),
            g_gs: g,
            d_es: ghz(1.42),
            delta_ss: ghz(1.55),
            delta_pp: ghz(0.2),
            l_z: ghz(5.3),
            g_es: g,
            e_g_ev: 1.94,
            mu_b_b: ghz(BOHR_MAGNETON_GHZ_PER_T * DEFAULT_FIELD_T),
        }
    }
}

impl PhysicalConstants {
    /// Returns a copy with μ_B·B chosen so that the ground-state Zeeman shift
    /// g_gs·μ_B·B equals `zeeman` (rad/ns).
    pub fn with_ground_zeeman(mut self, zeeman: f64) -> Self {
        self.mu_b_b = zeeman / self.g_gs;
        self
    }

    /// Returns a copy with an axial field of `tesla`.
    pub fn with_field_tesla(mut self, tesla: f64) -> Self {
        self.mu_b_b = ghz(BOHR_MAGNETON_GHZ_PER_T * tesla);
        self
    }

    pub fn field_tesla(&self) -> f64 {
        self.mu_b_b / ghz(BOHR_MAGNETON_GHZ_PER_T)
    }

    pub fn ground_zeeman(&self) -> f64 {
        self.g_gs * self.mu_b_b
    }

    pub fn excited_zeeman(&self) -> f64 {
        self.g_es * self.mu_b_b
    }

    /// Checks finiteness and sign constraints; returns every violation found.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let named = [
            ("D_gs", self.d_gs),
            ("g_gs", self.g_gs),
            ("D_es", self.d_es),
            ("Delta", self.delta_ss),
            ("Delta_pp", self.delta_pp),
            ("l_z", self.l_z),
            ("g_es", self.g_es),
            ("E_g", self.e_g_ev),
        ];
        for (name, v) in named {
            if !v.is_finite() || v < 0.0 {
                errs.push(format!("constant `{name}` must be finite and non-negative, got {v}"));
            }
        }
        if !self.mu_b_b.is_finite() {
            errs.push(format!("Zeeman term must be finite, got {}", self.mu_b_b));
        }
        errs
    }
}
