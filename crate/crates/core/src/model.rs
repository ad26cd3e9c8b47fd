//! NV-center level structure: static Hamiltonian, dipole pattern and decay
//! channels, plus the reduced 4-level and 3-level (Λ) submodels.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::PhysicalConstants;

const ZERO: C64 = C64::new(0.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// The ten levels, in Hamiltonian order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    MinusOne,
    Zero,
    PlusOne,
    A2,
    A1,
    Ex,
    Ey,
    E1,
    E2,
    Metastable,
}

impl Level {
    pub const ALL: [Level; 10] = [
        Level::MinusOne,
        Level::Zero,
        Level::PlusOne,
        Level::A2,
        Level::A1,
        Level::Ex,
        Level::Ey,
        Level::E1,
        Level::E2,
        Level::Metastable,
    ];

    /// 1-based index used throughout the level diagram.
    pub fn index(self) -> usize {
        self as usize + 1
    }

    pub fn from_index(index: usize) -> Option<Level> {
        index.checked_sub(1).and_then(|i| Level::ALL.get(i).copied())
    }

    pub fn label(self) -> &'static str {
        match self {
            Level::MinusOne => "|-1>",
            Level::Zero => "|0>",
            Level::PlusOne => "|+1>",
            Level::A2 => "A2",
            Level::A1 => "A1",
            Level::Ex => "Ex",
            Level::Ey => "Ey",
            Level::E1 => "E1",
            Level::E2 => "E2",
            Level::Metastable => "|10>",
        }
    }

    /// Column name used in trajectory CSV headers.
    pub fn column_name(self) -> &'static str {
        match self {
            Level::MinusOne => "P_minus1",
            Level::Zero => "P_0",
            Level::PlusOne => "P_plus1",
            Level::A2 => "P_A2",
            Level::A1 => "P_A1",
            Level::Ex => "P_Ex",
            Level::Ey => "P_Ey",
            Level::E1 => "P_E1",
            Level::E2 => "P_E2",
            Level::Metastable => "P_10",
        }
    }

    pub fn is_ground(self) -> bool {
        matches!(self, Level::MinusOne | Level::Zero | Level::PlusOne)
    }

    pub fn is_excited(self) -> bool {
        self.index() >= 4 && self.index() <= 9
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Spontaneous decay rate Γ(from → to) in 1/ns. Zero for channels that are
/// absent or neglected.
pub fn decay_rate(from: Level, to: Level) -> f64 {
    use Level::*;
    match (from, to) {
        (A2 | A1 | E1 | E2, PlusOne) => 1.0 / 24.0,
        (A2 | A1 | E1 | E2, MinusOne) => 1.0 / 31.0,
        (A2 | A1 | E1 | E2, Zero) => 1.0 / 104.0,
        (A2 | A1 | E1 | E2, Metastable) => 1.0 / 33.0,
        (Ex | Ey, Zero) => 1.0 / 13.0,
        (Ex | Ey, PlusOne | MinusOne) => 1.0 / 666.0,
        (Metastable, Zero) => 1.0 / 303.0,
        _ => 0.0,
    }
}

/// A decay channel O = |to⟩⟨from| with rate Γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub from: Level,
    pub to: Level,
    pub rate: f64,
}

/// Resonant carrier detunings (rad/ns) of the two laser tones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Carriers {
    /// Tone 1, resonant with |-1> ↔ A2.
    pub delta1: f64,
    /// Tone 2, resonant with |+1> ↔ A2.
    pub delta2: f64,
}

/// H_gs in the basis (|-1>, |0>, |+1>).
pub fn build_ground_hamiltonian(c: &PhysicalConstants) -> DMatrix<C64> {
    let z = c.ground_zeeman();
    DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::from(c.d_gs - z), ZERO, C64::from(c.d_gs + z)]))
}

/// H_es in the basis (A2, A1, Ex, Ey, E1, E2), without the optical gap.
pub fn build_excited_hamiltonian(c: &PhysicalConstants) -> DMatrix<C64> {
    let z = C64::from(c.excited_zeeman());
    let mut h = DMatrix::from_element(6, 6, ZERO);
    // (A2, A1) block
    h[(0, 0)] = C64::from(c.delta_ss + 2.0 * c.l_z);
    h[(1, 1)] = C64::from(-c.delta_ss + 2.0 * c.l_z);
    h[(0, 1)] = z;
    h[(1, 0)] = z;
    // (Ex, Ey, E1, E2) block
    let e = c.l_z - c.d_es;
    let dpp = C64::from(c.delta_pp);
    h[(2, 2)] = C64::from(e);
    h[(3, 3)] = C64::from(e);
    h[(2, 5)] = dpp;
    h[(5, 2)] = dpp;
    h[(3, 4)] = I * c.delta_pp;
    h[(4, 3)] = -I * c.delta_pp;
    h[(4, 5)] = -z;
    h[(5, 4)] = -z;
    h
}

/// Dipole coupling pattern V'/ε'_x over all ten levels.
pub fn build_dipole_pattern() -> DMatrix<C64> {
    // rows |-1>, |0>, |+1>; columns A2, A1, Ex, Ey, E1, E2
    let v: [[C64; 6]; 3] =
        [[I, -I, ZERO, ZERO, -I, -I], [ZERO, ZERO, ZERO, C64::new(2.0, 0.0), ZERO, ZERO], [-I, -I, ZERO, ZERO, I, -I]];
    let mut m = DMatrix::from_element(10, 10, ZERO);
    for (g, row) in v.iter().enumerate() {
        for (e, &val) in row.iter().enumerate() {
            m[(g, 3 + e)] = val;
            m[(3 + e, g)] = val.conj();
        }
    }
    m
}

/// Static Hamiltonian, dipole pattern and dissipation of one model variant.
#[derive(Debug, Clone, PartialEq)]
pub struct NvModel {
    levels: Vec<Level>,
    pub h_static: DMatrix<C64>,
    pub v_pattern: DMatrix<C64>,
    pub jumps: Vec<Jump>,
    pub constants: PhysicalConstants,
}

impl NvModel {
    /// Builds the interaction-picture model for `dims` ∈ {3, 4, 10}.
    ///
    /// The 3-level Λ model uses the basis (|-1>, A2, |+1>) and has no decay;
    /// the 4-level model is (|-1>, |0>, |+1>, A2) with A2 decays only.
    pub fn build(c: &PhysicalConstants, dims: usize) -> Result<NvModel> {
        let levels: Vec<Level> = match dims {
            3 => vec![Level::MinusOne, Level::A2, Level::PlusOne],
            4 => vec![Level::MinusOne, Level::Zero, Level::PlusOne, Level::A2],
            10 => Level::ALL.to_vec(),
            other => return Err(Error::InvalidDims(other)),
        };

        let mut full = DMatrix::from_element(10, 10, ZERO);
        full.view_mut((0, 0), (3, 3)).copy_from(&build_ground_hamiltonian(c));
        full.view_mut((3, 3), (6, 6)).copy_from(&build_excited_hamiltonian(c));
        let pattern = build_dipole_pattern();

        let select = |m: &DMatrix<C64>| {
            DMatrix::from_fn(levels.len(), levels.len(), |r, col| m[(levels[r] as usize, levels[col] as usize)])
        };
        let h_static = select(&full);
        let v_pattern = select(&pattern);

        let jumps = match dims {
            3 => Vec::new(),
            4 => [Level::PlusOne, Level::MinusOne, Level::Zero]
                .into_iter()
                .map(|to| Jump { from: Level::A2, to, rate: decay_rate(Level::A2, to) })
                .collect(),
            _ => {
                let mut jumps = Vec::new();
                for &from in &Level::ALL {
                    for &to in &Level::ALL {
                        let rate = decay_rate(from, to);
                        if rate > 0.0 {
                            jumps.push(Jump { from, to, rate });
                        }
                    }
                }
                jumps
            }
        };

        Ok(NvModel { levels, h_static, v_pattern, jumps, constants: *c })
    }

    /// Same coherent part, all decay channels removed.
    pub fn without_dissipation(&self) -> NvModel {
        NvModel { jumps: Vec::new(), ..self.clone() }
    }

    pub fn dims(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn has_dissipation(&self) -> bool {
        !self.jumps.is_empty()
    }

    /// Position of `level` in this model's basis.
    pub fn position(&self, level: Level) -> Result<usize> {
        self.levels
            .iter()
            .position(|&l| l == level)
            .ok_or_else(|| Error::LevelNotInModel { level: level.label().into(), dims: self.dims() })
    }

    fn energy(&self, level: Level) -> f64 {
        let p = self.position(level).expect("Λ levels are present in every model");
        self.h_static[(p, p)].re
    }

    /// Carrier detunings δ1 = ω_a − ω_b and δ2 = ω_a − ω_c from the diagonal
    /// energies of A2, |-1> and |+1>.
    pub fn carriers(&self) -> Carriers {
        let wa = self.energy(Level::A2);
        Carriers { delta1: wa - self.energy(Level::MinusOne), delta2: wa - self.energy(Level::PlusOne) }
    }

    /// Pure state |level⟩⟨level| in this model's basis.
    pub fn pure_state(&self, level: Level) -> Result<DMatrix<C64>> {
        let p = self.position(level)?;
        let mut rho = DMatrix::from_element(self.dims(), self.dims(), ZERO);
        rho[(p, p)] = C64::new(1.0, 0.0);
        Ok(rho)
    }
}
