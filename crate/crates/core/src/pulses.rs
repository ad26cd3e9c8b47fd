//! Piecewise-constant two-tone laser controls.
//!
//! Envelopes are stored per envelope block in GHz-labelled units together with
//! the [`AmplitudeConvention`] that maps them to rad/ns. Each block spans
//! `seg_per_block` propagation segments of length `dt`; the carriers are
//! always evaluated per segment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Carriers;
use crate::units::AmplitudeConvention;

/// Where inside a segment the carriers are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    #[default]
    Midpoint,
    Left,
}

/// Laser tone selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tone {
    One,
    Two,
}

/// Converts a duration to an integer number of `dt` steps, rejecting
/// anything that is not a multiple within rounding.
pub fn steps_of(duration: f64, dt: f64) -> Option<usize> {
    if !(duration.is_finite() && dt.is_finite()) || dt <= 0.0 || duration <= 0.0 {
        return None;
    }
    let n = (duration / dt).round();
    if n < 1.0 || ((n * dt - duration).abs() > 1e-9 * duration.max(dt)) {
        return None;
    }
    Some(n as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    omega1: Vec<f64>,
    omega2: Vec<f64>,
    delta_global: f64,
    carriers: Carriers,
    dt: f64,
    seg_per_block: usize,
    convention: AmplitudeConvention,
    sampling: Sampling,
}

impl ControlField {
    /// Field with per-block envelopes. `omega1`/`omega2` must have equal
    /// length; the total duration is `len · seg_per_block · dt`.
    pub fn from_blocks(
        omega1: Vec<f64>,
        omega2: Vec<f64>,
        seg_per_block: usize,
        dt: f64,
        carriers: Carriers,
        convention: AmplitudeConvention,
    ) -> Result<Self> {
        if omega1.len() != omega2.len() || omega1.is_empty() {
            return Err(Error::InvalidField(format!(
                "envelope lengths must match and be non-empty ({} vs {})",
                omega1.len(),
                omega2.len()
            )));
        }
        if seg_per_block == 0 || !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidField("dt must be positive and blocks non-empty".into()));
        }
        if omega1.iter().chain(&omega2).any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("envelope values must be finite".into()));
        }
        Ok(Self {
            omega1,
            omega2,
            delta_global: 0.0,
            carriers,
            dt,
            seg_per_block,
            convention,
            sampling: Sampling::Midpoint,
        })
    }

    /// Constant envelopes Ω1 = Ω2 = `a` over duration `total` at resolution `dt`.
    pub fn constant(a: f64, total: f64, dt: f64, carriers: Carriers, convention: AmplitudeConvention) -> Result<Self> {
        let n = steps_of(total, dt)
            .ok_or_else(|| Error::InvalidField(format!("T = {total} ns is not a multiple of dt = {dt} ns")))?;
        Self::from_blocks(vec![a; n], vec![a; n], 1, dt, carriers, convention)
    }

    pub fn zero(total: f64, dt: f64, carriers: Carriers) -> Result<Self> {
        Self::constant(0.0, total, dt, carriers, AmplitudeConvention::default())
    }

    pub fn with_delta(mut self, delta_global: f64) -> Self {
        self.delta_global = delta_global;
        self
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn with_carriers(mut self, carriers: Carriers) -> Self {
        self.carriers = carriers;
        self
    }

    pub fn n_segments(&self) -> usize {
        self.omega1.len() * self.seg_per_block
    }

    pub fn n_blocks(&self) -> usize {
        self.omega1.len()
    }

    pub fn seg_per_block(&self) -> usize {
        self.seg_per_block
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn duration(&self) -> f64 {
        self.n_segments() as f64 * self.dt
    }

    /// Envelope block length ℓ in ns.
    pub fn resolution(&self) -> f64 {
        self.seg_per_block as f64 * self.dt
    }

    pub fn convention(&self) -> AmplitudeConvention {
        self.convention
    }

    pub fn sampling(&self) -> Sampling {
        self.sampling
    }

    pub fn carriers(&self) -> Carriers {
        self.carriers
    }

    /// Global detuning Δ in GHz-labelled units.
    pub fn delta_global(&self) -> f64 {
        self.delta_global
    }

    pub fn set_delta_global(&mut self, delta: f64) {
        self.delta_global = delta;
    }

    pub fn omega(&self, tone: Tone) -> &[f64] {
        match tone {
            Tone::One => &self.omega1,
            Tone::Two => &self.omega2,
        }
    }

    pub fn omega_mut(&mut self, tone: Tone) -> &mut [f64] {
        match tone {
            Tone::One => &mut self.omega1,
            Tone::Two => &mut self.omega2,
        }
    }

    pub fn block_of(&self, segment: usize) -> usize {
        segment / self.seg_per_block
    }

    /// Carrier evaluation time of segment `j` (0-based).
    pub fn sample_time(&self, j: usize) -> f64 {
        match self.sampling {
            Sampling::Midpoint => (j as f64 + 0.5) * self.dt,
            Sampling::Left => j as f64 * self.dt,
        }
    }

    fn phases(&self, j: usize) -> (f64, f64, f64) {
        let t = self.sample_time(j);
        let delta = self.delta_global * self.convention.scale();
        (t, (self.carriers.delta1 + delta) * t, (self.carriers.delta2 + delta) * t)
    }

    /// ε'_x for segment `j` (0-based), in rad/ns.
    pub fn sample_eps(&self, j: usize) -> f64 {
        let b = self.block_of(j);
        let s = self.convention.scale();
        let (_, p1, p2) = self.phases(j);
        s * (self.omega1[b] * p1.cos() + self.omega2[b] * p2.cos())
    }

    /// ∂ε'_x(j)/∂Ω_tone of the block containing `j`, per stored unit.
    pub fn d_eps_d_omega(&self, tone: Tone, j: usize) -> f64 {
        let (_, p1, p2) = self.phases(j);
        let s = self.convention.scale();
        match tone {
            Tone::One => s * p1.cos(),
            Tone::Two => s * p2.cos(),
        }
    }

    /// ∂ε'_x(j)/∂Δ per stored unit of Δ.
    pub fn d_eps_d_delta(&self, j: usize) -> f64 {
        let b = self.block_of(j);
        let s = self.convention.scale();
        let (t, p1, p2) = self.phases(j);
        -s * s * (self.omega1[b] * p1.sin() + self.omega2[b] * p2.sin()) * t
    }

    /// E = Σ_j [Ω1(j)² + Ω2(j)²] over all segments, in stored units.
    pub fn energy(&self) -> f64 {
        let n = self.seg_per_block as f64;
        self.omega1.iter().zip(&self.omega2).map(|(a, b)| n * (a * a + b * b)).sum()
    }

    /// Largest |Ω| over both tones.
    pub fn max_amplitude(&self) -> f64 {
        self.omega1.iter().chain(&self.omega2).map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Common-mode relative amplitude error and global detuning offset.
    pub fn perturb(&self, d_omega: f64, d_delta: f64) -> Result<Self> {
        if !(1.0 + d_omega >= 0.0) || !d_delta.is_finite() {
            return Err(Error::InvalidField(format!("invalid perturbation ({d_omega}, {d_delta})")));
        }
        let k = 1.0 + d_omega;
        let mut out = self.clone();
        out.omega1.iter_mut().chain(out.omega2.iter_mut()).for_each(|v| *v *= k);
        out.delta_global += d_delta;
        Ok(out)
    }

    /// Re-holds the envelopes on blocks of `resolution` ns, averaging the
    /// per-segment values inside each new block.
    pub fn rebin(&self, resolution: f64) -> Result<Self> {
        let per = steps_of(resolution, self.dt).ok_or_else(|| {
            Error::InvalidField(format!("resolution {resolution} ns is not a multiple of dt = {} ns", self.dt))
        })?;
        let n = self.n_segments();
        if n % per != 0 {
            return Err(Error::InvalidField(format!("{n} segments do not divide into blocks of {per}")));
        }
        if per == self.seg_per_block {
            return Ok(self.clone());
        }
        let average = |env: &[f64]| -> Vec<f64> {
            (0..n / per)
                .map(|b| (b * per..(b + 1) * per).map(|j| env[j / self.seg_per_block]).sum::<f64>() / per as f64)
                .collect()
        };
        Ok(Self { omega1: average(&self.omega1), omega2: average(&self.omega2), seg_per_block: per, ..self.clone() })
    }

    /// Applies the amplitude cap and, optionally, a non-negativity clamp.
    pub fn clamp(&mut self, cap: f64, non_negative: bool) {
        let lo = if non_negative { 0.0 } else { -cap };
        for v in self.omega1.iter_mut().chain(self.omega2.iter_mut()) {
            *v = v.clamp(lo, cap);
        }
    }

    pub fn to_pulse_file(&self) -> PulseFile {
        PulseFile {
            t_ns: self.duration(),
            dt_ns: self.dt,
            resolution_ns: self.resolution(),
            delta_ghz: self.delta_global,
            omega1_ghz: self.omega1.clone(),
            omega2_ghz: self.omega2.clone(),
            convention: self.convention,
        }
    }

    pub fn from_pulse_file(file: &PulseFile, carriers: Carriers) -> Result<Self> {
        let per = steps_of(file.resolution_ns, file.dt_ns)
            .ok_or_else(|| Error::InvalidField("resolution_ns is not a multiple of dt_ns".into()))?;
        let field = Self::from_blocks(
            file.omega1_ghz.clone(),
            file.omega2_ghz.clone(),
            per,
            file.dt_ns,
            carriers,
            file.convention,
        )?
        .with_delta(file.delta_ghz);
        if (field.duration() - file.t_ns).abs() > 1e-9 * file.t_ns.max(1.0) {
            return Err(Error::InvalidField(format!(
                "T_ns = {} disagrees with {} blocks of {} ns",
                file.t_ns,
                field.n_blocks(),
                file.resolution_ns
            )));
        }
        Ok(field)
    }
}

/// On-disk pulse description. Frequencies are GHz labels interpreted through
/// `convention`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseFile {
    #[serde(rename = "T_ns")]
    pub t_ns: f64,
    pub dt_ns: f64,
    pub resolution_ns: f64,
    #[serde(rename = "Delta_GHz")]
    pub delta_ghz: f64,
    #[serde(rename = "omega1_GHz")]
    pub omega1_ghz: Vec<f64>,
    #[serde(rename = "omega2_GHz")]
    pub omega2_ghz: Vec<f64>,
    pub convention: AmplitudeConvention,
}

/// Gaussian envelope pair; `a` in GHz-labelled units, times in ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub a: f64,
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub sigma: f64,
}

impl GaussianParams {
    /// σ = T/10, μ± = T/2 ± σ.
    pub fn stirap_defaults(a: f64, total: f64) -> Self {
        let sigma = total / 10.0;
        Self { a, mu_plus: total / 2.0 + sigma, mu_minus: total / 2.0 - sigma, sigma }
    }

    /// Ω1 centred at μ, Ω2 at T − μ.
    pub fn mirrored(a: f64, mu: f64, sigma: f64, total: f64) -> Self {
        Self { a, mu_plus: mu, mu_minus: total - mu, sigma }
    }

    pub fn omega1_at(&self, t: f64) -> f64 {
        self.a * (-(t - self.mu_plus).powi(2) / (2.0 * self.sigma * self.sigma)).exp()
    }

    pub fn omega2_at(&self, t: f64) -> f64 {
        self.a * (-(t - self.mu_minus).powi(2) / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// Samples a Gaussian pair on the segment grid (at each segment's carrier
/// sampling time).
pub fn gaussian_stirap(
    p: &GaussianParams,
    total: f64,
    dt: f64,
    carriers: Carriers,
    convention: AmplitudeConvention,
) -> Result<ControlField> {
    if !(p.sigma > 0.0) {
        return Err(Error::InvalidField(format!("sigma must be positive, got {}", p.sigma)));
    }
    let n = steps_of(total, dt)
        .ok_or_else(|| Error::InvalidField(format!("T = {total} ns is not a multiple of dt = {dt} ns")))?;
    let times: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) * dt).collect();
    ControlField::from_blocks(
        times.iter().map(|&t| p.omega1_at(t)).collect(),
        times.iter().map(|&t| p.omega2_at(t)).collect(),
        1,
        dt,
        carriers,
        convention,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    const CAR: Carriers = Carriers { delta1: 64.5, delta2: 52.0 };

    #[test]
    fn gaussian_shape() {
        let p = GaussianParams::stirap_defaults(5.0, 100.0);
        assert_eq!(p.sigma, 10.0);
        assert_eq!(p.mu_plus, 60.0);
        assert_eq!(p.mu_minus, 40.0);
        assert_eq!(p.omega1_at(p.mu_plus), 5.0);
        assert!((p.omega1_at(p.mu_plus + p.sigma) - 5.0 * (-0.5f64).exp()).abs() < 1e-14);
        assert!((p.omega2_at(p.mu_minus - p.sigma) - 5.0 * (-0.5f64).exp()).abs() < 1e-14);
        let f = gaussian_stirap(&p, 100.0, 0.005, CAR, AmplitudeConvention::Angular).unwrap();
        assert_eq!(f.n_segments(), 20000);
    }

    #[test]
    fn eps_at_time_zero() {
        let f = ControlField::from_blocks(vec![1.5, 0.0], vec![0.5, 0.0], 1, 0.01, CAR, AmplitudeConvention::Plain)
            .unwrap()
            .with_sampling(Sampling::Left);
        assert_eq!(f.sample_eps(0), 2.0);
        assert_eq!(f.d_eps_d_delta(0), 0.0);
    }

    #[test]
    fn detuning_period_invariance() {
        let f = ControlField::constant(1.0, 1.0, 0.01, CAR, AmplitudeConvention::Plain).unwrap();
        let j = 37;
        let t = f.sample_time(j);
        let g = f.clone().with_delta(TAU / t);
        assert!((f.sample_eps(j) - g.sample_eps(j)).abs() < 1e-10);
    }

    #[test]
    fn single_tone() {
        let f =
            ControlField::from_blocks(vec![2.0; 10], vec![0.0; 10], 1, 0.1, CAR, AmplitudeConvention::Plain).unwrap();
        for j in 0..10 {
            let t = f.sample_time(j);
            assert!((f.sample_eps(j) - 2.0 * (CAR.delta1 * t).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn perturb_identity_and_suppression() {
        let p = GaussianParams::stirap_defaults(3.0, 2.0);
        let f = gaussian_stirap(&p, 2.0, 0.005, CAR, AmplitudeConvention::Angular).unwrap().with_delta(0.3);
        assert_eq!(f.perturb(0.0, 0.0).unwrap(), f);
        let z = f.perturb(-1.0, 0.0).unwrap();
        assert_eq!(z.max_amplitude(), 0.0);
        assert!((0..z.n_segments()).all(|j| z.sample_eps(j) == 0.0));
        assert!(f.perturb(-1.5, 0.0).is_err());
    }

    #[test]
    fn rebin_blocks() {
        let f = ControlField::constant(2.5, 1.0, 0.005, CAR, AmplitudeConvention::Angular).unwrap();
        assert_eq!(f.rebin(0.005).unwrap(), f);
        let r = f.rebin(0.05).unwrap();
        assert_eq!(r.n_blocks(), 20);
        assert_eq!(r.seg_per_block(), 10);
        assert!(r.omega(Tone::One).iter().all(|&v| (v - 2.5).abs() < 1e-15));
        assert!(f.rebin(0.0123).is_err());
        assert!(f.rebin(0.3).is_err());
    }

    #[test]
    fn energy_of_constant_field() {
        let f = ControlField::constant(1.5, 1.0, 0.01, CAR, AmplitudeConvention::Plain).unwrap();
        assert!((f.energy() - 2.0 * 100.0 * 1.5 * 1.5).abs() < 1e-10);
    }

    #[test]
    fn pulse_file_rejects_unknown_keys() {
        let bad = r#"{"T_ns":1,"dt_ns":0.5,"resolution_ns":0.5,"Delta_GHz":0,"omega1_GHz":[1,1],"omega2_GHz":[1,1],"convention":"angular","extra":1}"#;
        assert!(serde_json::from_str::<PulseFile>(bad).is_err());
    }

    proptest! {
        #[test]
        fn pulse_file_round_trip(vals in prop::collection::vec(-20.0f64..20.0, 1..40), delta in -5.0f64..5.0) {
            let f = ControlField::from_blocks(vals.clone(), vals.iter().map(|v| v * 0.37).collect(), 2, 0.005, CAR, AmplitudeConvention::Angular)
                .unwrap()
                .with_delta(delta);
            let text = serde_json::to_string(&f.to_pulse_file()).unwrap();
            let back: PulseFile = serde_json::from_str(&text).unwrap();
            let g = ControlField::from_pulse_file(&back, CAR).unwrap();
            prop_assert_eq!(g, f);
        }

        #[test]
        fn rebin_preserves_blockwise_energy(vals in prop::collection::vec(-10.0f64..10.0, 1..12), per in 1usize..5) {
            let f = ControlField::from_blocks(vals.clone(), vals.clone(), per, 0.005, CAR, AmplitudeConvention::Plain).unwrap();
            let fine = f.rebin(0.005).unwrap();
            let back = fine.rebin(f.resolution()).unwrap();
            prop_assert!((fine.energy() - f.energy()).abs() <= 1e-9 * f.energy().max(1.0));
            prop_assert!((back.energy() - f.energy()).abs() <= 1e-9 * f.energy().max(1.0));
        }

        #[test]
        fn perturb_composes(x in -0.9f64..1.0, y in -2.0f64..2.0, x2 in -0.9f64..1.0, y2 in -2.0f64..2.0) {
            let f = ControlField::constant(1.3, 0.1, 0.01, CAR, AmplitudeConvention::Angular).unwrap().with_delta(0.2);
            let twice = f.perturb(x, y).unwrap().perturb(x2, y2).unwrap();
            let once = f.perturb((1.0 + x) * (1.0 + x2) - 1.0, y + y2).unwrap();
            for (a, b) in twice.omega(Tone::One).iter().zip(once.omega(Tone::One)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            prop_assert!((twice.delta_global() - once.delta_global()).abs() < 1e-12);
        }
    }
}
