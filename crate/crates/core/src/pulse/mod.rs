//! Optical pulse payloads: coherent and Fock representations plus the
//! energy → mean photon number → photon count → arrival time pipeline.

mod polarization;
mod shape;

use std::f64::consts::TAU;
use std::sync::Arc;

use rand_distr::{Distribution, Poisson};

use crate::error::{check, positive, DomainError};
use crate::kernel::{ModuleId, RngStream, SimTime};

pub use polarization::{rotate_polarization, Polarization, StokesAxis};
pub use shape::{
    integrate, pulse_energy, sample_arrival_times, GaussianTerm, InverseCdf, ShapeFunction, ShapeProfile,
    CDF_GRID_POINTS, QUADRATURE_REL_TOL,
};

/// Planck constant, J·s (exact, SI 2019).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Energy of one photon at `wavelength_m`: `h·c/λ`.
pub fn photon_energy(wavelength_m: f64) -> Result<f64, DomainError> {
    positive("wavelength_m", wavelength_m)?;
    Ok(PLANCK * SPEED_OF_LIGHT / wavelength_m)
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_phase(phase: f64) -> f64 {
    let w = phase.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Attributes shared by every pulse representation.
#[derive(Clone, Debug)]
pub struct PulseCommon {
    wavelength_m: f64,
    photon_energy_j: f64,
    global_phase: f64,
    pub polarization: Polarization,
    profile: Arc<ShapeProfile>,
    pub emission_time: SimTime,
}

impl PulseCommon {
    pub fn new(
        wavelength_m: f64,
        global_phase: f64,
        polarization: Polarization,
        profile: Arc<ShapeProfile>,
        emission_time: SimTime,
    ) -> Result<Self, DomainError> {
        let photon_energy_j = photon_energy(wavelength_m)?;
        check(global_phase.is_finite(), "global_phase", "finite", global_phase)?;
        Ok(PulseCommon {
            wavelength_m,
            photon_energy_j,
            global_phase: wrap_phase(global_phase),
            polarization,
            profile,
            emission_time,
        })
    }

    pub fn wavelength_m(&self) -> f64 {
        self.wavelength_m
    }

    pub fn photon_energy_j(&self) -> f64 {
        self.photon_energy_j
    }

    pub fn global_phase(&self) -> f64 {
        self.global_phase
    }

    pub fn shift_phase(&mut self, delta: f64) {
        self.global_phase = wrap_phase(self.global_phase + delta);
    }

    pub fn profile(&self) -> &Arc<ShapeProfile> {
        &self.profile
    }

    pub fn duration_s(&self) -> f64 {
        self.profile.duration_s()
    }
}

/// A weak coherent pulse; its photon number is Poisson about the MPN.
#[derive(Clone, Debug)]
pub struct CoherentPulse {
    pub common: PulseCommon,
    amplitude_scale: f64,
}

impl CoherentPulse {
    pub fn new(common: PulseCommon, amplitude_scale: f64) -> Result<Self, DomainError> {
        check(
            amplitude_scale.is_finite() && amplitude_scale >= 0.0,
            "amplitude_scale",
            ">= 0",
            amplitude_scale,
        )?;
        Ok(CoherentPulse {
            common,
            amplitude_scale,
        })
    }

    pub fn amplitude_scale(&self) -> f64 {
        self.amplitude_scale
    }

    /// Multiplies the power by `factor` (clamped at zero).
    pub fn scale_power(&mut self, factor: f64) {
        self.amplitude_scale *= factor.max(0.0);
    }

    pub fn energy_j(&self) -> f64 {
        self.amplitude_scale * self.common.profile.unit_energy_j()
    }

    pub fn mean_photon_number(&self) -> f64 {
        mean_photon_number(self)
    }

    /// Rescales so that the MPN equals `target` (no-op on a dark pulse).
    pub fn set_mean_photon_number(&mut self, target: f64) {
        let current = self.mean_photon_number();
        if current > 0.0 {
            self.amplitude_scale *= target.max(0.0) / current;
        }
    }
}

/// A pulse with a definite photon count and explicit photon arrival times.
#[derive(Clone, Debug)]
pub struct FockPulse {
    pub common: PulseCommon,
    arrival_times: Vec<SimTime>,
}

impl FockPulse {
    /// Arrival times must lie within the pulse window; they are stored sorted.
    pub fn new(common: PulseCommon, mut arrival_times: Vec<SimTime>) -> Result<Self, DomainError> {
        let end = common.emission_time + SimTime::from_secs_f64(common.duration_s());
        if let Some(t) = arrival_times.iter().find(|t| **t < common.emission_time || **t > end) {
            return Err(DomainError::Invalid(format!(
                "photon arrival {t} outside pulse window [{}, {end}]",
                common.emission_time
            )));
        }
        arrival_times.sort_unstable();
        Ok(FockPulse {
            common,
            arrival_times,
        })
    }

    pub fn vacuum(common: PulseCommon) -> Self {
        FockPulse {
            common,
            arrival_times: Vec::new(),
        }
    }

    pub fn photon_count(&self) -> usize {
        self.arrival_times.len()
    }

    pub fn arrival_times(&self) -> &[SimTime] {
        &self.arrival_times
    }

    /// Offsets of each photon from the start of the pulse window.
    pub fn offsets(&self) -> impl Iterator<Item = SimTime> + '_ {
        self.arrival_times.iter().map(move |t| *t - self.common.emission_time)
    }

    /// Keeps photons for which `keep` returns true, preserving order.
    pub fn retain_photons(&mut self, mut keep: impl FnMut(SimTime) -> bool) {
        self.arrival_times.retain(|t| keep(*t));
    }

    /// Splits photons into `(kept, rest)` by a per-photon decision.
    pub fn partition_photons(self, mut left: impl FnMut(SimTime) -> bool) -> (FockPulse, FockPulse) {
        let (a, b): (Vec<_>, Vec<_>) = self.arrival_times.iter().partition(|t| left(**t));
        (
            FockPulse {
                common: self.common.clone(),
                arrival_times: a,
            },
            FockPulse {
                common: self.common,
                arrival_times: b,
            },
        )
    }

    /// Removes and returns the photon at `index` in arrival order.
    pub fn remove_photon(&mut self, index: usize) -> Option<SimTime> {
        (index < self.arrival_times.len()).then(|| self.arrival_times.remove(index))
    }

    /// Removes and returns the earliest photon.
    pub fn take_first_photon(&mut self) -> Option<SimTime> {
        if self.arrival_times.is_empty() {
            None
        } else {
            Some(self.arrival_times.remove(0))
        }
    }
}

#[derive(Clone, Debug)]
pub enum Pulse {
    Coherent(CoherentPulse),
    Fock(FockPulse),
}

impl Pulse {
    pub fn common(&self) -> &PulseCommon {
        match self {
            Pulse::Coherent(p) => &p.common,
            Pulse::Fock(p) => &p.common,
        }
    }

    pub fn common_mut(&mut self) -> &mut PulseCommon {
        match self {
            Pulse::Coherent(p) => &mut p.common,
            Pulse::Fock(p) => &mut p.common,
        }
    }

    /// MPN for coherent pulses, exact count for Fock pulses.
    pub fn expected_photons(&self) -> f64 {
        match self {
            Pulse::Coherent(p) => p.mean_photon_number(),
            Pulse::Fock(p) => p.photon_count() as f64,
        }
    }

    pub fn energy_j(&self) -> f64 {
        match self {
            Pulse::Coherent(p) => p.energy_j(),
            Pulse::Fock(p) => p.photon_count() as f64 * p.common.photon_energy_j(),
        }
    }

    /// True when the pulse carries nothing at all.
    pub fn is_vacuum(&self) -> bool {
        match self {
            Pulse::Coherent(p) => p.amplitude_scale == 0.0,
            Pulse::Fock(p) => p.arrival_times.is_empty(),
        }
    }

    /// Converts to Fock form, sampling photons if the pulse is coherent.
    pub fn into_fock(self, rng: &mut RngStream) -> FockPulse {
        match self {
            Pulse::Coherent(p) => realize_fock(&p, rng),
            Pulse::Fock(p) => p,
        }
    }
}

/// The payload a pulse travels in between modules.
#[derive(Clone, Debug)]
pub struct OpticalMessage {
    pub pulse: Pulse,
    pub origin: ModuleId,
    pub pulse_id: u64,
}

/// Pulse energy divided by the photon energy at the pulse wavelength.
pub fn mean_photon_number(pulse: &CoherentPulse) -> f64 {
    pulse.energy_j() / pulse.common.photon_energy_j
}

/// Photon count of a coherent pulse, drawn from `Poisson(mpn)`.
pub fn sample_photon_count(mpn: f64, rng: &mut RngStream) -> Result<u64, DomainError> {
    check(mpn.is_finite() && mpn >= 0.0, "mpn", ">= 0", mpn)?;
    if mpn == 0.0 {
        return Ok(0);
    }
    let poisson = Poisson::new(mpn).map_err(|e| DomainError::Invalid(format!("mpn {mpn}: {e}")))?;
    Ok(poisson.sample(rng) as u64)
}

/// Realizes a coherent pulse as a Fock pulse: Poisson photon count, then
/// inverse-CDF arrival times within the window.
pub fn realize_fock(pulse: &CoherentPulse, rng: &mut RngStream) -> FockPulse {
    let common = pulse.common.clone();
    let n = sample_photon_count(pulse.mean_photon_number(), rng).expect("MPN is non-negative by construction");
    if n == 0 {
        return FockPulse::vacuum(common);
    }
    let cdf = common
        .profile
        .inverse_cdf()
        .expect("a pulse with photons has a positive-integral shape");
    let start = common.emission_time;
    let arrival_times = cdf
        .sample(n as usize, rng)
        .into_iter()
        .map(|offset| start + SimTime::from_secs_f64(offset))
        .collect();
    FockPulse {
        common,
        arrival_times,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> Arc<ShapeProfile> {
        Arc::new(ShapeProfile::new(ShapeFunction::gaussian(1e-3, 1.2e-9, 200e-12).unwrap(), 2.4e-9).unwrap())
    }

    fn coherent(scale: f64) -> CoherentPulse {
        let common = PulseCommon::new(1550e-9, 0.0, Polarization::horizontal(), profile(), SimTime::from_ps(1000)).unwrap();
        CoherentPulse::new(common, scale).unwrap()
    }

    #[test]
    fn photon_energy_values() {
        let e = photon_energy(1550e-9).unwrap();
        assert!((e - 1.28158e-19).abs() < 1e-23, "{e}");
        let half = photon_energy(775e-9).unwrap();
        assert!((half / e - 2.0).abs() < 1e-15);
        assert!(photon_energy(0.0).is_err());
        assert!(photon_energy(-1.0).is_err());
    }

    #[test]
    fn mpn_of_reference_gaussian() {
        let p = coherent(1.0);
        let expected = 1e-3 * 200e-12 * TAU.sqrt() / photon_energy(1550e-9).unwrap();
        assert!((p.mean_photon_number() / expected - 1.0).abs() < 1e-6);
        assert!((p.mean_photon_number() / 3.912e6 - 1.0).abs() < 1e-3);
        assert_eq!(coherent(0.0).mean_photon_number(), 0.0);
    }

    #[test]
    fn mpn_ten_photon_energies() {
        let mut p = coherent(1.0);
        let e_ph = p.common.photon_energy_j();
        p.scale_power(10.0 * e_ph / p.energy_j());
        assert!((p.mean_photon_number() - 10.0).abs() < 1e-9);
        p.set_mean_photon_number(0.5);
        assert!((p.mean_photon_number() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn photon_count_edge_cases() {
        let mut rng = RngStream::derive(1, "n");
        for _ in 0..100 {
            assert_eq!(sample_photon_count(0.0, &mut rng).unwrap(), 0);
        }
        assert!(sample_photon_count(-0.1, &mut rng).is_err());
        assert!(sample_photon_count(f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn zero_amplitude_realizes_vacuum() {
        let mut rng = RngStream::derive(1, "f");
        let f = realize_fock(&coherent(0.0), &mut rng);
        assert_eq!(f.photon_count(), 0);
    }

    #[test]
    fn realized_photons_inside_window() {
        let mut rng = RngStream::derive(9, "f");
        let mut p = coherent(1.0);
        p.set_mean_photon_number(20.0);
        let end = p.common.emission_time + SimTime::from_secs_f64(2.4e-9);
        for _ in 0..200 {
            let f = realize_fock(&p, &mut rng);
            assert!(f.arrival_times().iter().all(|t| *t >= p.common.emission_time && *t <= end));
            assert!(f.arrival_times().windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn phase_wraps() {
        assert_eq!(wrap_phase(TAU), 0.0);
        assert!((wrap_phase(-0.5) - (TAU - 0.5)).abs() < 1e-15);
        let mut c = coherent(1.0).common;
        c.shift_phase(7.0 * TAU + 1.0);
        assert!((0.0..TAU).contains(&c.global_phase()));
    }

    #[test]
    fn fock_rejects_out_of_window_photons() {
        let c = coherent(1.0).common;
        let late = c.emission_time + SimTime::from_secs_f64(3e-9);
        assert!(FockPulse::new(c.clone(), vec![late]).is_err());
        assert!(FockPulse::new(c.clone(), vec![c.emission_time]).is_ok());
    }
}
