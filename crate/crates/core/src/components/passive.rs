use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::{apply_transmittance, db_to_transmittance, Degradable};
use crate::error::{check, non_negative, probability, DomainError};
use crate::kernel::{RngStream, SimTime};
use crate::pulse::{Polarization, Pulse, StokesAxis};

/// Fixed two-port attenuator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attenuator {
    pub loss_db: f64,
}

impl Attenuator {
    pub fn new(loss_db: f64) -> Result<Self, DomainError> {
        let a = Attenuator { loss_db };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        non_negative("loss_db", self.loss_db)
    }

    pub fn transmittance(&self) -> f64 {
        db_to_transmittance(self.loss_db)
    }
}

impl Degradable for Attenuator {
    fn degraded(&self, factor: f64) -> Self {
        Attenuator {
            loss_db: self.loss_db * factor,
        }
    }
}

/// Scales a coherent pulse by the attenuator loss, or thins a Fock pulse
/// photon by photon.
pub fn attenuate(props: &Attenuator, pulse: Pulse, rng: &mut RngStream) -> Pulse {
    apply_transmittance(pulse, props.transmittance(), rng)
}

/// Commandable attenuator used as an intensity modulator: it is told the
/// mean photon number its output should carry.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableAttenuator {
    #[serde(default)]
    pub insertion_loss_db: f64,
}

impl VariableAttenuator {
    pub fn validate(&self) -> Result<(), DomainError> {
        non_negative("insertion_loss_db", self.insertion_loss_db)
    }
}

impl Degradable for VariableAttenuator {
    fn degraded(&self, factor: f64) -> Self {
        VariableAttenuator {
            insertion_loss_db: self.insertion_loss_db * factor,
        }
    }
}

/// Four-port beamsplitter, power transmittance `T` and reflectance `R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Beamsplitter {
    pub transmittance: f64,
    pub reflectance: f64,
    #[serde(default = "default_reflection_phase")]
    pub reflection_phase_rad: f64,
}

fn default_reflection_phase() -> f64 {
    FRAC_PI_2
}

impl Beamsplitter {
    pub fn new(transmittance: f64, reflectance: f64) -> Result<Self, DomainError> {
        let b = Beamsplitter {
            transmittance,
            reflectance,
            reflection_phase_rad: default_reflection_phase(),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        probability("transmittance", self.transmittance)?;
        probability("reflectance", self.reflectance)?;
        let sum = self.transmittance + self.reflectance;
        check(sum <= 1.0 + 1e-12, "transmittance + reflectance", "<= 1", sum)?;
        check(
            self.reflection_phase_rad.is_finite(),
            "reflection_phase_rad",
            "finite",
            self.reflection_phase_rad,
        )
    }
}

impl Degradable for Beamsplitter {
    fn degraded(&self, factor: f64) -> Self {
        Beamsplitter {
            transmittance: self.transmittance.powf(factor),
            reflectance: self.reflectance.powf(factor),
            reflection_phase_rad: self.reflection_phase_rad,
        }
    }
}

/// Splits a pulse into `(transmitted, reflected)`.
///
/// Coherent pulses split in power with the reflection phase added to the
/// reflected arm. Fock photons go transmitted with probability `T`, reflected
/// with probability `R`, and are lost otherwise.
pub fn beamsplit(props: &Beamsplitter, pulse: Pulse, rng: &mut RngStream) -> (Pulse, Pulse) {
    let (t, r) = (props.transmittance, props.reflectance);
    match pulse {
        Pulse::Coherent(p) => {
            let mut tx = p.clone();
            let mut rx = p;
            tx.scale_power(t);
            rx.scale_power(r);
            rx.common.shift_phase(props.reflection_phase_rad);
            (Pulse::Coherent(tx), Pulse::Coherent(rx))
        }
        Pulse::Fock(p) => {
            let mut decisions = Vec::with_capacity(p.photon_count());
            for _ in 0..p.photon_count() {
                let u = rng.uniform();
                decisions.push(if u < t { 0u8 } else if u < t + r { 1 } else { 2 });
            }
            let mut i = 0;
            let (tx, rest) = p.partition_photons(|_| {
                i += 1;
                decisions[i - 1] == 0
            });
            let surviving: Vec<u8> = decisions.into_iter().filter(|d| *d != 0).collect();
            let mut j = 0;
            let (mut rx, _lost) = rest.partition_photons(|_| {
                j += 1;
                surviving[j - 1] == 1
            });
            rx.common.shift_phase(props.reflection_phase_rad);
            (Pulse::Fock(tx), Pulse::Fock(rx))
        }
    }
}

/// Polarizing beamsplitter with finite extinction ratio.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarizingBeamsplitter {
    /// `None` means an ideal splitter with no leakage.
    #[serde(default)]
    pub extinction_ratio_db: Option<f64>,
    #[serde(default)]
    pub insertion_loss_db: f64,
}

impl PolarizingBeamsplitter {
    pub fn validate(&self) -> Result<(), DomainError> {
        if let Some(er) = self.extinction_ratio_db {
            non_negative("extinction_ratio_db", er)?;
        }
        non_negative("insertion_loss_db", self.insertion_loss_db)
    }

    /// Fraction of the wrong polarization that leaks into each port.
    pub fn leakage(&self) -> f64 {
        self.extinction_ratio_db.map_or(0.0, db_to_transmittance)
    }

    /// Power fractions `(H port, V port)` before insertion loss.
    pub fn port_fractions(&self, polarization: &Polarization) -> (f64, f64) {
        let (ph, pv) = polarization.power_fractions();
        let leak = self.leakage();
        (ph * (1.0 - leak) + pv * leak, pv * (1.0 - leak) + ph * leak)
    }
}

impl Degradable for PolarizingBeamsplitter {
    fn degraded(&self, factor: f64) -> Self {
        PolarizingBeamsplitter {
            extinction_ratio_db: self.extinction_ratio_db,
            insertion_loss_db: self.insertion_loss_db * factor,
        }
    }
}

/// Splits a pulse into `(H port, V port)`; outputs are polarized along
/// their port axis.
pub fn polarizing_beamsplit(props: &PolarizingBeamsplitter, pulse: Pulse, rng: &mut RngStream) -> (Pulse, Pulse) {
    let (fh, fv) = props.port_fractions(&pulse.common().polarization);
    let t_ins = db_to_transmittance(props.insertion_loss_db);
    let (mut h, mut v) = match pulse {
        Pulse::Coherent(p) => {
            let mut h = p.clone();
            let mut v = p;
            h.scale_power(fh * t_ins);
            v.scale_power(fv * t_ins);
            (Pulse::Coherent(h), Pulse::Coherent(v))
        }
        Pulse::Fock(p) => {
            // One uniform per photon: [0, T·fh) → H, [T·fh, T·(fh+fv)) → V, rest lost.
            let to_h = t_ins * fh;
            let kept = t_ins * (fh + fv);
            let draws: Vec<f64> = (0..p.photon_count()).map(|_| rng.uniform()).collect();
            let mut i = 0;
            let (h, rest) = p.partition_photons(|_| {
                i += 1;
                draws[i - 1] < to_h
            });
            let tail: Vec<f64> = draws.into_iter().filter(|u| *u >= to_h).collect();
            let mut j = 0;
            let (v, _lost) = rest.partition_photons(|_| {
                j += 1;
                tail[j - 1] < kept
            });
            (Pulse::Fock(h), Pulse::Fock(v))
        }
    };
    h.common_mut().polarization = Polarization::horizontal();
    v.common_mut().polarization = Polarization::vertical();
    (h, v)
}

/// Three-port circulator routing port `i` to port `i + 1 (mod 3)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Circulator {
    #[serde(default)]
    pub insertion_loss_db: f64,
}

impl Circulator {
    pub const PORTS: usize = 3;

    pub fn validate(&self) -> Result<(), DomainError> {
        non_negative("insertion_loss_db", self.insertion_loss_db)
    }
}

impl Degradable for Circulator {
    fn degraded(&self, factor: f64) -> Self {
        Circulator {
            insertion_loss_db: self.insertion_loss_db * factor,
        }
    }
}

pub fn circulate(
    props: &Circulator,
    in_port: usize,
    pulse: Pulse,
    rng: &mut RngStream,
) -> Result<(usize, Pulse), DomainError> {
    if in_port >= Circulator::PORTS {
        return Err(DomainError::Invalid(format!("circulator has no port {in_port}")));
    }
    let out = (in_port + 1) % Circulator::PORTS;
    Ok((out, apply_transmittance(pulse, db_to_transmittance(props.insertion_loss_db), rng)))
}

/// Two-input combiner feeding one output, for merging paths that never
/// carry light at the same time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coupler {
    #[serde(default)]
    pub insertion_loss_db: f64,
}

impl Coupler {
    pub const INPUTS: usize = 2;

    pub fn validate(&self) -> Result<(), DomainError> {
        non_negative("insertion_loss_db", self.insertion_loss_db)
    }
}

impl Degradable for Coupler {
    fn degraded(&self, factor: f64) -> Self {
        Coupler {
            insertion_loss_db: self.insertion_loss_db * factor,
        }
    }
}

pub fn couple(props: &Coupler, pulse: Pulse, rng: &mut RngStream) -> Pulse {
    apply_transmittance(pulse, db_to_transmittance(props.insertion_loss_db), rng)
}

/// Sets a pulse to a commanded linear polarization.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarizationModulator {
    #[serde(default)]
    pub insertion_loss_db: f64,
    #[serde(default)]
    pub settle_time_s: f64,
}

impl PolarizationModulator {
    pub fn validate(&self) -> Result<(), DomainError> {
        non_negative("insertion_loss_db", self.insertion_loss_db)?;
        non_negative("settle_time_s", self.settle_time_s)
    }
}

impl Degradable for PolarizationModulator {
    fn degraded(&self, factor: f64) -> Self {
        PolarizationModulator {
            insertion_loss_db: self.insertion_loss_db * factor,
            settle_time_s: self.settle_time_s,
        }
    }
}

/// Drive state of a polarization modulator.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ModulatorState {
    angle: f64,
    previous_angle: f64,
    command_time: Option<SimTime>,
}

impl ModulatorState {
    pub fn command(&mut self, angle: f64, at: SimTime) {
        self.previous_angle = self.angle;
        self.angle = angle;
        self.command_time = Some(at);
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    /// The angle in effect at `now`, and whether the last command was still
    /// settling.
    pub fn effective_angle(&self, props: &PolarizationModulator, now: SimTime) -> (f64, bool) {
        match self.command_time {
            Some(t) if now.saturating_sub(t) < SimTime::from_secs_f64(props.settle_time_s) => {
                (self.previous_angle, true)
            }
            _ => (self.angle, false),
        }
    }
}

/// Applies the commanded linear polarization. The returned flag is set when
/// the command had not settled and the previous angle was used instead.
pub fn modulate_polarization(
    props: &PolarizationModulator,
    state: &ModulatorState,
    mut pulse: Pulse,
    now: SimTime,
    rng: &mut RngStream,
) -> (Pulse, bool) {
    let (angle, unsettled) = state.effective_angle(props, now);
    pulse.common_mut().polarization = Polarization::linear(angle);
    (
        apply_transmittance(pulse, db_to_transmittance(props.insertion_loss_db), rng),
        unsettled,
    )
}

/// Rotates polarization by a commanded angle about a fixed axis. Used for
/// Bob's basis selection and for the drift-compensating controller.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarizationRotator {
    #[serde(default)]
    pub insertion_loss_db: f64,
    #[serde(default)]
    pub axis: StokesAxis,
}

impl PolarizationRotator {
    pub fn validate(&self) -> Result<(), DomainError> {
        non_negative("insertion_loss_db", self.insertion_loss_db)?;
        StokesAxis::new(self.axis.components()).map(|_| ())
    }
}

impl Degradable for PolarizationRotator {
    fn degraded(&self, factor: f64) -> Self {
        PolarizationRotator {
            insertion_loss_db: self.insertion_loss_db * factor,
            axis: self.axis,
        }
    }
}

pub fn rotate(props: &PolarizationRotator, angle: f64, mut pulse: Pulse, rng: &mut RngStream) -> Pulse {
    if angle != 0.0 {
        let c = pulse.common_mut();
        c.polarization = c.polarization.rotate_about(props.axis, angle);
    }
    apply_transmittance(pulse, db_to_transmittance(props.insertion_loss_db), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulse::{realize_fock, CoherentPulse, PulseCommon, ShapeFunction, ShapeProfile};
    use std::f64::consts::FRAC_PI_4;
    use std::sync::Arc;

    fn pulse_at(angle: f64, mpn: f64) -> CoherentPulse {
        let profile = Arc::new(ShapeProfile::new(ShapeFunction::gaussian(1e-3, 1e-9, 1e-10).unwrap(), 2e-9).unwrap());
        let common = PulseCommon::new(1550e-9, 0.0, Polarization::linear(angle), profile, SimTime::ZERO).unwrap();
        let mut p = CoherentPulse::new(common, 1.0).unwrap();
        p.set_mean_photon_number(mpn);
        p
    }

    fn rng() -> RngStream {
        RngStream::derive(11, "passive")
    }

    #[test]
    fn zero_loss_attenuator_is_identity() {
        let p = Pulse::Coherent(pulse_at(0.0, 0.5));
        let out = attenuate(&Attenuator::new(0.0).unwrap(), p.clone(), &mut rng());
        assert_eq!(out.expected_photons(), p.expected_photons());
        let f = Pulse::Fock(realize_fock(&pulse_at(0.0, 5.0), &mut rng()));
        let out = attenuate(&Attenuator::new(0.0).unwrap(), f.clone(), &mut rng());
        assert_eq!(out.expected_photons(), f.expected_photons());
    }

    #[test]
    fn ten_db_is_a_tenth() {
        let p = Pulse::Coherent(pulse_at(0.0, 0.5));
        let out = attenuate(&Attenuator::new(10.0).unwrap(), p, &mut rng());
        assert!((out.expected_photons() - 0.05).abs() < 1e-15);
        assert!(Attenuator::new(-1.0).is_err());
    }

    #[test]
    fn beamsplitter_extremes_and_halves() {
        let p = Pulse::Coherent(pulse_at(0.0, 1.0));
        let (t, r) = beamsplit(&Beamsplitter::new(1.0, 0.0).unwrap(), p.clone(), &mut rng());
        assert!((t.expected_photons() - 1.0).abs() < 1e-15);
        assert!(r.is_vacuum());
        let (t, r) = beamsplit(&Beamsplitter::new(0.5, 0.5).unwrap(), p.clone(), &mut rng());
        assert!((t.expected_photons() - 0.5).abs() < 1e-15);
        assert!((r.expected_photons() - 0.5).abs() < 1e-15);
        assert!((r.common().global_phase() - FRAC_PI_2).abs() < 1e-15);
        assert!(Beamsplitter::new(0.7, 0.4).is_err());
    }

    #[test]
    fn lossless_fock_split_conserves_photons() {
        let bs = Beamsplitter::new(0.5, 0.5).unwrap();
        let mut r = rng();
        for _ in 0..1000 {
            let f = realize_fock(&pulse_at(0.0, 3.0), &mut r);
            let n = f.photon_count();
            let (t, rf) = beamsplit(&bs, Pulse::Fock(f), &mut r);
            assert_eq!(t.expected_photons() as usize + rf.expected_photons() as usize, n);
        }
    }

    #[test]
    fn pbs_routes_by_malus() {
        let ideal = PolarizingBeamsplitter::default();
        let (h, v) = polarizing_beamsplit(&ideal, Pulse::Coherent(pulse_at(0.0, 1.0)), &mut rng());
        assert!((h.expected_photons() - 1.0).abs() < 1e-15);
        assert!(v.expected_photons() < 1e-30);
        let (h, v) = polarizing_beamsplit(&ideal, Pulse::Coherent(pulse_at(FRAC_PI_4, 1.0)), &mut rng());
        assert!((h.expected_photons() - 0.5).abs() < 1e-12);
        assert!((v.expected_photons() - 0.5).abs() < 1e-12);
        assert_eq!(h.common().polarization, Polarization::horizontal());
        assert_eq!(v.common().polarization, Polarization::vertical());
    }

    #[test]
    fn pbs_extinction_leaks_into_wrong_port() {
        let pbs = PolarizingBeamsplitter {
            extinction_ratio_db: Some(20.0),
            insertion_loss_db: 0.0,
        };
        let (fh, fv) = pbs.port_fractions(&Polarization::horizontal());
        assert!((fv - 0.01).abs() < 1e-12);
        assert!((fh + fv - 1.0).abs() < 1e-15);
    }

    #[test]
    fn circulator_routing() {
        let c = Circulator::default();
        let p = Pulse::Coherent(pulse_at(0.0, 1.0));
        assert_eq!(circulate(&c, 0, p.clone(), &mut rng()).unwrap().0, 1);
        assert_eq!(circulate(&c, 2, p.clone(), &mut rng()).unwrap().0, 0);
        assert!(circulate(&c, 3, p.clone(), &mut rng()).is_err());
        let lossy = Circulator {
            insertion_loss_db: 1.0,
        };
        let (_, out) = circulate(&lossy, 1, p.clone(), &mut rng()).unwrap();
        assert!((out.energy_j() / p.energy_j() - 10f64.powf(-0.1)).abs() < 1e-12);
    }

    #[test]
    fn modulator_sets_linear_states() {
        let props = PolarizationModulator::default();
        for (angle, ex, ey) in [(0.0, 1.0, 0.0), (FRAC_PI_4, FRAC_PI_4.cos(), FRAC_PI_4.sin()), (FRAC_PI_2, 0.0, 1.0)] {
            let mut s = ModulatorState::default();
            s.command(angle, SimTime::ZERO);
            let (out, unsettled) = modulate_polarization(
                &props,
                &s,
                Pulse::Coherent(pulse_at(1.0, 1.0)),
                SimTime::from_ps(10),
                &mut rng(),
            );
            assert!(!unsettled);
            let pol = out.common().polarization;
            assert!((pol.ex().re - ex).abs() < 1e-12 && (pol.ey().re - ey).abs() < 1e-12);
        }
    }

    #[test]
    fn modulator_settle_window_keeps_previous_angle() {
        let props = PolarizationModulator {
            insertion_loss_db: 0.0,
            settle_time_s: 1e-9,
        };
        let mut s = ModulatorState::default();
        s.command(FRAC_PI_2, SimTime::from_ps(100));
        let (out, unsettled) = modulate_polarization(
            &props,
            &s,
            Pulse::Coherent(pulse_at(0.3, 1.0)),
            SimTime::from_ps(500),
            &mut rng(),
        );
        assert!(unsettled);
        assert_eq!(out.common().polarization, Polarization::linear(0.0));
    }
}
