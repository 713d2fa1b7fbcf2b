use std::f64::consts::TAU;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Degradable;
use crate::error::{non_negative, positive, DomainError};
use crate::kernel::{RngStream, SimTime};
use crate::pulse::{CoherentPulse, Polarization, PulseCommon, ShapeFunction, ShapeProfile};

/// Pulsed laser properties.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Laser {
    pub wavelength_m: f64,
    /// Template power envelope; rescaled so each pulse carries `pulse_energy_j`.
    pub shape: ShapeFunction,
    pub duration_s: f64,
    pub pulse_energy_j: f64,
    pub repetition_period_s: f64,
}

impl Laser {
    pub fn validate(&self) -> Result<(), DomainError> {
        positive("wavelength_m", self.wavelength_m)?;
        positive("duration_s", self.duration_s)?;
        non_negative("pulse_energy_j", self.pulse_energy_j)?;
        non_negative("repetition_period_s", self.repetition_period_s)?;
        self.shape.validate()
    }
}

impl Degradable for Laser {
    // A laser has no loss figure to scale.
    fn degraded(&self, _factor: f64) -> Self {
        self.clone()
    }
}

/// Laser properties with the shape profile and template scale resolved.
#[derive(Clone, Debug)]
pub struct LaserSource {
    props: Laser,
    profile: Arc<ShapeProfile>,
    amplitude_scale: f64,
}

impl LaserSource {
    pub fn new(props: Laser) -> Result<Self, DomainError> {
        props.validate()?;
        let profile = Arc::new(ShapeProfile::new(props.shape.clone(), props.duration_s)?);
        let unit = profile.unit_energy_j();
        let amplitude_scale = if props.pulse_energy_j == 0.0 {
            0.0
        } else if unit > 0.0 {
            props.pulse_energy_j / unit
        } else {
            return Err(DomainError::ZeroIntegral {
                duration_s: props.duration_s,
            });
        };
        Ok(LaserSource {
            props,
            profile,
            amplitude_scale,
        })
    }

    pub fn props(&self) -> &Laser {
        &self.props
    }

    pub fn profile(&self) -> &Arc<ShapeProfile> {
        &self.profile
    }

    /// MPN of every emitted pulse.
    pub fn mean_photon_number(&self) -> f64 {
        self.props.pulse_energy_j / crate::pulse::photon_energy(self.props.wavelength_m).expect("validated")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LaserState {
    last_fire: Option<SimTime>,
}

/// Emits one phase-randomized pulse, or `None` when the trigger comes sooner
/// than the repetition period after the previous shot.
pub fn laser_fire(
    source: &LaserSource,
    state: &mut LaserState,
    trigger_time: SimTime,
    rng: &mut RngStream,
) -> Option<CoherentPulse> {
    if let Some(last) = state.last_fire {
        if trigger_time.saturating_sub(last) < SimTime::from_secs_f64(source.props.repetition_period_s) {
            return None;
        }
    }
    state.last_fire = Some(trigger_time);
    let phase = rng.uniform() * TAU;
    let common = PulseCommon::new(
        source.props.wavelength_m,
        phase,
        Polarization::horizontal(),
        source.profile.clone(),
        trigger_time,
    )
    .expect("validated laser properties");
    Some(CoherentPulse::new(common, source.amplitude_scale).expect("non-negative scale"))
}
