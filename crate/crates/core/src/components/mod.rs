//! Optical component toolbox.
//!
//! Each device kind has an immutable property record (validated when it is
//! read from config) and one or more stateless transfer functions that take
//! the properties, the pulse, any explicit state and an explicit RNG stream.
//! The kernel wrappers in [`crate::network`] only route messages and hold the
//! few state variables these functions need.

mod detector;
mod passive;
mod source;

use serde::{Deserialize, Serialize};

use crate::kernel::RngStream;
use crate::pulse::Pulse;

pub use detector::{classical_detect, spd_gate, ClassicalDetector, DetectorClick, Spd, SpdState};
pub use passive::{
    attenuate, beamsplit, circulate, couple, modulate_polarization, polarizing_beamsplit, rotate, Attenuator, Beamsplitter,
    Circulator, Coupler, ModulatorState, PolarizationModulator, PolarizationRotator, PolarizingBeamsplitter,
    VariableAttenuator,
};
pub use source::{laser_fire, Laser, LaserSource, LaserState};

/// Default multiplier applied to loss figures of a `degraded` device.
pub const DEFAULT_DEGRADATION_FACTOR: f64 = 2.0;

/// Operating condition of a device.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceCondition {
    #[default]
    Working,
    /// Loss figures (in dB) are multiplied by the degradation factor.
    Degraded,
    /// Absorbs everything; emits nothing on any port.
    Damaged,
}

/// Power transmittance of a loss given in dB.
pub fn db_to_transmittance(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

/// Applies a power transmittance: scales a coherent pulse, or keeps each
/// photon of a Fock pulse independently with probability `t`.
pub fn apply_transmittance(pulse: Pulse, t: f64, rng: &mut RngStream) -> Pulse {
    match pulse {
        Pulse::Coherent(mut p) => {
            p.scale_power(t);
            Pulse::Coherent(p)
        }
        Pulse::Fock(mut p) => {
            if t < 1.0 {
                p.retain_photons(|_| rng.uniform() < t);
            }
            Pulse::Fock(p)
        }
    }
}

/// Property records that know how a `degraded` condition changes them.
pub trait Degradable: Sized + Clone {
    fn degraded(&self, factor: f64) -> Self;

    /// The properties in effect under `condition`; `None` when damaged.
    fn effective(&self, condition: DeviceCondition, factor: f64) -> Option<Self> {
        match condition {
            DeviceCondition::Working => Some(self.clone()),
            DeviceCondition::Degraded => Some(self.degraded(factor)),
            DeviceCondition::Damaged => None,
        }
    }
}
