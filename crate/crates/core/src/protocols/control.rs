use serde::{Deserialize, Serialize};

use crate::error::{non_negative, positive, DomainError};

fn unit_gain() -> f64 {
    1.0
}

/// Feedback law of Bob's polarization controller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(default = "unit_gain")]
    pub gain: f64,
    pub slew_rad_per_s: f64,
    pub update_interval_s: f64,
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        non_negative("gain", self.gain)?;
        non_negative("slew_rad_per_s", self.slew_rad_per_s)?;
        positive("update_interval_s", self.update_interval_s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControllerState {
    pub correction: f64,
    pub last_error: f64,
    pub slew_rad_per_s: f64,
}

impl ControllerState {
    pub fn new(slew_rad_per_s: f64) -> Self {
        ControllerState {
            slew_rad_per_s,
            ..Default::default()
        }
    }
}

/// Proportional step `clamp(−k·error, ±slew·dt)` added to the correction.
pub fn controller_update(state: ControllerState, error_estimate: f64, dt: f64, gain: f64) -> ControllerState {
    let limit = state.slew_rad_per_s * dt.max(0.0);
    let step = (-gain * error_estimate).clamp(-limit, limit);
    ControllerState {
        correction: state.correction + step,
        last_error: error_estimate,
        ..state
    }
}

/// Reference-pulse tallies for one estimation window. Both references are
/// measured in the rectilinear basis; `wrong` counts clicks on the V port.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ReferenceCounts {
    pub zero_total: u64,
    pub zero_wrong: u64,
    pub diag_total: u64,
    pub diag_v: u64,
}

impl ReferenceCounts {
    pub fn record(&mut self, diagonal_reference: bool, v_port: bool) {
        if diagonal_reference {
            self.diag_total += 1;
            self.diag_v += u64::from(v_port);
        } else {
            self.zero_total += 1;
            self.zero_wrong += u64::from(v_port);
        }
    }
}

/// Signed misalignment estimate. The magnitude is `asin √f₀` from the wrong
/// port fraction of the 0° reference; the sign comes from whether the 45°
/// reference leans toward V (`sin²(45° + ε) > ½` for `ε > 0`). `None` when no
/// 0° reference was detected.
pub fn estimate_polarization_error(counts: &ReferenceCounts) -> Option<f64> {
    if counts.zero_total == 0 {
        return None;
    }
    let f0 = counts.zero_wrong as f64 / counts.zero_total as f64;
    let magnitude = f0.sqrt().asin();
    let sign = if counts.diag_total > 0 && (counts.diag_v as f64) < 0.5 * counts.diag_total as f64 {
        -1.0
    } else {
        1.0
    };
    Some(sign * magnitude)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_error_holds_correction() {
        let s = ControllerState::new(0.2);
        assert_eq!(controller_update(s, 0.0, 0.2, 1.0).correction, 0.0);
    }

    #[test]
    fn step_is_slew_limited() {
        let s = ControllerState::new(0.2);
        let s = controller_update(s, 1.0, 0.5, 1.0);
        assert!((s.correction + 0.1).abs() < 1e-15);
        let s = controller_update(s, -0.01, 0.5, 1.0);
        assert!((s.correction + 0.09).abs() < 1e-15);
    }

    #[test]
    fn error_magnitudes() {
        let c = ReferenceCounts {
            zero_total: 100,
            zero_wrong: 0,
            diag_total: 100,
            diag_v: 50,
        };
        assert_eq!(estimate_polarization_error(&c), Some(0.0));
        let half = ReferenceCounts {
            zero_total: 100,
            zero_wrong: 50,
            ..c
        };
        assert!((estimate_polarization_error(&half).unwrap() - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        let negative = ReferenceCounts { diag_v: 10, ..half };
        assert!(estimate_polarization_error(&negative).unwrap() < 0.0);
        assert_eq!(estimate_polarization_error(&ReferenceCounts::default()), None);
    }
}
