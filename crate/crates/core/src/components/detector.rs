use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Degradable;
use crate::error::{non_negative, positive, probability, DomainError};
use crate::kernel::{RngStream, SimTime};
use crate::pulse::Pulse;

/// Gated single-photon detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spd {
    pub efficiency: f64,
    #[serde(default)]
    pub dark_count_prob: f64,
    pub gate_width_s: f64,
    #[serde(default)]
    pub dead_time_s: f64,
    #[serde(default)]
    pub jitter_sigma_s: f64,
    /// Spacing of successive gates.
    pub gate_period_s: f64,
    /// Opening time of gate 0. When absent the network builder aligns the
    /// gates with the optical path delay from the source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_offset_s: Option<f64>,
    /// How long before the expected pulse start each gate opens.
    #[serde(default)]
    pub gate_lead_s: f64,
}

impl Spd {
    pub fn validate(&self) -> Result<(), DomainError> {
        probability("efficiency", self.efficiency)?;
        probability("dark_count_prob", self.dark_count_prob)?;
        positive("gate_width_s", self.gate_width_s)?;
        non_negative("dead_time_s", self.dead_time_s)?;
        non_negative("jitter_sigma_s", self.jitter_sigma_s)?;
        positive("gate_period_s", self.gate_period_s)?;
        non_negative("gate_lead_s", self.gate_lead_s)?;
        if let Some(o) = self.gate_offset_s {
            non_negative("gate_offset_s", o)?;
        }
        Ok(())
    }
}

impl Degradable for Spd {
    fn degraded(&self, factor: f64) -> Self {
        Spd {
            efficiency: self.efficiency.powf(factor),
            ..self.clone()
        }
    }
}

/// Dead-time clock of one detector.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpdState {
    pub last_click: Option<SimTime>,
}

/// A detector click.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorClick {
    pub time: SimTime,
    pub gate_index: u64,
    /// True when no photon was detected and the click is a dark count.
    pub dark: bool,
}

/// Evaluates one gate `[gate_open, gate_open + width]`.
///
/// While dead (`gate_open < last_click + dead_time`) nothing is drawn and no
/// click results. Otherwise photons inside the gate are tried earliest first,
/// each detected with probability `η`, so a click from `n` photons happens
/// with probability `1 − (1 − η)^n`. An independent dark count may also fire.
/// Photon clicks are timed at the first detected photon plus Gaussian jitter,
/// dark-only clicks uniformly within the gate; both are clamped to the gate.
pub fn spd_gate(
    props: &Spd,
    state: &mut SpdState,
    gate_open: SimTime,
    gate_index: u64,
    photons: &[SimTime],
    rng: &mut RngStream,
) -> Option<DetectorClick> {
    if let Some(last) = state.last_click {
        if gate_open < last + SimTime::from_secs_f64(props.dead_time_s) {
            return None;
        }
    }
    let gate_close = gate_open + SimTime::from_secs_f64(props.gate_width_s);
    let mut detected = None;
    for &t in photons.iter().filter(|t| **t >= gate_open && **t <= gate_close) {
        if rng.uniform() < props.efficiency {
            detected = Some(t);
            break;
        }
    }
    let dark = props.dark_count_prob > 0.0 && rng.uniform() < props.dark_count_prob;
    let time = match detected {
        Some(t) if props.jitter_sigma_s > 0.0 => {
            let z: f64 = StandardNormal.sample(rng);
            let shifted = t.as_ps() as f64 + z * props.jitter_sigma_s * 1e12;
            let clamped = shifted.round().clamp(gate_open.as_ps() as f64, gate_close.as_ps() as f64);
            SimTime::from_ps(clamped as u64)
        }
        Some(t) => t,
        None if dark => {
            let span = (gate_close - gate_open).as_ps() as f64;
            gate_open + SimTime::from_ps((rng.uniform() * span) as u64)
        }
        None => return None,
    };
    state.last_click = Some(time);
    Some(DetectorClick {
        time,
        gate_index,
        dark: detected.is_none(),
    })
}

/// Threshold detector for bright light.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalDetector {
    pub threshold_j: f64,
}

impl ClassicalDetector {
    pub fn validate(&self) -> Result<(), DomainError> {
        non_negative("threshold_j", self.threshold_j)
    }
}

impl Degradable for ClassicalDetector {
    fn degraded(&self, _factor: f64) -> Self {
        self.clone()
    }
}

/// Returns `(energy ≥ threshold, energy)`.
pub fn classical_detect(props: &ClassicalDetector, pulse: &Pulse) -> (bool, f64) {
    let e = pulse.energy_j();
    (e >= props.threshold_j, e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(eff: f64, dark: f64) -> Spd {
        Spd {
            efficiency: eff,
            dark_count_prob: dark,
            gate_width_s: 1e-9,
            dead_time_s: 50e-9,
            jitter_sigma_s: 0.0,
            gate_period_s: 100e-9,
            gate_offset_s: None,
            gate_lead_s: 0.0,
        }
    }

    #[test]
    fn nothing_in_gate_no_dark_counts() {
        let mut rng = RngStream::derive(1, "spd");
        let mut st = SpdState::default();
        for k in 0..1000 {
            assert!(spd_gate(&spd(0.5, 0.0), &mut st, SimTime::from_ps(k * 100_000), k, &[], &mut rng).is_none());
        }
    }

    #[test]
    fn perfect_efficiency_always_clicks() {
        let mut rng = RngStream::derive(1, "spd");
        let props = spd(1.0, 0.0);
        for k in 0..1000u64 {
            let mut st = SpdState::default();
            let open = SimTime::from_ps(k * 1000);
            let c = spd_gate(&props, &mut st, open, k, &[open + SimTime::from_ps(300)], &mut rng).unwrap();
            assert_eq!(c.time, open + SimTime::from_ps(300));
            assert!(!c.dark);
        }
    }

    #[test]
    fn photons_outside_gate_are_ignored() {
        let mut rng = RngStream::derive(1, "spd");
        let mut st = SpdState::default();
        let open = SimTime::from_ps(10_000);
        let photons = [SimTime::from_ps(9_999), SimTime::from_ps(11_001)];
        assert!(spd_gate(&spd(1.0, 0.0), &mut st, open, 0, &photons, &mut rng).is_none());
    }

    #[test]
    fn dead_time_blocks_following_gates() {
        let mut rng = RngStream::derive(1, "spd");
        let props = spd(1.0, 0.0);
        let mut st = SpdState::default();
        let t0 = SimTime::from_ps(0);
        assert!(spd_gate(&props, &mut st, t0, 0, &[t0], &mut rng).is_some());
        let t1 = SimTime::from_secs_f64(20e-9);
        assert!(spd_gate(&props, &mut st, t1, 1, &[t1], &mut rng).is_none());
        let t2 = SimTime::from_secs_f64(60e-9);
        assert!(spd_gate(&props, &mut st, t2, 2, &[t2], &mut rng).is_some());
    }

    #[test]
    fn jitter_is_clamped_to_gate() {
        let mut rng = RngStream::derive(5, "spd");
        let props = Spd {
            jitter_sigma_s: 5e-9,
            dead_time_s: 0.0,
            ..spd(1.0, 0.0)
        };
        let mut st = SpdState::default();
        for k in 0..500u64 {
            let open = SimTime::from_secs_f64(k as f64 * 1e-7);
            let c = spd_gate(&props, &mut st, open, k, &[open], &mut rng).unwrap();
            assert!(c.time >= open && c.time <= open + SimTime::from_secs_f64(1e-9));
        }
    }

    #[test]
    fn classical_threshold_is_inclusive() {
        use crate::pulse::{CoherentPulse, Polarization, PulseCommon, ShapeFunction, ShapeProfile};
        use std::sync::Arc;
        let profile = Arc::new(ShapeProfile::new(ShapeFunction::gaussian(1e-3, 1e-9, 1e-10).unwrap(), 2e-9).unwrap());
        let common = PulseCommon::new(1550e-9, 0.0, Polarization::horizontal(), profile, SimTime::ZERO).unwrap();
        let p = Pulse::Coherent(CoherentPulse::new(common.clone(), 1.0).unwrap());
        let e = p.energy_j();
        assert_eq!(classical_detect(&ClassicalDetector { threshold_j: e }, &p), (true, e));
        let (hit, measured) = classical_detect(&ClassicalDetector { threshold_j: e / 2.0 }, &p);
        assert!(hit && (measured / e - 1.0).abs() < 1e-9);
        let dark = Pulse::Coherent(CoherentPulse::new(common, 0.0).unwrap());
        assert!(!classical_detect(&ClassicalDetector { threshold_j: 1e-30 }, &dark).0);
    }
}
