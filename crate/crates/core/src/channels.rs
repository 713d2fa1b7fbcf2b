//! Optical channels: fiber with loss, delay and polarization drift, and a
//! fixed-loss free-space link.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::components::{apply_transmittance, db_to_transmittance};
use crate::error::{non_negative, positive, DomainError};
use crate::kernel::{RngStream, SimTime};
use crate::pulse::{Pulse, StokesAxis, SPEED_OF_LIGHT};

pub const DEFAULT_GROUP_INDEX: f64 = 1.468;

fn default_group_index() -> f64 {
    DEFAULT_GROUP_INDEX
}

/// A window during which the drift rate is multiplied.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gust {
    pub start_s: f64,
    pub end_s: f64,
    pub sigma_multiplier: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberProperties {
    pub length_km: f64,
    pub attenuation_db_per_km: f64,
    #[serde(default = "default_group_index")]
    pub group_index: f64,
    #[serde(default)]
    pub drift_sigma_rad_per_sqrt_s: f64,
    /// Fixed rotation axis of the drift. When absent the network builder
    /// draws one per fiber from the fiber's own RNG stream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_axis: Option<StokesAxis>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gust_schedule: Vec<Gust>,
}

impl FiberProperties {
    pub fn new(length_km: f64, attenuation_db_per_km: f64) -> Result<Self, DomainError> {
        let p = FiberProperties {
            length_km,
            attenuation_db_per_km,
            group_index: DEFAULT_GROUP_INDEX,
            drift_sigma_rad_per_sqrt_s: 0.0,
            drift_axis: None,
            gust_schedule: Vec::new(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        non_negative("length_km", self.length_km)?;
        non_negative("attenuation_db_per_km", self.attenuation_db_per_km)?;
        positive("group_index", self.group_index)?;
        non_negative("drift_sigma_rad_per_sqrt_s", self.drift_sigma_rad_per_sqrt_s)?;
        for g in &self.gust_schedule {
            non_negative("start_s", g.start_s)?;
            non_negative("sigma_multiplier", g.sigma_multiplier)?;
            if !(g.end_s.is_finite() && g.end_s >= g.start_s) {
                return Err(DomainError::OutOfRange {
                    field: "end_s",
                    expected: ">= start_s",
                    value: g.end_s,
                });
            }
        }
        Ok(())
    }

    pub fn total_loss_db(&self) -> f64 {
        self.length_km * self.attenuation_db_per_km
    }

    pub fn axis(&self) -> StokesAxis {
        self.drift_axis.unwrap_or_default()
    }

    /// Drift rate in effect at `t` seconds.
    pub fn sigma_at(&self, t: f64) -> f64 {
        self.gust_schedule
            .iter()
            .filter(|g| t >= g.start_s && t < g.end_s)
            .fold(self.drift_sigma_rad_per_sqrt_s, |s, g| s * g.sigma_multiplier)
    }

    /// `∫ σ(t)² dt` over `[from, to]` seconds.
    pub fn drift_variance(&self, from: f64, to: f64) -> f64 {
        if to <= from || self.drift_sigma_rad_per_sqrt_s == 0.0 {
            return 0.0;
        }
        let mut cuts = vec![from, to];
        for g in &self.gust_schedule {
            for x in [g.start_s, g.end_s] {
                if x > from && x < to {
                    cuts.push(x);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.windows(2)
            .map(|w| {
                let s = self.sigma_at(0.5 * (w[0] + w[1]));
                s * s * (w[1] - w[0])
            })
            .sum()
    }
}

/// Drift state of one fiber.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FiberState {
    pub theta: f64,
    pub last_update: SimTime,
}

/// Propagation delay `L·n_g/c` in seconds.
pub fn fiber_delay(props: &FiberProperties) -> f64 {
    props.length_km * 1e3 * props.group_index / SPEED_OF_LIGHT
}

/// Advances the Wiener drift to `now`. Times before the last update leave the
/// state untouched.
pub fn drift_advance(props: &FiberProperties, state: FiberState, now: SimTime, rng: &mut RngStream) -> FiberState {
    if now <= state.last_update {
        return FiberState {
            last_update: state.last_update.max(now),
            ..state
        };
    }
    let var = props.drift_variance(state.last_update.as_secs_f64(), now.as_secs_f64());
    let theta = if var > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        state.theta + var.sqrt() * z
    } else {
        state.theta
    };
    FiberState { theta, last_update: now }
}

/// Carries a pulse through the fiber: drift advanced to `send_time`, loss,
/// then rotation by the current drift angle. Returns the arrival time.
pub fn fiber_propagate(
    props: &FiberProperties,
    state: &mut FiberState,
    pulse: Pulse,
    send_time: SimTime,
    rng: &mut RngStream,
) -> (Pulse, SimTime) {
    *state = drift_advance(props, *state, send_time, rng);
    let mut out = apply_transmittance(pulse, db_to_transmittance(props.total_loss_db()), rng);
    if state.theta != 0.0 {
        let c = out.common_mut();
        c.polarization = c.polarization.rotate_about(props.axis(), state.theta);
    }
    (out, send_time + SimTime::from_secs_f64(fiber_delay(props)))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeSpaceProperties {
    #[serde(default)]
    pub loss_db: f64,
    #[serde(default)]
    pub delay_s: f64,
}

impl FreeSpaceProperties {
    pub fn validate(&self) -> Result<(), DomainError> {
        non_negative("loss_db", self.loss_db)?;
        non_negative("delay_s", self.delay_s)
    }
}

pub fn freespace_propagate(
    props: &FreeSpaceProperties,
    pulse: Pulse,
    send_time: SimTime,
    rng: &mut RngStream,
) -> (Pulse, SimTime) {
    let out = apply_transmittance(pulse, db_to_transmittance(props.loss_db), rng);
    (out, send_time + SimTime::from_secs_f64(props.delay_s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulse::{CoherentPulse, Polarization, PulseCommon, ShapeFunction, ShapeProfile};
    use std::sync::Arc;

    fn pulse(mpn: f64) -> Pulse {
        let profile = Arc::new(ShapeProfile::new(ShapeFunction::gaussian(1e-3, 1e-9, 1e-10).unwrap(), 2e-9).unwrap());
        let common = PulseCommon::new(1550e-9, 0.0, Polarization::horizontal(), profile, SimTime::ZERO).unwrap();
        let mut p = CoherentPulse::new(common, 1.0).unwrap();
        p.set_mean_photon_number(mpn);
        Pulse::Coherent(p)
    }

    #[test]
    fn one_metre_delay() {
        let p = FiberProperties::new(0.001, 0.2).unwrap();
        assert!((fiber_delay(&p) - 4.897e-9).abs() < 1e-12);
        let q = FiberProperties::new(0.002, 0.2).unwrap();
        assert!((fiber_delay(&q) / fiber_delay(&p) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn twenty_five_km_loss() {
        let props = FiberProperties::new(25.0, 0.2).unwrap();
        let mut st = FiberState::default();
        let mut rng = RngStream::derive(1, "fiber");
        let (out, at) = fiber_propagate(&props, &mut st, pulse(1.0), SimTime::ZERO, &mut rng);
        assert!((out.expected_photons() - 10f64.powf(-0.5)).abs() < 1e-12);
        assert_eq!(at, SimTime::from_secs_f64(fiber_delay(&props)));
        assert_eq!(out.common().polarization, Polarization::horizontal());
    }

    #[test]
    fn zero_length_is_identity() {
        let props = FiberProperties::new(0.0, 0.2).unwrap();
        let mut rng = RngStream::derive(1, "fiber");
        let t = SimTime::from_ps(77);
        let (out, at) = fiber_propagate(&props, &mut FiberState::default(), pulse(0.3), t, &mut rng);
        assert_eq!(at, t);
        assert!((out.expected_photons() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn cascaded_fibers_compose() {
        let mut rng = RngStream::derive(1, "fiber");
        let a = FiberProperties::new(7.0, 0.21).unwrap();
        let b = FiberProperties::new(11.0, 0.21).unwrap();
        let ab = FiberProperties::new(18.0, 0.21).unwrap();
        let (p, _) = fiber_propagate(&a, &mut FiberState::default(), pulse(1.0), SimTime::ZERO, &mut rng);
        let (p, _) = fiber_propagate(&b, &mut FiberState::default(), p, SimTime::ZERO, &mut rng);
        let (q, _) = fiber_propagate(&ab, &mut FiberState::default(), pulse(1.0), SimTime::ZERO, &mut rng);
        assert!((p.expected_photons() / q.expected_photons() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_drift_without_sigma_or_elapsed_time() {
        let props = FiberProperties::new(1.0, 0.2).unwrap();
        let mut rng = RngStream::derive(1, "fiber");
        let s = drift_advance(&props, FiberState::default(), SimTime::from_secs_f64(10.0), &mut rng);
        assert_eq!(s.theta, 0.0);
        let drifting = FiberProperties {
            drift_sigma_rad_per_sqrt_s: 0.1,
            ..props
        };
        let start = FiberState {
            theta: 0.3,
            last_update: SimTime::from_ps(5),
        };
        let s = drift_advance(&drifting, start, SimTime::from_ps(5), &mut rng);
        assert_eq!(s, start);
    }

    #[test]
    fn wiener_increment_variance() {
        let props = FiberProperties {
            drift_sigma_rad_per_sqrt_s: 0.1,
            ..FiberProperties::new(1.0, 0.2).unwrap()
        };
        let mut rng = RngStream::derive(3, "fiber");
        let n = 10_000;
        let d: Vec<f64> = (0..n)
            .map(|_| drift_advance(&props, FiberState::default(), SimTime::from_secs_f64(100.0), &mut rng).theta)
            .collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((sd - 1.0).abs() < 0.05, "sd {sd}");
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn gust_variance_integrates_piecewise() {
        let props = FiberProperties {
            drift_sigma_rad_per_sqrt_s: 0.02,
            gust_schedule: vec![Gust {
                start_s: 10.0,
                end_s: 20.0,
                sigma_multiplier: 50.0,
            }],
            ..FiberProperties::new(1.0, 0.2).unwrap()
        };
        let calm = 0.02f64.powi(2);
        let v = props.drift_variance(5.0, 15.0);
        assert!((v - (5.0 * calm + 5.0 * calm * 2500.0)).abs() < 1e-12);
        assert!((props.drift_variance(0.0, 1.0) - calm).abs() < 1e-15);
    }

    #[test]
    fn free_space() {
        let mut rng = RngStream::derive(1, "fs");
        let id = FreeSpaceProperties::default();
        let (p, at) = freespace_propagate(&id, pulse(0.7), SimTime::from_ps(3), &mut rng);
        assert_eq!(at, SimTime::from_ps(3));
        assert_eq!(p.expected_photons(), pulse(0.7).expected_photons());
        let lossy = FreeSpaceProperties {
            loss_db: 30.0,
            delay_s: 1e-3,
        };
        let (p, at) = freespace_propagate(&lossy, pulse(1.0), SimTime::ZERO, &mut rng);
        assert!((p.expected_photons() - 1e-3).abs() < 1e-15);
        assert_eq!(at, SimTime::from_ps(1_000_000_000));
    }
}
