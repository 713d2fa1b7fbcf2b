use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// Ticks per second. Simulation time is kept as an integer count of
/// picoseconds so that event ordering never depends on float rounding.
pub const TICKS_PER_SECOND: u64 = 1_000_000_000_000;

/// A non-negative simulation instant (or span) with picosecond resolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ps(ps: u64) -> Self {
        SimTime(ps)
    }

    /// Quantizes a span in seconds to the nearest picosecond.
    ///
    /// Negative and NaN inputs clamp to zero; callers validate their
    /// parameters before they get here.
    pub fn from_secs_f64(secs: f64) -> Self {
        if secs.is_nan() || secs <= 0.0 {
            return SimTime::ZERO;
        }
        let ticks = (secs * TICKS_PER_SECOND as f64).round();
        if ticks >= u64::MAX as f64 {
            SimTime::MAX
        } else {
            SimTime(ticks as u64)
        }
    }

    pub const fn as_ps(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / TICKS_PER_SECOND as f64
    }

    pub fn checked_add(self, other: SimTime) -> Option<SimTime> {
        self.0.checked_add(other.0).map(SimTime)
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.checked_add(rhs.0).expect("simulation time overflow"))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        *self = *self + rhs;
    }
}

impl Sub for SimTime {
    type Output = SimTime;

    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.checked_sub(rhs.0).expect("negative simulation time span"))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ps", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantizes_to_nearest_picosecond() {
        assert_eq!(SimTime::from_secs_f64(5.0).as_ps(), 5 * TICKS_PER_SECOND);
        assert_eq!(SimTime::from_secs_f64(1.4e-12).as_ps(), 1);
        assert_eq!(SimTime::from_secs_f64(1.6e-12).as_ps(), 2);
        assert_eq!(SimTime::from_secs_f64(-3.0), SimTime::ZERO);
        assert_eq!(SimTime::from_secs_f64(f64::NAN), SimTime::ZERO);
    }

    #[test]
    fn arithmetic_is_exact() {
        let a = SimTime::from_ps(7);
        let b = SimTime::from_ps(5);
        assert_eq!((a + b).as_ps(), 12);
        assert_eq!((a - b).as_ps(), 2);
        assert_eq!(b.saturating_sub(a), SimTime::ZERO);
        assert!(a + SimTime::ZERO >= a);
    }
}
