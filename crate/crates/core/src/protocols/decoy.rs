use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{non_negative, positive, DomainError};
use crate::kernel::RngStream;

pub const DEFAULT_MIN_SLOTS: u64 = 10_000;
pub const DEFAULT_ATTACK_THRESHOLD: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityClass {
    Signal,
    Decoy,
    Vacuum,
}

impl IntensityClass {
    pub const ALL: [IntensityClass; 3] = [IntensityClass::Signal, IntensityClass::Decoy, IntensityClass::Vacuum];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IntensityClass::Signal => "signal",
            IntensityClass::Decoy => "decoy",
            IntensityClass::Vacuum => "vacuum",
        }
    }
}

impl fmt::Display for IntensityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_min_slots() -> u64 {
    DEFAULT_MIN_SLOTS
}

fn default_threshold() -> f64 {
    DEFAULT_ATTACK_THRESHOLD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoyConfig {
    pub signal_mpn: f64,
    pub decoy_mpn: f64,
    pub p_signal: f64,
    pub p_decoy: f64,
    pub p_vacuum: f64,
    #[serde(default = "default_min_slots")]
    pub min_slots_per_class: u64,
    #[serde(default = "default_threshold")]
    pub attack_threshold: f64,
}

impl DecoyConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        positive("decoy_mpn", self.decoy_mpn)?;
        if !self.signal_mpn.is_finite() || self.signal_mpn <= self.decoy_mpn {
            return Err(DomainError::OutOfRange {
                field: "signal_mpn",
                expected: "> decoy_mpn",
                value: self.signal_mpn,
            });
        }
        for (field, p) in [
            ("p_signal", self.p_signal),
            ("p_decoy", self.p_decoy),
            ("p_vacuum", self.p_vacuum),
        ] {
            crate::error::probability(field, p)?;
        }
        let sum = self.p_signal + self.p_decoy + self.p_vacuum;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(DomainError::OutOfRange {
                field: "p_vacuum",
                expected: "such that p_signal + p_decoy + p_vacuum = 1",
                value: self.p_vacuum,
            });
        }
        positive("attack_threshold", self.attack_threshold)?;
        non_negative("min_slots_per_class", self.min_slots_per_class as f64)
    }

    pub fn mpn(&self, class: IntensityClass) -> f64 {
        match class {
            IntensityClass::Signal => self.signal_mpn,
            IntensityClass::Decoy => self.decoy_mpn,
            IntensityClass::Vacuum => 0.0,
        }
    }
}

/// Draws an intensity class and returns it with the MPN Alice must emit.
pub fn decoy_choose(config: &DecoyConfig, rng: &mut RngStream) -> (IntensityClass, f64) {
    let u = rng.uniform();
    let class = if u < config.p_signal {
        IntensityClass::Signal
    } else if u < config.p_signal + config.p_decoy {
        IntensityClass::Decoy
    } else {
        IntensityClass::Vacuum
    };
    (class, config.mpn(class))
}

/// Poissonian no-attack channel: overall transmittance times detection
/// efficiency, and the background yield of an empty slot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub eta_sys: f64,
    pub y0: f64,
}

impl ChannelModel {
    /// `Q(m) = Y₀ + 1 − e^(−η·m)`.
    pub fn expected_gain(&self, mpn: f64) -> f64 {
        (self.y0 + 1.0 - (-self.eta_sys * mpn).exp()).min(1.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub slots: u64,
    pub detections: u64,
}

impl ClassCounts {
    pub fn gain(&self) -> Option<f64> {
        (self.slots > 0).then(|| self.detections as f64 / self.slots as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassResult {
    pub class: IntensityClass,
    pub slots: u64,
    pub observed_gain: f64,
    pub expected_gain: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum DecoyAnalysis {
    Conclusive {
        statistic: f64,
        attack_flag: bool,
        classes: Vec<ClassResult>,
    },
    /// Some class had fewer slots than required.
    Inconclusive { reason: String },
}

impl DecoyAnalysis {
    pub fn statistic(&self) -> Option<f64> {
        match self {
            DecoyAnalysis::Conclusive { statistic, .. } => Some(*statistic),
            DecoyAnalysis::Inconclusive { .. } => None,
        }
    }

    pub fn attack_flag(&self) -> Option<bool> {
        match self {
            DecoyAnalysis::Conclusive { attack_flag, .. } => Some(*attack_flag),
            DecoyAnalysis::Inconclusive { .. } => None,
        }
    }
}

/// Gain-consistency test: the largest standardized deviation of an observed
/// class gain from the calibrated channel model, flagged above `threshold`.
pub fn decoy_analyze(
    counts: &[ClassCounts; 3],
    mpn: &[f64; 3],
    model: &ChannelModel,
    min_slots: u64,
    threshold: f64,
) -> DecoyAnalysis {
    let mut classes = Vec::with_capacity(3);
    for class in IntensityClass::ALL {
        let c = counts[class.index()];
        if c.slots < min_slots.max(1) {
            return DecoyAnalysis::Inconclusive {
                reason: format!("{class} class has {} slots, {} required", c.slots, min_slots.max(1)),
            };
        }
        let observed = c.detections as f64 / c.slots as f64;
        let expected = model.expected_gain(mpn[class.index()]);
        let var = expected * (1.0 - expected) / c.slots as f64;
        let z = if var > 0.0 {
            (observed - expected).abs() / var.sqrt()
        } else if observed == expected {
            0.0
        } else {
            f64::INFINITY
        };
        classes.push(ClassResult {
            class,
            slots: c.slots,
            observed_gain: observed,
            expected_gain: expected,
            z,
        });
    }
    let statistic = classes.iter().map(|c| c.z).fold(0.0, f64::max);
    DecoyAnalysis::Conclusive {
        statistic,
        attack_flag: statistic > threshold,
        classes,
    }
}
