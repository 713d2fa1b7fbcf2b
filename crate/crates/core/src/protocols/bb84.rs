use std::f64::consts::FRAC_PI_4;
use std::fmt;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::kernel::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Rectilinear,
    Diagonal,
}

impl Basis {
    pub fn random(rng: &mut RngStream) -> Basis {
        if rng.uniform() < 0.5 {
            Basis::Rectilinear
        } else {
            Basis::Diagonal
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Basis::Rectilinear => "rectilinear",
            Basis::Diagonal => "diagonal",
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn random_bit(rng: &mut RngStream) -> u8 {
    u8::from(rng.uniform() < 0.5)
}

/// Linear polarization angle (rad) encoding `bit` in `basis`.
pub fn alice_prepare(bit: u8, basis: Basis) -> f64 {
    let base = match basis {
        Basis::Rectilinear => 0.0,
        Basis::Diagonal => FRAC_PI_4,
    };
    base + if bit == 0 { 0.0 } else { 2.0 * FRAC_PI_4 }
}

/// Rotation Bob applies before his PBS to measure in `basis`.
pub fn bob_measure_setup(basis: Basis) -> f64 {
    match basis {
        Basis::Rectilinear => 0.0,
        Basis::Diagonal => -FRAC_PI_4,
    }
}

/// What Bob's detectors saw in one slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    None,
    /// Exactly one detector fired; its index is also the bit.
    Click(u8),
    DoubleClick,
}

impl Outcome {
    pub fn detected(self) -> bool {
        self != Outcome::None
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::None => "none",
            Outcome::Click(0) => "click_h",
            Outcome::Click(_) => "click_v",
            Outcome::DoubleClick => "double",
        }
    }
}

/// Maps the H (bit 0) and V (bit 1) detector clicks of a slot to an outcome
/// and a bit. Double clicks get a uniformly random bit.
pub fn resolve_detection(h: bool, v: bool, rng: &mut RngStream) -> (Outcome, Option<u8>) {
    match (h, v) {
        (false, false) => (Outcome::None, None),
        (true, false) => (Outcome::Click(0), Some(0)),
        (false, true) => (Outcome::Click(1), Some(1)),
        (true, true) => (Outcome::DoubleClick, Some(random_bit(rng))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AliceRecord {
    pub pulse_id: u64,
    pub bit: u8,
    pub basis: Basis,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BobRecord {
    pub pulse_id: u64,
    pub basis: Basis,
    pub outcome: Outcome,
    pub bit: Option<u8>,
}

/// Positions where Bob detected something and the bases agree.
pub fn sift(alice: &[AliceRecord], bob: &[BobRecord]) -> Result<Vec<usize>, ProtocolError> {
    if alice.len() != bob.len() {
        return Err(ProtocolError::Bookkeeping(format!(
            "{} Alice records against {} Bob records",
            alice.len(),
            bob.len()
        )));
    }
    let mut kept = Vec::new();
    for (i, (a, b)) in alice.iter().zip(bob).enumerate() {
        if a.pulse_id != b.pulse_id {
            return Err(ProtocolError::Bookkeeping(format!(
                "record {i}: Alice pulse {} paired with Bob pulse {}",
                a.pulse_id, b.pulse_id
            )));
        }
        if b.outcome.detected() && a.basis == b.basis {
            kept.push(i);
        }
    }
    Ok(kept)
}

#[derive(Clone, Debug, PartialEq)]
pub struct QberEstimate {
    /// `None` when there was nothing to sample.
    pub qber: Option<f64>,
    pub errors: usize,
    /// One flag per sifted pair; sampled pairs are disclosed and dropped from the key.
    pub sampled: Vec<bool>,
}

impl QberEstimate {
    pub fn sample_size(&self) -> usize {
        self.sampled.iter().filter(|s| **s).count()
    }
}

/// Estimates the error rate from `⌈fraction·N⌉` uniformly chosen sifted pairs.
pub fn qber(pairs: &[(u8, u8)], sample_fraction: f64, rng: &mut RngStream) -> QberEstimate {
    let n = pairs.len();
    let mut sampled = vec![false; n];
    if n == 0 {
        return QberEstimate {
            qber: None,
            errors: 0,
            sampled,
        };
    }
    let k = ((sample_fraction.clamp(0.0, 1.0) * n as f64).ceil() as usize).min(n);
    let mut errors = 0;
    for i in index::sample(rng, n, k) {
        sampled[i] = true;
        if pairs[i].0 != pairs[i].1 {
            errors += 1;
        }
    }
    QberEstimate {
        qber: (k > 0).then(|| errors as f64 / k as f64),
        errors,
        sampled,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_table() {
        let d = std::f64::consts::PI / 180.0;
        assert_eq!(alice_prepare(0, Basis::Rectilinear), 0.0);
        assert!((alice_prepare(1, Basis::Rectilinear) - 90.0 * d).abs() < 1e-15);
        assert!((alice_prepare(0, Basis::Diagonal) - 45.0 * d).abs() < 1e-15);
        assert!((alice_prepare(1, Basis::Diagonal) - 135.0 * d).abs() < 1e-15);
        assert_eq!(bob_measure_setup(Basis::Rectilinear), 0.0);
        assert!((bob_measure_setup(Basis::Diagonal) + 45.0 * d).abs() < 1e-15);
    }

    #[test]
    fn detection_resolution() {
        let mut rng = RngStream::derive(1, "resolve");
        assert_eq!(resolve_detection(false, false, &mut rng), (Outcome::None, None));
        assert_eq!(resolve_detection(true, false, &mut rng), (Outcome::Click(0), Some(0)));
        assert_eq!(resolve_detection(false, true, &mut rng), (Outcome::Click(1), Some(1)));
        assert_eq!(resolve_detection(true, true, &mut rng).0, Outcome::DoubleClick);
    }

    #[test]
    fn sift_rejects_misaligned_records() {
        let a = [AliceRecord {
            pulse_id: 1,
            bit: 0,
            basis: Basis::Rectilinear,
        }];
        let b = [BobRecord {
            pulse_id: 2,
            basis: Basis::Rectilinear,
            outcome: Outcome::Click(0),
            bit: Some(0),
        }];
        assert!(sift(&a, &b).is_err());
        assert!(sift(&a, &[]).is_err());
    }

    #[test]
    fn qber_of_empty_and_perfect_sets() {
        let mut rng = RngStream::derive(1, "qber");
        assert_eq!(qber(&[], 0.5, &mut rng).qber, None);
        let pairs = vec![(1, 1); 1000];
        let est = qber(&pairs, 0.1, &mut rng);
        assert_eq!(est.qber, Some(0.0));
        assert_eq!(est.sample_size(), 100);
        let est = qber(&pairs[..7], 0.1, &mut rng);
        assert_eq!(est.sample_size(), 1);
    }
}
