use super::bb84::{bob_measure_setup, random_bit, Basis};
use crate::kernel::{RngStream, SimTime};
use crate::pulse::FockPulse;

/// What a photon-number-splitting Eve has done so far.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EveState {
    /// `(pulse_id, arrival time)` of every stored photon.
    pub stored: Vec<(u64, SimTime)>,
    pub suppressed: u64,
    pub forwarded_photons: u64,
    pub pulses_seen: u64,
}

/// Splits one pulse after a number measurement. Single photons are blocked;
/// from larger pulses one randomly chosen photon is kept and the rest sent on.
pub fn pns_attack(mut pulse: FockPulse, pulse_id: u64, state: &mut EveState, rng: &mut RngStream) -> FockPulse {
    state.pulses_seen += 1;
    match pulse.photon_count() {
        0 => pulse,
        1 => {
            state.suppressed += 1;
            pulse.retain_photons(|_| false);
            pulse
        }
        n => {
            let pick = ((rng.uniform() * n as f64) as usize).min(n - 1);
            let t = pulse.remove_photon(pick).expect("index within count");
            state.stored.push((pulse_id, t));
            state.forwarded_photons += (n - 1) as u64;
            pulse
        }
    }
}

/// Measures every photon of `pulse` in a random basis with ideal optics and
/// detectors. Mixed port results give a random bit; `None` for vacuum.
pub fn intercept_measure(pulse: &FockPulse, rng: &mut RngStream) -> Option<(Basis, u8)> {
    if pulse.photon_count() == 0 {
        return None;
    }
    let basis = Basis::random(rng);
    let (ph, _) = pulse.common.polarization.rotate(bob_measure_setup(basis)).power_fractions();
    let mut h = false;
    let mut v = false;
    for _ in 0..pulse.photon_count() {
        if rng.uniform() < ph {
            h = true;
        } else {
            v = true;
        }
    }
    let bit = match (h, v) {
        (true, false) => 0,
        (false, true) => 1,
        _ => random_bit(rng),
    };
    Some((basis, bit))
}
