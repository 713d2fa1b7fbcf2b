//! Statistical checks of the stateless functions against closed forms
//! computed here.

mod common;

use std::f64::consts::FRAC_PI_4;
use std::sync::Arc;

use qkdsim_core::channels::{fiber_propagate, FiberProperties, FiberState};
use qkdsim_core::components::{attenuate, polarizing_beamsplit, spd_gate, Attenuator, PolarizingBeamsplitter, Spd, SpdState};
use qkdsim_core::kernel::{RngStream, SimTime};
use qkdsim_core::network::EveMode;
use qkdsim_core::protocols::{
    controller_update, decoy_choose, estimate_polarization_error, resolve_detection, sift, AliceRecord, Basis,
    BobRecord, ControllerState, DecoyConfig, IntensityClass, Outcome, ReferenceCounts,
};
use qkdsim_core::pulse::{
    realize_fock, sample_arrival_times, sample_photon_count, CoherentPulse, FockPulse, Polarization, Pulse,
    PulseCommon, ShapeFunction, ShapeProfile,
};
use qkdsim_core::scenario::{builtin, simulate};

use common::binomial_sigma;

fn common_at(polarization: Polarization) -> PulseCommon {
    let shape = ShapeFunction::gaussian(1e-3, 0.5e-9, 0.1e-9).unwrap();
    let profile = Arc::new(ShapeProfile::new(shape, 1e-9).unwrap());
    PulseCommon::new(1.55e-6, 0.0, polarization, profile, SimTime::ZERO).unwrap()
}

fn single_photon(polarization: Polarization) -> Pulse {
    Pulse::Fock(FockPulse::new(common_at(polarization), vec![SimTime::from_ps(500)]).unwrap())
}

fn count(p: &Pulse) -> usize {
    match p {
        Pulse::Fock(f) => f.photon_count(),
        Pulse::Coherent(_) => unreachable!(),
    }
}

fn within(observed: f64, expected: f64, sigma: f64) -> bool {
    (observed - expected).abs() <= 3.0 * sigma
}

#[test]
fn vacuum_fraction_at_low_mpn() {
    let mut rng = RngStream::derive(10, "oracle/vacuum");
    let n = 1_000_000;
    let zeros = (0..n).filter(|_| sample_photon_count(0.1, &mut rng).unwrap() == 0).count();
    let p = (-0.1f64).exp();
    assert!((p - 0.90484).abs() < 1e-5);
    assert!(within(zeros as f64 / n as f64, p, binomial_sigma(p, n as f64)));
}

#[test]
fn poisson_mean_at_mpn_four() {
    let mut rng = RngStream::derive(11, "oracle/mean");
    let n = 1_000_000;
    let sum: u64 = (0..n).map(|_| sample_photon_count(4.0, &mut rng).unwrap()).sum();
    assert!(within(sum as f64 / n as f64, 4.0, (4.0 / n as f64).sqrt()));
}

#[test]
fn symmetric_arrivals_center_on_the_window() {
    let mut rng = RngStream::derive(12, "oracle/center");
    let (duration, sigma, n) = (2e-9, 0.2e-9, 100_000);
    let shape = ShapeFunction::gaussian(1e-3, duration / 2.0, sigma).unwrap();
    let xs = sample_arrival_times(&shape, n, duration, &mut rng).unwrap();
    let mean = xs.iter().sum::<f64>() / n as f64;
    assert!(within(mean, duration / 2.0, sigma / (n as f64).sqrt()));
}

#[test]
fn realized_photon_count_mean() {
    let mut rng = RngStream::derive(13, "oracle/realize");
    let mut p = CoherentPulse::new(common_at(Polarization::horizontal()), 1.0).unwrap();
    p.set_mean_photon_number(5.0);
    let n = 100_000;
    let sum: usize = (0..n).map(|_| realize_fock(&p, &mut rng).photon_count()).sum();
    assert!(within(sum as f64 / n as f64, 5.0, (5.0 / n as f64).sqrt()));
}

#[test]
fn half_power_attenuator_on_photons() {
    let mut rng = RngStream::derive(14, "oracle/attenuate");
    let att = Attenuator::new(3.0103).unwrap();
    let arrivals: Vec<SimTime> = (0..100).map(|i| SimTime::from_ps(i * 5)).collect();
    let (mut kept, mut total) = (0usize, 0usize);
    for _ in 0..1000 {
        let f = Pulse::Fock(FockPulse::new(common_at(Polarization::horizontal()), arrivals.clone()).unwrap());
        total += 100;
        kept += count(&attenuate(&att, f, &mut rng));
    }
    assert!(within(kept as f64 / total as f64, 0.5, binomial_sigma(0.5, total as f64)));
}

#[test]
fn long_fiber_scales_coherent_mpn() {
    let mut rng = RngStream::derive(15, "oracle/fiber");
    let props = FiberProperties::new(25.0, 0.2).unwrap();
    let mut p = CoherentPulse::new(common_at(Polarization::horizontal()), 1.0).unwrap();
    p.set_mean_photon_number(1.0);
    let mut state = FiberState::default();
    let (out, _) = fiber_propagate(&props, &mut state, Pulse::Coherent(p), SimTime::ZERO, &mut rng);
    assert!((out.expected_photons() - 10f64.powf(-0.5)).abs() < 1e-12);
    assert!((out.expected_photons() - 0.31623).abs() < 1e-5);
}

#[test]
fn dark_count_rate_without_light() {
    let mut rng = RngStream::derive(16, "oracle/dark");
    let spd = Spd {
        efficiency: 0.0,
        dark_count_prob: 0.01,
        gate_width_s: 1e-9,
        dead_time_s: 0.0,
        jitter_sigma_s: 0.0,
        gate_period_s: 1e-6,
        gate_offset_s: Some(0.0),
        gate_lead_s: 0.0,
    };
    let mut state = SpdState::default();
    let n = 100_000u64;
    let clicks = (0..n)
        .filter(|&k| spd_gate(&spd, &mut state, SimTime::from_ps(k * 1_000_000), k, &[], &mut rng).is_some())
        .count();
    assert!(within(clicks as f64 / n as f64, 0.01, binomial_sigma(0.01, n as f64)));
}

#[test]
fn wrong_basis_photon_splits_evenly() {
    let mut rng = RngStream::derive(17, "oracle/pbs");
    let pbs = PolarizingBeamsplitter::default();
    let n = 100_000;
    let mut h = 0;
    for _ in 0..n {
        let (a, b) = polarizing_beamsplit(&pbs, single_photon(Polarization::linear(FRAC_PI_4)), &mut rng);
        assert_eq!(count(&a) + count(&b), 1);
        h += count(&a);
    }
    assert!(within(h as f64 / n as f64, 0.5, binomial_sigma(0.5, n as f64)));
}

#[test]
fn misalignment_error_follows_malus() {
    let mut rng = RngStream::derive(18, "oracle/malus");
    let pbs = PolarizingBeamsplitter::default();
    let tilt = 10f64.to_radians();
    let n = 100_000;
    let mut errors = 0;
    for i in 0..n {
        let bit = i % 2;
        let angle = bit as f64 * std::f64::consts::FRAC_PI_2 + tilt;
        let (h, v) = polarizing_beamsplit(&pbs, single_photon(Polarization::linear(angle)), &mut rng);
        let wrong = if bit == 0 { count(&v) } else { count(&h) };
        errors += wrong;
    }
    let p = tilt.sin().powi(2);
    assert!((p - 0.0302).abs() < 1e-4);
    assert!(within(errors as f64 / n as f64, p, binomial_sigma(p, n as f64)));
}

#[test]
fn double_clicks_resolve_to_fair_bits() {
    let mut rng = RngStream::derive(19, "oracle/double");
    let n = 10_000;
    let mut ones = 0;
    for _ in 0..n {
        let (o, bit) = resolve_detection(true, true, &mut rng);
        assert_eq!(o, Outcome::DoubleClick);
        ones += bit.unwrap() as usize;
    }
    assert!(within(ones as f64 / n as f64, 0.5, binomial_sigma(0.5, n as f64)));
}

#[test]
fn lossless_sifting_keeps_half() {
    let mut rng = RngStream::derive(20, "oracle/sift");
    let n = 100_000u64;
    let alice: Vec<AliceRecord> = (0..n)
        .map(|i| AliceRecord {
            pulse_id: i,
            bit: (rng.uniform() < 0.5) as u8,
            basis: Basis::random(&mut rng),
        })
        .collect();
    let bob: Vec<BobRecord> = alice
        .iter()
        .map(|a| BobRecord {
            pulse_id: a.pulse_id,
            basis: Basis::random(&mut rng),
            outcome: Outcome::Click(a.bit),
            bit: Some(a.bit),
        })
        .collect();
    let kept = sift(&alice, &bob).unwrap().len();
    assert!(within(kept as f64 / n as f64, 0.5, binomial_sigma(0.5, n as f64)));
}

// Residual after each update: drift accumulated since the last update plus
// the correction so far.
fn residuals(rate: f64, slew: f64, steps: usize) -> Vec<f64> {
    let dt = 0.2;
    let mut state = ControllerState::new(slew);
    let mut out = Vec::new();
    for k in 1..=steps {
        let drift = rate * dt * k as f64;
        let residual = drift + state.correction;
        out.push(residual);
        state = controller_update(state, residual, dt, 1.0);
    }
    out
}

#[test]
fn controller_tracks_slow_drift() {
    let r = residuals(0.02, 0.2, 200);
    assert!(r[50..].iter().all(|x| x.abs() < 0.01), "{:?}", &r[50..55]);
}

#[test]
fn controller_saturates_on_fast_drift() {
    let r = residuals(0.5, 0.2, 200);
    assert!(r.windows(2).all(|w| w[1] > w[0]));
    // 0.3 rad/s of uncorrected drift over 40 s.
    assert!(r[199] > 10.0);
}

#[test]
fn reference_estimate_recovers_ten_degrees() {
    let mut rng = RngStream::derive(21, "oracle/estimate");
    let eps = 10f64.to_radians();
    let mut counts = ReferenceCounts::default();
    for _ in 0..10_000 {
        counts.record(false, rng.uniform() < eps.sin().powi(2));
        counts.record(true, rng.uniform() < (FRAC_PI_4 + eps).sin().powi(2));
    }
    let est = estimate_polarization_error(&counts).unwrap();
    assert!((est - eps).abs() < 1f64.to_radians(), "{}", est.to_degrees());
}

#[test]
fn intensity_classes_follow_config() {
    let mut rng = RngStream::derive(22, "oracle/classes");
    let cfg = DecoyConfig {
        signal_mpn: 0.5,
        decoy_mpn: 0.1,
        p_signal: 0.7,
        p_decoy: 0.2,
        p_vacuum: 0.1,
        min_slots_per_class: 0,
        attack_threshold: 5.0,
    };
    let n = 100_000;
    let mut seen = [0usize; 3];
    for _ in 0..n {
        let (class, mpn) = decoy_choose(&cfg, &mut rng);
        assert_eq!(mpn, cfg.mpn(class));
        seen[class.index()] += 1;
    }
    for (c, p) in IntensityClass::ALL.iter().zip([0.7, 0.2, 0.1]) {
        let f = seen[c.index()] as f64 / n as f64;
        assert!(within(f, p, binomial_sigma(p, n as f64)), "{c:?} {f}");
    }
}

#[test]
fn vacuum_gain_is_dark_counts_with_or_without_eve() {
    for mode in [EveMode::Off, EveMode::Pns] {
        let mut cfg = builtin("decoy_pns").unwrap();
        cfg.protocol.as_mut().unwrap().eve.mode = mode;
        let s = simulate(&cfg, cfg.run.seed, None).unwrap().summary;
        let decoy = s.decoy.unwrap();
        let vac = decoy.classes.iter().find(|c| c.class == IntensityClass::Vacuum).unwrap();
        let y0 = 1.0 - (1.0 - 1e-5f64).powi(2);
        assert!((decoy.y0 - y0).abs() < 1e-15);
        assert!(
            within(vac.observed_gain, y0, binomial_sigma(y0, vac.slots as f64)),
            "{mode:?}: {} vs {y0}",
            vac.observed_gain
        );
    }
}
