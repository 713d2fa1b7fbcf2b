//! Browser bindings for three small demos: pulse shape vs sampled photon
//! arrivals, photon-number statistics vs Poisson, and windowed QBER of a
//! drifting fiber under slew-limited correction.

use qkdsim_core::channels::{drift_advance, FiberProperties, FiberState, Gust};
use qkdsim_core::kernel::{RngStream, SimTime};
use qkdsim_core::protocols::{controller_update, estimate_polarization_error, ControllerState, ReferenceCounts};
use qkdsim_core::pulse::{sample_arrival_times, sample_photon_count, GaussianTerm, Polarization, ShapeFunction, StokesAxis};
use wasm_bindgen::prelude::*;

fn err(e: impl ToString) -> String {
    e.to_string()
}

/// Two-term Gaussian pulse on a `duration_ps` window. Returns `2 * bins`
/// values: the normalized shape density per bin, then the fraction of
/// `photons` sampled arrivals per bin.
#[wasm_bindgen]
pub fn arrival_histogram(
    sigma_ps: f64,
    second_peak: f64,
    duration_ps: f64,
    photons: u32,
    bins: u32,
    seed: u64,
) -> Result<Vec<f64>, String> {
    if bins == 0 {
        return Err("bins must be > 0".into());
    }
    let d = duration_ps * 1e-12;
    let s = sigma_ps * 1e-12;
    let mut terms = vec![GaussianTerm::new(1e-3, 0.35 * d, s).map_err(err)?];
    if second_peak > 0.0 {
        terms.push(GaussianTerm::new(1e-3 * second_peak, 0.65 * d, s).map_err(err)?);
    }
    let shape = ShapeFunction::multi_gaussian(terms).map_err(err)?;
    let mut rng = RngStream::derive(seed, "demo/arrivals");
    let xs = sample_arrival_times(&shape, photons as usize, d, &mut rng).map_err(err)?;

    let n = bins as usize;
    let width = d / n as f64;
    let total = shape.integral(0.0, d);
    let mut out: Vec<f64> = (0..n)
        .map(|i| shape.integral(i as f64 * width, (i + 1) as f64 * width) / total)
        .collect();
    let mut hist = vec![0.0; n];
    for x in &xs {
        hist[((x / width) as usize).min(n - 1)] += 1.0;
    }
    out.extend(hist.iter().map(|h| h / xs.len().max(1) as f64));
    Ok(out)
}

/// Photon counts of `draws` coherent pulses. Returns `(observed, poisson)`
/// frequency pairs for `k = 0..=kmax`, flattened.
#[wasm_bindgen]
pub fn photon_statistics(mpn: f64, draws: u32, seed: u64) -> Result<Vec<f64>, String> {
    let mut rng = RngStream::derive(seed, "demo/photons");
    let counts = (0..draws)
        .map(|_| sample_photon_count(mpn, &mut rng))
        .collect::<Result<Vec<u64>, _>>()
        .map_err(err)?;
    let kmax = counts.iter().copied().max().unwrap_or(0).max((mpn + 4.0 * mpn.sqrt()).ceil() as u64) as usize;
    let mut seen = vec![0.0; kmax + 1];
    for &k in &counts {
        seen[k as usize] += 1.0;
    }
    let mut pmf = (-mpn).exp();
    let mut out = Vec::with_capacity(2 * (kmax + 1));
    for (k, s) in seen.iter().enumerate() {
        if k > 0 {
            pmf *= mpn / k as f64;
        }
        out.push(s / draws.max(1) as f64);
        out.push(pmf);
    }
    Ok(out)
}

/// Expected QBER per one-second window for a fiber whose polarization
/// wanders about the circular axis, with a gust multiplying the drift rate
/// between `gust_start_s` and `gust_end_s`. Bob's controller estimates the
/// error from `refs_per_update` reference photons of each kind and corrects
/// at most `slew_rad_per_s`. Returns one value per window.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn drift_qber(
    drift_sigma: f64,
    gust_multiplier: f64,
    gust_start_s: f64,
    gust_end_s: f64,
    slew_rad_per_s: f64,
    seconds: u32,
    refs_per_update: u32,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let mut fiber = FiberProperties::new(10.0, 0.2).map_err(err)?;
    fiber.drift_sigma_rad_per_sqrt_s = drift_sigma;
    let axis = StokesAxis::new([0.0, 0.0, 1.0]).map_err(err)?;
    fiber.drift_axis = Some(axis);
    if gust_multiplier != 1.0 && gust_end_s > gust_start_s {
        fiber.gust_schedule.push(Gust {
            start_s: gust_start_s,
            end_s: gust_end_s,
            sigma_multiplier: gust_multiplier,
        });
    }
    fiber.validate().map_err(err)?;

    let step = 0.01;
    let update = 0.2;
    let per_update = (update / step) as u32;
    let per_window = (1.0 / step) as u32;
    let mut rng = RngStream::derive(seed, "demo/drift");
    let mut state = FiberState::default();
    let mut ctl = ControllerState::new(slew_rad_per_s);
    let mut counts = ReferenceCounts::default();
    let mut windows = Vec::with_capacity(seconds as usize);
    let mut acc = 0.0;

    // V-port fraction after drift and correction for a linear input.
    let wrong = |input: f64, theta: f64, correction: f64| {
        let p = Polarization::linear(input).rotate_about(axis, theta).rotate_about(axis, correction);
        p.power_fractions().1
    };

    for i in 1..=seconds * per_window {
        let now = SimTime::from_secs_f64(i as f64 * step);
        state = drift_advance(&fiber, state, now, &mut rng);
        let q = wrong(0.0, state.theta, ctl.correction);
        acc += q;
        let refs = refs_per_update / per_update;
        let diag = wrong(std::f64::consts::FRAC_PI_4, state.theta, ctl.correction);
        for _ in 0..refs {
            counts.record(false, rng.bernoulli(q));
            counts.record(true, rng.bernoulli(diag));
        }
        if i % per_update == 0 {
            if let Some(e) = estimate_polarization_error(&counts) {
                ctl = controller_update(ctl, e, update, 1.0);
            }
            counts = ReferenceCounts::default();
        }
        if i % per_window == 0 {
            windows.push(acc / per_window as f64);
            acc = 0.0;
        }
    }
    Ok(windows)
}
