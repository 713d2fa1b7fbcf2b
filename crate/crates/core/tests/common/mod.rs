//! Reference formulas written independently of the crate, used as test
//! oracles.

#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};
use statrs::function::erf::erf;

/// Chi-square goodness of fit of `counts` against `Poisson(mean)`. Bins are
/// merged from the tail until every expected count is at least 5. Returns
/// `(statistic, degrees of freedom, p-value)`.
pub fn poisson_chi_square(samples: &[u64], mean: f64) -> (f64, usize, f64) {
    let n = samples.len() as f64;
    let max = *samples.iter().max().unwrap_or(&0) as usize;
    let mut observed = vec![0f64; max + 1];
    for &k in samples {
        observed[k as usize] += 1.0;
    }
    let pois = Poisson::new(mean).unwrap();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc_o = 0.0;
    let mut acc_e = 0.0;
    let mut tail = 1.0;
    for (k, &o) in observed.iter().enumerate() {
        let p = pois.pmf(k as u64);
        tail -= p;
        acc_o += o;
        acc_e += p * n;
        if acc_e >= 5.0 && tail * n >= 5.0 {
            bins.push((acc_o, acc_e));
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    // Everything left, including the unobserved tail, goes in one last bin.
    acc_e += tail.max(0.0) * n;
    if acc_e >= 5.0 || bins.is_empty() {
        bins.push((acc_o, acc_e));
    } else {
        let last = bins.last_mut().unwrap();
        last.0 += acc_o;
        last.1 += acc_e;
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len() - 1;
    let p = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat);
    (stat, dof, p)
}

/// Two-sided one-sample KS statistic of sorted samples against `cdf`.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1 % critical value of the KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// `(peak, center, sigma)` mixture CDF on `[0, duration]`, renormalized to
/// the window.
pub fn gaussian_mix_cdf(terms: &[(f64, f64, f64)], duration: f64) -> impl Fn(f64) -> f64 + '_ {
    let mass = move |t: f64| -> f64 {
        terms
            .iter()
            .map(|&(p, c, s)| {
                let z = |x: f64| (x - c) / (s * std::f64::consts::SQRT_2);
                p * s * (std::f64::consts::PI / 2.0).sqrt() * (erf(z(t)) - erf(z(0.0)))
            })
            .sum()
    };
    let total = mass(duration);
    move |t| mass(t.clamp(0.0, duration)) / total
}

/// Least-squares line `y = a + b x`; returns `(a, b, r2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let b = sxy / sxx;
    (my - b * mx, b, sxy * sxy / (sxx * syy))
}

/// Binomial standard error of a proportion.
pub fn binomial_sigma(p: f64, n: f64) -> f64 {
    (p * (1.0 - p) / n).sqrt()
}

/// Error probability of sifted bits under intercept-resend, by enumerating
/// Alice's and Eve's bases and bits with Malus's law. Bob measures in
/// Alice's basis, which is all that survives sifting.
pub fn intercept_resend_qber() -> f64 {
    let angle = |basis: usize, bit: usize| basis as f64 * std::f64::consts::FRAC_PI_4 + bit as f64 * std::f64::consts::FRAC_PI_2;
    let mut err = 0.0;
    let mut total = 0.0;
    for a_basis in 0..2 {
        for a_bit in 0..2 {
            for e_basis in 0..2 {
                for e_bit in 0..2 {
                    let p_eve = (angle(a_basis, a_bit) - angle(e_basis, e_bit)).cos().powi(2);
                    // Bob measures Eve's resent state in Alice's basis.
                    let p_wrong = (angle(e_basis, e_bit) - angle(a_basis, 1 - a_bit)).cos().powi(2);
                    let w = 0.25 * 0.5 * p_eve;
                    err += w * p_wrong;
                    total += w;
                }
            }
        }
    }
    err / total
}
