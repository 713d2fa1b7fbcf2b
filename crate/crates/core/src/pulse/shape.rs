//! Pulse shape functions, energy quadrature and inverse-CDF arrival sampling.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{non_negative, positive, DomainError};
use crate::kernel::RngStream;

/// Relative tolerance of the energy quadrature.
pub const QUADRATURE_REL_TOL: f64 = 1e-9;

/// Grid points of the tabulated cumulative integral.
pub const CDF_GRID_POINTS: usize = 4096;

/// One Gaussian power term: `peak · exp(−(t − center)² / 2σ²)`, in watts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianTerm {
    pub peak_w: f64,
    pub center_s: f64,
    pub sigma_s: f64,
}

impl GaussianTerm {
    pub fn new(peak_w: f64, center_s: f64, sigma_s: f64) -> Result<Self, DomainError> {
        let g = GaussianTerm {
            peak_w,
            center_s,
            sigma_s,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<(), DomainError> {
        non_negative("peak_w", self.peak_w)?;
        positive("sigma_s", self.sigma_s)?;
        if !self.center_s.is_finite() {
            return Err(DomainError::OutOfRange {
                field: "center_s",
                expected: "finite",
                value: self.center_s,
            });
        }
        Ok(())
    }

    #[inline]
    fn eval(&self, t: f64) -> f64 {
        let z = (t - self.center_s) / self.sigma_s;
        self.peak_w * (-0.5 * z * z).exp()
    }

    /// Closed-form `∫_a^b` of this term.
    fn integral(&self, a: f64, b: f64) -> f64 {
        let k = self.sigma_s * SQRT_2;
        let cdf = |t: f64| libm::erf((t - self.center_s) / k);
        self.peak_w * self.sigma_s * (PI / 2.0).sqrt() * (cdf(b) - cdf(a))
    }
}

/// Instantaneous optical power envelope of a pulse, in watts, with time
/// measured from the start of the pulse window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ShapeSpec", into = "ShapeSpec")]
pub enum ShapeFunction {
    Gaussian(GaussianTerm),
    MultiGaussian(Vec<GaussianTerm>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ShapeKind {
    Gaussian,
    MultiGaussian,
}

/// Config form: `{"type": "gaussian" | "multi_gaussian", "terms": [...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShapeSpec {
    #[serde(rename = "type")]
    kind: ShapeKind,
    terms: Vec<GaussianTerm>,
}

impl TryFrom<ShapeSpec> for ShapeFunction {
    type Error = DomainError;

    fn try_from(spec: ShapeSpec) -> Result<Self, DomainError> {
        let shape = match spec.kind {
            ShapeKind::Gaussian => match spec.terms.as_slice() {
                [g] => ShapeFunction::Gaussian(*g),
                _ => {
                    return Err(DomainError::Invalid(format!(
                        "gaussian shape needs exactly one term, got {}",
                        spec.terms.len()
                    )))
                }
            },
            ShapeKind::MultiGaussian => ShapeFunction::MultiGaussian(spec.terms),
        };
        shape.validate()?;
        Ok(shape)
    }
}

impl From<ShapeFunction> for ShapeSpec {
    fn from(shape: ShapeFunction) -> Self {
        match shape {
            ShapeFunction::Gaussian(g) => ShapeSpec {
                kind: ShapeKind::Gaussian,
                terms: vec![g],
            },
            ShapeFunction::MultiGaussian(terms) => ShapeSpec {
                kind: ShapeKind::MultiGaussian,
                terms,
            },
        }
    }
}

impl ShapeFunction {
    pub fn gaussian(peak_w: f64, center_s: f64, sigma_s: f64) -> Result<Self, DomainError> {
        Ok(ShapeFunction::Gaussian(GaussianTerm::new(peak_w, center_s, sigma_s)?))
    }

    pub fn multi_gaussian(terms: Vec<GaussianTerm>) -> Result<Self, DomainError> {
        let s = ShapeFunction::MultiGaussian(terms);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        match self {
            ShapeFunction::Gaussian(g) => g.validate(),
            ShapeFunction::MultiGaussian(terms) => {
                if terms.is_empty() {
                    return Err(DomainError::Invalid("multi_gaussian shape needs at least one term".into()));
                }
                terms.iter().try_for_each(GaussianTerm::validate)
            }
        }
    }

    pub fn terms(&self) -> &[GaussianTerm] {
        match self {
            ShapeFunction::Gaussian(g) => std::slice::from_ref(g),
            ShapeFunction::MultiGaussian(terms) => terms,
        }
    }

    /// Power at time `t` (W). Non-negative everywhere.
    pub fn evaluate(&self, t: f64) -> f64 {
        self.terms().iter().map(|g| g.eval(t)).sum()
    }

    /// Closed-form integral over `[a, b]` (J).
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.terms().iter().map(|g| g.integral(a, b)).sum()
    }

    fn min_sigma(&self) -> f64 {
        self.terms().iter().map(|g| g.sigma_s).fold(f64::INFINITY, f64::min)
    }
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

/// Adaptive composite Simpson quadrature of `f` over `[a, b]`.
///
/// The interval is first cut into `panels` equal pieces (so narrow features
/// are not stepped over), then each piece is refined until the Richardson
/// error estimate meets its share of `rel_tol · |∫f|`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, rel_tol: f64) -> f64 {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut pieces = Vec::with_capacity(panels);
    let mut coarse = 0.0;
    let mut fa = f(a);
    for i in 0..panels {
        let x0 = a + h * i as f64;
        let x1 = if i + 1 == panels { b } else { x0 + h };
        let fm = f(0.5 * (x0 + x1));
        let fb = f(x1);
        let s = simpson(fa, fm, fb, x1 - x0);
        coarse += s;
        pieces.push((x0, x1, fa, fm, fb, s));
        fa = fb;
    }
    let tol = rel_tol * coarse.abs() / panels as f64;
    pieces
        .into_iter()
        .map(|(x0, x1, fa, fm, fb, s)| adaptive_simpson(&f, x0, x1, fa, fm, fb, s, tol, 40))
        .sum()
}

/// Energy of a pulse: `amplitude_scale · ∫₀^duration shape(t) dt`, by
/// numerical quadrature at relative tolerance [`QUADRATURE_REL_TOL`].
pub fn pulse_energy(shape: &ShapeFunction, amplitude_scale: f64, duration_s: f64) -> Result<f64, DomainError> {
    positive("duration_s", duration_s)?;
    non_negative("amplitude_scale", amplitude_scale)?;
    shape.validate()?;
    if amplitude_scale == 0.0 {
        return Ok(0.0);
    }
    // At least ~4 panels per narrowest sigma.
    let panels = ((duration_s / (0.25 * shape.min_sigma())).ceil() as usize).clamp(64, 1 << 20);
    let e = integrate(|t| shape.evaluate(t), 0.0, duration_s, panels, QUADRATURE_REL_TOL);
    Ok(amplitude_scale * e.max(0.0))
}

/// Inverse of the normalized cumulative integral of a shape over its window,
/// tabulated on [`CDF_GRID_POINTS`] uniform points with linear interpolation.
#[derive(Clone, Debug)]
pub struct InverseCdf {
    duration_s: f64,
    step_s: f64,
    cumulative: Vec<f64>,
}

impl InverseCdf {
    pub fn new(shape: &ShapeFunction, duration_s: f64) -> Result<Self, DomainError> {
        positive("duration_s", duration_s)?;
        shape.validate()?;
        let cells = CDF_GRID_POINTS - 1;
        let step = duration_s / cells as f64;
        let mut cumulative = Vec::with_capacity(CDF_GRID_POINTS);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for i in 0..cells {
            let a = step * i as f64;
            let b = if i + 1 == cells { duration_s } else { a + step };
            acc += shape.integral(a, b).max(0.0);
            cumulative.push(acc);
        }
        if acc.is_nan() || acc <= 0.0 {
            return Err(DomainError::ZeroIntegral { duration_s });
        }
        Ok(InverseCdf {
            duration_s,
            step_s: step,
            cumulative,
        })
    }

    /// Maps `u ∈ [0, 1)` to a time offset in `[0, duration]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let total = *self.cumulative.last().expect("non-empty grid");
        let target = u.clamp(0.0, 1.0) * total;
        let upper = self.cumulative.partition_point(|&c| c <= target);
        if upper >= self.cumulative.len() {
            return self.duration_s;
        }
        let cell = upper.saturating_sub(1);
        let (c0, c1) = (self.cumulative[cell], self.cumulative[upper]);
        let frac = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
        (self.step_s * (cell as f64 + frac)).min(self.duration_s)
    }

    /// `n` sorted draws by inverse-transform sampling.
    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Vec<f64> {
        let mut out: Vec<f64> = (0..n).map(|_| self.quantile(rng.uniform())).collect();
        out.sort_by(f64::total_cmp);
        out
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }
}

/// Draws `n` photon arrival offsets (seconds from the window start, sorted)
/// with density proportional to `shape` on `[0, duration]`.
pub fn sample_arrival_times(
    shape: &ShapeFunction,
    n: usize,
    duration_s: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>, DomainError> {
    if n == 0 {
        positive("duration_s", duration_s)?;
        return Ok(Vec::new());
    }
    Ok(InverseCdf::new(shape, duration_s)?.sample(n, rng))
}

/// A validated shape bound to its window, with the per-unit-scale energy and
/// the inverse CDF computed once and shared by every pulse that uses it.
#[derive(Debug)]
pub struct ShapeProfile {
    shape: ShapeFunction,
    duration_s: f64,
    unit_energy_j: f64,
    cdf: OnceLock<Option<InverseCdf>>,
}

impl ShapeProfile {
    pub fn new(shape: ShapeFunction, duration_s: f64) -> Result<Self, DomainError> {
        let unit_energy_j = pulse_energy(&shape, 1.0, duration_s)?;
        Ok(ShapeProfile {
            shape,
            duration_s,
            unit_energy_j,
            cdf: OnceLock::new(),
        })
    }

    pub fn shape(&self) -> &ShapeFunction {
        &self.shape
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    /// Energy at `amplitude_scale = 1`.
    pub fn unit_energy_j(&self) -> f64 {
        self.unit_energy_j
    }

    pub fn inverse_cdf(&self) -> Option<&InverseCdf> {
        self.cdf
            .get_or_init(|| InverseCdf::new(&self.shape, self.duration_s).ok())
            .as_ref()
    }
}
