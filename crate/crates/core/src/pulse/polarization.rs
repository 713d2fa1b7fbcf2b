use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::DomainError;

const NORM_TOLERANCE: f64 = 1e-9;

/// A fully polarized state as a normalized Jones vector `(e_x, e_y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polarization {
    ex: Complex64,
    ey: Complex64,
}

/// Rotation axis on the Poincaré sphere, components `(s1, s2, s3)`:
/// `s1` horizontal/vertical, `s2` ±45°, `s3` circular.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct StokesAxis([f64; 3]);

impl TryFrom<[f64; 3]> for StokesAxis {
    type Error = DomainError;

    fn try_from(v: [f64; 3]) -> Result<Self, DomainError> {
        StokesAxis::new(v)
    }
}

impl From<StokesAxis> for [f64; 3] {
    fn from(a: StokesAxis) -> Self {
        a.0
    }
}

impl StokesAxis {
    /// The circular axis; rotations about it turn linear states in place.
    pub const CIRCULAR: StokesAxis = StokesAxis([0.0, 0.0, 1.0]);

    pub fn new(v: [f64; 3]) -> Result<Self, DomainError> {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !n.is_finite() || n < 1e-12 {
            return Err(DomainError::Invalid(format!("drift_axis {v:?} has no direction")));
        }
        Ok(StokesAxis([v[0] / n, v[1] / n, v[2] / n]))
    }

    /// An axis drawn uniformly on the sphere from two uniforms in `[0, 1)`.
    pub fn from_uniforms(u: f64, v: f64) -> Self {
        let z = 2.0 * u - 1.0;
        let r = (1.0 - z * z).max(0.0).sqrt();
        let phi = 2.0 * std::f64::consts::PI * v;
        StokesAxis([r * phi.cos(), r * phi.sin(), z])
    }

    pub fn components(&self) -> [f64; 3] {
        self.0
    }
}

impl Default for StokesAxis {
    fn default() -> Self {
        StokesAxis::CIRCULAR
    }
}

impl Polarization {
    pub fn new(ex: Complex64, ey: Complex64) -> Result<Self, DomainError> {
        let p = Polarization { ex, ey };
        if (p.norm_sqr() - 1.0).abs() > NORM_TOLERANCE {
            return Err(DomainError::Invalid(format!(
                "Jones vector norm² is {}, expected 1",
                p.norm_sqr()
            )));
        }
        Ok(p)
    }

    /// Linear polarization at `angle` radians from horizontal.
    pub fn linear(angle: f64) -> Self {
        Polarization {
            ex: Complex64::new(angle.cos(), 0.0),
            ey: Complex64::new(angle.sin(), 0.0),
        }
    }

    pub fn horizontal() -> Self {
        Polarization {
            ex: Complex64::new(1.0, 0.0),
            ey: Complex64::new(0.0, 0.0),
        }
    }

    pub fn vertical() -> Self {
        Polarization {
            ex: Complex64::new(0.0, 0.0),
            ey: Complex64::new(1.0, 0.0),
        }
    }

    pub fn ex(&self) -> Complex64 {
        self.ex
    }

    pub fn ey(&self) -> Complex64 {
        self.ey
    }

    pub fn norm_sqr(&self) -> f64 {
        self.ex.norm_sqr() + self.ey.norm_sqr()
    }

    /// Power fractions on the horizontal and vertical axes.
    pub fn power_fractions(&self) -> (f64, f64) {
        (self.ex.norm_sqr(), self.ey.norm_sqr())
    }

    /// Real 2×2 rotation of the field components by `theta`.
    pub fn rotate(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Polarization {
            ex: self.ex * c - self.ey * s,
            ey: self.ex * s + self.ey * c,
        }
    }

    /// Unitary `cos θ·I − i sin θ·(a·σ)` about a Poincaré-sphere axis.
    ///
    /// For the circular axis this is exactly [`Polarization::rotate`].
    pub fn rotate_about(&self, axis: StokesAxis, theta: f64) -> Self {
        let [s1, s2, s3] = axis.0;
        let (sn, cs) = theta.sin_cos();
        let i = Complex64::i();
        // a·σ with s1→σz, s2→σx, s3→σy in the (x, y) basis.
        let m00 = Complex64::new(s1, 0.0);
        let m01 = Complex64::new(s2, -s3);
        let m10 = Complex64::new(s2, s3);
        let m11 = Complex64::new(-s1, 0.0);
        let u00 = cs - i * sn * m00;
        let u01 = -i * sn * m01;
        let u10 = -i * sn * m10;
        let u11 = cs - i * sn * m11;
        Polarization {
            ex: u00 * self.ex + u01 * self.ey,
            ey: u10 * self.ex + u11 * self.ey,
        }
    }

    /// `|⟨self|other⟩|²`.
    pub fn overlap(&self, other: &Polarization) -> f64 {
        (self.ex.conj() * other.ex + self.ey.conj() * other.ey).norm_sqr()
    }
}

/// Rotates a Jones vector by `theta` radians (norm preserving).
pub fn rotate_polarization(p: &Polarization, theta: f64) -> Polarization {
    p.rotate(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

    fn close(a: &Polarization, b: &Polarization, tol: f64) -> bool {
        (a.ex - b.ex).norm() < tol && (a.ey - b.ey).norm() < tol
    }

    #[test]
    fn zero_rotation_is_identity() {
        let p = Polarization::linear(0.3);
        assert_eq!(rotate_polarization(&p, 0.0), p);
    }

    #[test]
    fn quarter_turn_maps_h_to_v() {
        let v = rotate_polarization(&Polarization::horizontal(), FRAC_PI_2);
        assert!(close(&v, &Polarization::vertical(), 1e-15));
    }

    #[test]
    fn linear_45_components() {
        let p = Polarization::linear(FRAC_PI_4);
        assert!((p.ex().re - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((p.ey().re - FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn circular_axis_matches_real_rotation() {
        let p = Polarization::linear(0.2);
        let a = p.rotate(0.7);
        let b = p.rotate_about(StokesAxis::CIRCULAR, 0.7);
        assert!(close(&a, &b, 1e-14));
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(Polarization::new(Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)).is_err());
        assert!(StokesAxis::new([0.0, 0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn rotations_preserve_norm_and_invert(angle in -10.0f64..10.0, theta in -10.0f64..10.0,
                                             a in -1.0f64..1.0, b in -1.0f64..1.0, c in 0.1f64..1.0) {
            let p = Polarization::linear(angle).rotate_about(StokesAxis::new([a, b, c]).unwrap(), 0.4);
            let q = rotate_polarization(&p, theta);
            prop_assert!((q.norm_sqr() - 1.0).abs() < 1e-12);
            prop_assert!(close(&rotate_polarization(&q, -theta), &p, 1e-12));
            let axis = StokesAxis::new([a, b, c]).unwrap();
            let r = p.rotate_about(axis, theta);
            prop_assert!((r.norm_sqr() - 1.0).abs() < 1e-12);
            prop_assert!(close(&r.rotate_about(axis, -theta), &p, 1e-12));
        }
    }
}
