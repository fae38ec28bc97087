//! Quaternion algebra in `wxyz` order.
//!
//! Products follow the Hamilton convention, so `q ⊙ (0, x) ⊙ q*` rotates `x`
//! by the matrix returned from [`Quaternion::to_rotation`].

use std::ops::{Mul, Neg};

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A (not necessarily unit) quaternion `(w, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quaternion {
    pub w: f64,
    pub v: Vector3<f64>,
}

impl From<[f64; 4]> for Quaternion {
    fn from(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

impl From<Quaternion> for [f64; 4] {
    fn from(q: Quaternion) -> Self {
        [q.w, q.v.x, q.v.y, q.v.z]
    }
}

impl Quaternion {
    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self {
            w,
            v: Vector3::new(x, y, z),
        }
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 0.0)
    }

    /// Pure quaternion `(0, x)`.
    pub fn pure(x: &Vector3<f64>) -> Self {
        Self { w: 0.0, v: *x }
    }

    pub fn from_vector(q: &Vector4<f64>) -> Self {
        Self::new(q[0], q[1], q[2], q[3])
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.w, self.v.x, self.v.y, self.v.z)
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        let (s, c) = (0.5 * angle).sin_cos();
        Self { w: c, v: axis * (s / n) }
    }

    pub fn from_rotation(r: &Matrix3<f64>) -> Self {
        let uq = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
        Self::new(uq.w, uq.i, uq.j, uq.k).canonical()
    }

    pub fn conjugate(&self) -> Self {
        Self { w: self.w, v: -self.v }
    }

    pub fn norm_squared(&self) -> f64 {
        self.w * self.w + self.v.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidInput(
                "cannot normalize a zero or non-finite quaternion".into(),
            ));
        }
        Ok(Self {
            w: self.w / n,
            v: self.v / n,
        })
    }

    /// Sign convention that removes the `q` / `-q` ambiguity: `w >= 0`, and
    /// when `w == 0` the first nonzero vector component is positive.
    pub fn canonical(&self) -> Self {
        let first = [self.w, self.v.x, self.v.y, self.v.z]
            .into_iter()
            .find(|c| *c != 0.0)
            .unwrap_or(0.0);
        if first < 0.0 {
            -*self
        } else {
            *self
        }
    }

    /// Rotation matrix `R(q)`. Non-unit inputs are normalized first.
    pub fn to_rotation(&self) -> Result<Matrix3<f64>> {
        let q = self.normalize()?;
        let (w, x, y, z) = (q.w, q.v.x, q.v.y, q.v.z);
        Ok(Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ))
    }

    /// Angle in radians of the rotation taking `self` to `other` (both unit).
    pub fn angle_to(&self, other: &Quaternion) -> f64 {
        let d = self.to_vector().dot(&other.to_vector()).abs().min(1.0);
        2.0 * d.acos()
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, rhs: Quaternion) -> Quaternion {
        Quaternion {
            w: self.w * rhs.w - self.v.dot(&rhs.v),
            v: rhs.v * self.w + self.v * rhs.w + self.v.cross(&rhs.v),
        }
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;

    fn neg(self) -> Quaternion {
        Quaternion {
            w: -self.w,
            v: -self.v,
        }
    }
}

/// Free-function form of the product, `q1 ⊙ q2`.
pub fn quat_multiply(q1: &Quaternion, q2: &Quaternion) -> Quaternion {
    *q1 * *q2
}

/// Angle in radians between two rotation matrices.
pub fn rotation_angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let c = ((a.transpose() * b).trace() - 1.0) * 0.5;
    c.clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sandwich(q: &Quaternion, x: &Vector3<f64>) -> Vector3<f64> {
        (*q * Quaternion::pure(x) * q.conjugate()).v
    }

    #[test]
    fn identity_is_neutral() {
        let q = Quaternion::new(0.3, -0.1, 0.7, 0.2);
        assert_eq!(Quaternion::identity() * q, q);
        assert_eq!(q * Quaternion::identity(), q);
    }

    #[test]
    fn i_times_j_is_k() {
        let i = Quaternion::new(0.0, 1.0, 0.0, 0.0);
        let j = Quaternion::new(0.0, 0.0, 1.0, 0.0);
        assert_eq!(i * j, Quaternion::new(0.0, 0.0, 0.0, 1.0));
        assert_eq!(j * i, Quaternion::new(0.0, 0.0, 0.0, -1.0));
    }

    #[test]
    fn conjugate_product_is_norm() {
        let q = Quaternion::new(0.3, -0.1, 0.7, 0.2);
        let p = q * q.conjugate();
        assert!((p.w - q.norm_squared()).abs() < 1e-15);
        assert!(p.v.norm() < 1e-15);
    }

    #[test]
    fn identity_rotation() {
        let r = Quaternion::identity().to_rotation().unwrap();
        assert_eq!(r, Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let h = std::f64::consts::FRAC_PI_4;
        let q = Quaternion::new(h.cos(), 0.0, 0.0, h.sin());
        let x = Vector3::x();
        let expected = sandwich(&q, &x);
        assert!((expected - Vector3::y()).norm() < 1e-15);
        let r = q.to_rotation().unwrap();
        assert!((r * x - expected).norm() < 1e-15);
    }

    #[test]
    fn zero_quaternion_rejected() {
        assert!(matches!(
            Quaternion::new(0.0, 0.0, 0.0, 0.0).to_rotation(),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn canonical_sign() {
        assert_eq!(Quaternion::new(-0.5, 0.5, 0.5, 0.5).canonical(), Quaternion::new(0.5, -0.5, -0.5, -0.5));
        assert_eq!(Quaternion::new(0.0, -1.0, 0.0, 0.0).canonical(), Quaternion::new(0.0, 1.0, 0.0, 0.0));
        assert_eq!(Quaternion::new(0.0, 0.0, 0.0, -1.0).canonical(), Quaternion::new(0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn from_rotation_round_trip() {
        let q = Quaternion::new(0.4, -0.3, 0.8, 0.1).normalize().unwrap();
        let back = Quaternion::from_rotation(&q.to_rotation().unwrap());
        assert!(back.angle_to(&q) < 1e-12);
    }

    #[test]
    fn serde_as_array() {
        let q = Quaternion::new(1.0, 0.0, -0.5, 0.25);
        let s = serde_json::to_string(&q).unwrap();
        assert_eq!(s, "[1.0,0.0,-0.5,0.25]");
        let back: Quaternion = serde_json::from_str(&s).unwrap();
        assert_eq!(back, q);
    }
}
