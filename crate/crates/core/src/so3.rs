//! Rotation group arithmetic.
//!
//! Rotations are stored as unit quaternions. The tangent space is the usual
//! rotation-vector (axis times angle) parameterisation, and `exp`/`log` are
//! the Rodrigues maps between the two.

use std::ops::Mul;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

/// Below this angle the exponential and logarithm switch to Taylor forms.
const SMALL_ANGLE: f64 = 1e-9;

/// An element of SO(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>) -> Self {
        Self(q)
    }

    /// Projects an arbitrary (approximately orthonormal) matrix onto SO(3).
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let r = Rotation3::from_matrix_eps(m, 1e-12, 100, Rotation3::identity());
        Self(UnitQuaternion::from_rotation_matrix(&r))
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::exp(&Vector3::new(angle, 0.0, 0.0))
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::exp(&Vector3::new(0.0, angle, 0.0))
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::exp(&Vector3::new(0.0, 0.0, angle))
    }

    /// Exponential map from a rotation vector (rad).
    pub fn exp(omega: &Vector3<f64>) -> Self {
        let theta = omega.norm();
        let (w, s) = if theta < SMALL_ANGLE {
            // sin(θ/2)/θ ≈ 1/2 − θ²/48
            (1.0 - theta * theta / 8.0, 0.5 - theta * theta / 48.0)
        } else {
            let half = 0.5 * theta;
            (half.cos(), half.sin() / theta)
        };
        let q = Quaternion::new(w, s * omega.x, s * omega.y, s * omega.z);
        Self(UnitQuaternion::new_normalize(q))
    }

    /// Logarithm map to a rotation vector with angle in `[0, π]`.
    ///
    /// At exactly π the two candidate vectors `±π·a` describe the same
    /// rotation; the one whose first nonzero component is positive is
    /// returned.
    pub fn log(&self) -> Vector3<f64> {
        let q = self.0.quaternion();
        let (mut w, mut v) = (q.w, q.imag());
        if w < 0.0 {
            w = -w;
            v = -v;
        }
        let vn = v.norm();
        if vn < SMALL_ANGLE {
            // θ ≈ 2‖v‖/w
            return v * (2.0 / w);
        }
        let theta = 2.0 * vn.atan2(w);
        let mut axis = v / vn;
        if w.abs() < 1e-15 {
            canonicalize_sign(&mut axis);
        }
        axis * theta
    }

    pub fn angle(&self) -> f64 {
        self.log().norm()
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    /// Right-perturbation update `self · exp(delta)`.
    pub fn oplus(&self, delta: &Vector3<f64>) -> Self {
        let mut q = self.0 * Self::exp(delta).0;
        q.renormalize_fast();
        Self(q)
    }

    /// Inverse of [`Rotation::oplus`]: `log(self⁻¹ · other)`.
    pub fn ominus(&self, other: &Rotation) -> Vector3<f64> {
        (self.inverse() * *other).log()
    }

    /// Heading of the rotated x-axis projected on the horizontal plane.
    pub fn yaw(&self) -> f64 {
        let x = self.0 * Vector3::x();
        x.y.atan2(x.x)
    }

    pub fn is_finite(&self) -> bool {
        self.0.coords.iter().all(|c| c.is_finite())
    }
}

fn canonicalize_sign(axis: &mut Vector3<f64>) {
    for i in 0..3 {
        if axis[i].abs() > 1e-15 {
            if axis[i] < 0.0 {
                *axis = -*axis;
            }
            return;
        }
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for Rotation {
    type Output = Vector3<f64>;

    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

impl Mul<&Vector3<f64>> for &Rotation {
    type Output = Vector3<f64>;

    fn mul(self, rhs: &Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// Skew-symmetric matrix with `hat(a) * b == a.cross(&b)`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Free-function spelling of [`Rotation::exp`].
pub fn so3_exp(omega: &Vector3<f64>) -> Rotation {
    Rotation::exp(omega)
}

/// Free-function spelling of [`Rotation::log`].
pub fn so3_log(r: &Rotation) -> Vector3<f64> {
    r.log()
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    if a > -PI && a <= PI {
        return a;
    }
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}
