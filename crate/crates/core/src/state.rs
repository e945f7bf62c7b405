//! Navigation state on `R³ × SO(3) × R¹²` and its 18-dimensional error state.

use nalgebra::{SVector, Vector3};

use crate::so3::Rotation;

pub const POS: usize = 0;
pub const ROT: usize = 3;
pub const VEL: usize = 6;
pub const BA: usize = 9;
pub const BG: usize = 12;
pub const GRAV: usize = 15;
pub const ERROR_DIM: usize = 18;

/// Standard gravity (m/s²).
pub const GRAVITY: f64 = 9.81;

pub type ErrorVector = SVector<f64, ERROR_DIM>;

/// Navigation state of the IMU frame in the world frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateVector {
    pub position: Vector3<f64>,
    pub attitude: Rotation,
    pub velocity: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
    /// Additive correction to the nominal gravity vector `(0, 0, -g)`.
    pub gravity_correction: Vector3<f64>,
}

impl Default for StateVector {
    fn default() -> Self {
        Self {
            position: Vector3::zeros(),
            attitude: Rotation::identity(),
            velocity: Vector3::zeros(),
            accel_bias: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
            gravity_correction: Vector3::zeros(),
        }
    }
}

impl StateVector {
    pub fn gravity(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -GRAVITY) + self.gravity_correction
    }

    pub fn pose(&self) -> Pose {
        Pose {
            rotation: self.attitude,
            translation: self.position,
        }
    }

    pub fn is_finite(&self) -> bool {
        let vecs = [
            &self.position,
            &self.velocity,
            &self.accel_bias,
            &self.gyro_bias,
            &self.gravity_correction,
        ];
        vecs.iter().all(|v| v.iter().all(|c| c.is_finite())) && self.attitude.is_finite()
    }

    /// `self ⊞ dxi`: vector blocks add, attitude is right-multiplied by `exp(δφ)`.
    pub fn retract(&self, dxi: &ErrorState) -> StateVector {
        StateVector {
            position: self.position + dxi.position(),
            attitude: self.attitude.oplus(&dxi.attitude()),
            velocity: self.velocity + dxi.velocity(),
            accel_bias: self.accel_bias + dxi.accel_bias(),
            gyro_bias: self.gyro_bias + dxi.gyro_bias(),
            gravity_correction: self.gravity_correction + dxi.gravity_correction(),
        }
    }

    /// `other ⊟ self`, the error state taking `self` to `other`.
    pub fn local(&self, other: &StateVector) -> ErrorState {
        let mut v = ErrorVector::zeros();
        v.fixed_rows_mut::<3>(POS).copy_from(&(other.position - self.position));
        v.fixed_rows_mut::<3>(ROT).copy_from(&self.attitude.ominus(&other.attitude));
        v.fixed_rows_mut::<3>(VEL).copy_from(&(other.velocity - self.velocity));
        v.fixed_rows_mut::<3>(BA).copy_from(&(other.accel_bias - self.accel_bias));
        v.fixed_rows_mut::<3>(BG).copy_from(&(other.gyro_bias - self.gyro_bias));
        v.fixed_rows_mut::<3>(GRAV)
            .copy_from(&(other.gravity_correction - self.gravity_correction));
        ErrorState(v)
    }
}

/// Rigid transform, e.g. a keyframe pose.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * *p + self.translation
    }
}

/// Free-function spelling of [`StateVector::retract`].
pub fn retract(xi: &StateVector, dxi: &ErrorState) -> StateVector {
    xi.retract(dxi)
}

/// Error state ordered `[δt, δφ, δv, δβa, δβg, δγ]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorState(pub ErrorVector);

impl Default for ErrorState {
    fn default() -> Self {
        Self::zeros()
    }
}

impl ErrorState {
    pub fn zeros() -> Self {
        Self(ErrorVector::zeros())
    }

    pub fn from_blocks(
        position: Vector3<f64>,
        attitude: Vector3<f64>,
        velocity: Vector3<f64>,
        accel_bias: Vector3<f64>,
        gyro_bias: Vector3<f64>,
        gravity_correction: Vector3<f64>,
    ) -> Self {
        let mut v = ErrorVector::zeros();
        for (offset, block) in [
            (POS, position),
            (ROT, attitude),
            (VEL, velocity),
            (BA, accel_bias),
            (BG, gyro_bias),
            (GRAV, gravity_correction),
        ] {
            v.fixed_rows_mut::<3>(offset).copy_from(&block);
        }
        Self(v)
    }

    fn block(&self, offset: usize) -> Vector3<f64> {
        self.0.fixed_rows::<3>(offset).into_owned()
    }

    pub fn position(&self) -> Vector3<f64> {
        self.block(POS)
    }
    pub fn attitude(&self) -> Vector3<f64> {
        self.block(ROT)
    }
    pub fn velocity(&self) -> Vector3<f64> {
        self.block(VEL)
    }
    pub fn accel_bias(&self) -> Vector3<f64> {
        self.block(BA)
    }
    pub fn gyro_bias(&self) -> Vector3<f64> {
        self.block(BG)
    }
    pub fn gravity_correction(&self) -> Vector3<f64> {
        self.block(GRAV)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl std::ops::Neg for ErrorState {
    type Output = ErrorState;
    fn neg(self) -> ErrorState {
        ErrorState(-self.0)
    }
}
