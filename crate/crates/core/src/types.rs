use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::quat::Quaternion;

/// All samples of one IMU, ordered by time.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuStream {
    pub id: String,
    pub samples: Vec<ImuSample>,
}

/// One timestamped IMU reading: angular velocity (rad/s) and specific force
/// (m/s²), both in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    #[serde(with = "crate::serde_nalgebra::vec3")]
    pub gyro: Vector3<f64>,
    #[serde(with = "crate::serde_nalgebra::vec3")]
    pub accel: Vector3<f64>,
}

impl ImuSample {
    pub fn new(t: f64, gyro: Vector3<f64>, accel: Vector3<f64>) -> Self {
        Self { t, gyro, accel }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.gyro.iter().all(|v| v.is_finite())
            && self.accel.iter().all(|v| v.is_finite())
    }
}

/// Rigid transform stored as a `wxyz` quaternion and a translation in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Quaternion,
    #[serde(with = "crate::serde_nalgebra::vec3")]
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Quaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Quaternion::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    pub fn new(rotation: Quaternion, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn to_isometry(&self) -> Result<Isometry3<f64>> {
        let q = self.rotation.normalize()?;
        let uq = UnitQuaternion::new_unchecked(nalgebra::Quaternion::new(q.w, q.v.x, q.v.y, q.v.z));
        Ok(Isometry3::from_parts(Translation3::from(self.translation), uq))
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        let q = iso.rotation;
        Self {
            rotation: Quaternion::new(q.w, q.i, q.j, q.k).canonical(),
            translation: iso.translation.vector,
        }
    }
}
