//! Fixtures shared by the benchmarks.

use imuchain::nalgebra::{Matrix3, Vector3};
use imuchain::sim::{hand_shake, simulate_imu, standard_gravity, ImuMount};
use imuchain::{CalibrationProfile, ChainSpec, ImuStream, NoiseSpec, Pose, TrajectorySpec};

pub const GYRO_STD: f64 = 0.005;
pub const ACCEL_STD: f64 = 0.05;

/// Two IMUs 200 mm apart on one rigid body.
pub fn rod() -> ChainSpec {
    ChainSpec {
        joints: vec![],
        imus: vec![
            ImuMount { id: "A".into(), link: 0, pose: Pose::identity(), time_offset: 0.0 },
            ImuMount { id: "P".into(), link: 0, pose: Pose::from_translation(0.2, 0.0, 0.0), time_offset: 0.0 },
        ],
        end_effector: Pose::identity(),
    }
}

/// Hand-shake trajectory of the given length at 85 Hz.
pub fn shake(duration: f64) -> TrajectorySpec {
    TrajectorySpec { joints: vec![], base: hand_shake(0.25), duration, sample_rate: 85.0, jitter: 0.0 }
}

/// Noisy streams of the rod under a hand shake: `(A, P)`.
pub fn rod_streams(duration: f64) -> (ImuStream, ImuStream) {
    let mut streams = simulate_imu(&rod(), &shake(duration), &NoiseSpec::isotropic(GYRO_STD, ACCEL_STD, 1), &standard_gravity())
        .expect("valid setup")
        .into_iter();
    let a = streams.next().expect("stream A");
    let p = streams.next().expect("stream P");
    (a, p)
}

/// Profile of an ideal sensor with the simulated noise levels.
pub fn noise_profile() -> CalibrationProfile {
    CalibrationProfile {
        sigma_omega: Matrix3::identity() * GYRO_STD * GYRO_STD,
        sigma_f: Matrix3::identity() * ACCEL_STD * ACCEL_STD,
        ..CalibrationProfile::identity()
    }
}

/// Points on a distorted, offset gravity sphere (Fibonacci lattice).
pub fn ellipsoid_points(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    let shape = Matrix3::new(1.03, 0.01, 0.0, 0.01, 0.98, 0.02, 0.0, 0.02, 1.01);
    let bias = Vector3::new(0.1, -0.2, 0.15);
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * i as f64;
            shape * Vector3::new(r * phi.cos(), y, r * phi.sin()) * 9.80665 + bias
        })
        .collect()
}
