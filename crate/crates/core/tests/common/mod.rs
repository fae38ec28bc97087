#![allow(dead_code)]

use imuchain::calibration::CalibrationProfile;
use imuchain::estimator::{pairwise_estimate, EstimatorConfig, RelativePoseEstimate};
use imuchain::model::{EstimatedModel, ModelJoint};
use imuchain::quat::Quaternion;
use imuchain::sim::{
    hand_shake, simulate_imu, standard_gravity, ChainSpec, ImuMount, JointMotion, JointSpec, NoiseSpec, TrajectorySpec,
};
use imuchain::types::{ImuStream, Pose};
use nalgebra::{Isometry3, Matrix3, Vector3};

pub const GYRO_STD: f64 = 0.005;
pub const ACCEL_STD: f64 = 0.05;
pub const RATE: f64 = 85.0;
pub const SHAKE_AMPLITUDE: f64 = 0.25;

/// Two IMUs on the base body: A at the origin, P at `r` with orientation `rot`.
pub fn rod(r: Vector3<f64>, rot: Quaternion) -> ChainSpec {
    ChainSpec {
        joints: vec![],
        imus: vec![
            ImuMount { id: "A".into(), link: 0, pose: Pose::identity(), time_offset: 0.0 },
            ImuMount { id: "P".into(), link: 0, pose: Pose::new(rot, r), time_offset: 0.0 },
        ],
        end_effector: Pose::identity(),
    }
}

pub fn shake(joints: usize, amplitude: f64, duration: f64) -> TrajectorySpec {
    TrajectorySpec {
        joints: vec![JointMotion::default(); joints],
        base: hand_shake(amplitude),
        duration,
        sample_rate: RATE,
        jitter: 0.0,
    }
}

pub fn noise(seed: u64) -> NoiseSpec {
    NoiseSpec::isotropic(GYRO_STD, ACCEL_STD, seed)
}

/// Profile of an ideal sensor with the simulated white-noise levels.
pub fn noise_profile() -> CalibrationProfile {
    CalibrationProfile {
        sigma_omega: Matrix3::identity() * GYRO_STD * GYRO_STD,
        sigma_f: Matrix3::identity() * ACCEL_STD * ACCEL_STD,
        ..CalibrationProfile::identity()
    }
}

pub fn stream<'a>(streams: &'a [ImuStream], id: &str) -> &'a ImuStream {
    streams.iter().find(|s| s.id == id).expect("stream present")
}

pub fn estimate_pair(
    chain: &ChainSpec,
    traj: &TrajectorySpec,
    noise: &NoiseSpec,
    a: &str,
    p: &str,
    config: &EstimatorConfig,
) -> RelativePoseEstimate {
    let streams = simulate_imu(chain, traj, noise, &standard_gravity()).unwrap();
    let profile = if noise.gyro_noise_cov == Matrix3::zeros() {
        CalibrationProfile::identity()
    } else {
        noise_profile()
    };
    pairwise_estimate(&stream(&streams, a).samples, &stream(&streams, p).samples, &profile, &profile, config).unwrap()
}

/// Errors of an estimate against the simulator's ground truth: (metres, degrees).
pub fn pose_errors(chain: &ChainSpec, a: &str, p: &str, est: &RelativePoseEstimate) -> (f64, f64) {
    let truth = chain.relative_imu_pose(a, p).unwrap();
    let pos = (est.r_hat - truth.translation.vector).norm();
    let rot = est.pose().rotation.angle_to(&truth.rotation).to_degrees();
    (pos, rot)
}

/// Three-joint arm (yaw, shoulder pitch, elbow pitch). Each link between two
/// joints carries the horn-side IMU of the lower joint ("hN") and the
/// motor-side IMU of the upper joint ("mN+1"); their poses relative to the
/// joint frames are the design geometry.
/// Per estimated link: (joint index whose incoming transform is estimated, IMU A, IMU P, geom A, geom P).
pub type LinkGeometry = (usize, String, String, Isometry3<f64>, Isometry3<f64>);

pub struct Arm {
    pub chain: ChainSpec,
    pub links: Vec<LinkGeometry>,
}

pub fn arm(upper: f64, forearm: f64, twist: f64) -> Arm {
    let joints = vec![
        JointSpec { name: "yaw".into(), axis: Vector3::z(), origin: Pose::from_translation(0.0, 0.0, 0.05) },
        JointSpec {
            name: "shoulder".into(),
            axis: Vector3::y(),
            origin: Pose::new(Quaternion::from_axis_angle(&Vector3::z(), twist), Vector3::new(0.0, 0.01, 0.09)),
        },
        JointSpec {
            name: "elbow".into(),
            axis: Vector3::y(),
            origin: Pose::new(Quaternion::from_axis_angle(&Vector3::x(), 0.5 * twist), Vector3::new(upper, 0.0, 0.02)),
        },
    ];
    let horn = Isometry3::new(Vector3::new(0.0, 0.0, 0.03), Vector3::new(0.0, 0.0, 0.4));
    let motor = Isometry3::new(Vector3::new(-0.03, 0.0, -0.02), Vector3::new(0.3, 0.0, 0.0));
    let mut imus = Vec::new();
    let mut links = Vec::new();
    for (k, joint) in joints.iter().enumerate().skip(1) {
        let a = format!("h{k}");
        let p = format!("m{}", k + 1);
        let origin_next = joint.origin.to_isometry().unwrap();
        imus.push(ImuMount { id: a.clone(), link: k, pose: Pose::from_isometry(&horn), time_offset: 0.0 });
        imus.push(ImuMount { id: p.clone(), link: k, pose: Pose::from_isometry(&(origin_next * motor)), time_offset: 0.0 });
        links.push((k, a, p, horn, motor));
    }
    Arm {
        chain: ChainSpec { joints, imus, end_effector: Pose::from_translation(forearm, 0.0, 0.0) },
        links,
    }
}

/// Shake with the joints also swinging, as when the assembled robot is moved by hand.
pub fn arm_shake(duration: f64) -> TrajectorySpec {
    let mut traj = shake(3, SHAKE_AMPLITUDE, duration);
    traj.joints = vec![
        JointMotion::sine(0.4, 0.35, 0.0),
        JointMotion::sine(0.3, 0.55, 1.0),
        JointMotion::sine(0.5, 0.45, 2.0),
    ];
    traj
}

/// Model with the first joint and the tool from design geometry and the
/// inter-joint transforms from estimates.
pub fn assemble(arm: &Arm, estimates: &[RelativePoseEstimate]) -> EstimatedModel {
    let c = &arm.chain;
    let mut joints: Vec<ModelJoint> = c
        .joints
        .iter()
        .map(|j| ModelJoint::known(j.name.clone(), j.axis, &j.origin.to_isometry().unwrap()))
        .collect();
    for ((k, _, _, ga, gp), est) in arm.links.iter().zip(estimates) {
        joints[*k] = ModelJoint::from_estimate(c.joints[*k].name.clone(), c.joints[*k].axis, est, ga, gp);
    }
    EstimatedModel { joints, end_effector: c.end_effector.to_isometry().unwrap().to_homogeneous() }
}
