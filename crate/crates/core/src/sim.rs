//! Ground-truth rigid-link chain simulator producing synthetic IMU streams.
//!
//! A chain is a base body followed by revolute joints. Body `k` (for `k >= 1`)
//! is attached to body `k − 1` through the joint's fixed origin transform and a
//! rotation by `θ_k(t)` about the joint axis. The base itself can be shaken
//! (three rotations about its local x, y, z axes and a world-frame
//! translation), which stands in for moving the whole assembly by hand.
//!
//! Joint angles are sums of sinusoids plus a constant rate, so every
//! derivative is evaluated in closed form; no numerical differentiation is
//! involved in producing the reference readings.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use nalgebra::{Isometry3, Matrix3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calibration::STANDARD_GRAVITY;
use crate::error::{Error, Result};
use crate::linalg::{is_sym_psd3, sym_sqrt3};
pub use crate::types::ImuStream;
use crate::types::{ImuSample, Pose};

/// Default gravity vector: world `z` points up.
pub fn standard_gravity() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -STANDARD_GRAVITY)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    /// Unit rotation axis in the joint frame.
    #[serde(with = "crate::serde_nalgebra::vec3")]
    pub axis: Vector3<f64>,
    /// Transform from the parent body frame to the joint frame (before rotation).
    pub origin: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuMount {
    pub id: String,
    /// Body index: 0 is the base, `k` the body driven by joint `k`.
    pub link: usize,
    /// Pose of the IMU in the body frame.
    pub pose: Pose,
    /// Sampling-time offset of this IMU in seconds.
    #[serde(default)]
    pub time_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub joints: Vec<JointSpec>,
    pub imus: Vec<ImuMount>,
    /// Tool pose in the last body frame.
    #[serde(default)]
    pub end_effector: Pose,
}

impl ChainSpec {
    pub fn validate(&self) -> Result<()> {
        for j in &self.joints {
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "joint {} axis is not unit length",
                    j.name
                )));
            }
            j.origin.to_isometry()?;
        }
        self.end_effector.to_isometry()?;
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.imus {
            if m.link > self.joints.len() {
                return Err(Error::InvalidInput(format!(
                    "IMU {} mounted on missing body {}",
                    m.id, m.link
                )));
            }
            if !seen.insert(m.id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate IMU id {}", m.id)));
            }
            if !m.time_offset.is_finite() {
                return Err(Error::InvalidInput(format!("IMU {} time offset", m.id)));
            }
            m.pose.to_isometry()?;
        }
        Ok(())
    }

    pub fn imu(&self, id: &str) -> Result<&ImuMount> {
        self.imus
            .iter()
            .find(|m| m.id == id)
            .ok_or_else(|| Error::InvalidInput(format!("unknown IMU {id}")))
    }

    /// Pose of IMU `b` in the frame of IMU `a`; both must share a body.
    pub fn relative_imu_pose(&self, a: &str, b: &str) -> Result<Isometry3<f64>> {
        let (ma, mb) = (self.imu(a)?, self.imu(b)?);
        if ma.link != mb.link {
            return Err(Error::InvalidInput(format!(
                "IMUs {a} and {b} are on different bodies"
            )));
        }
        Ok(ma.pose.to_isometry()?.inverse() * mb.pose.to_isometry()?)
    }

    /// Tool pose in the base frame for static joint angles.
    pub fn forward_kinematics(&self, angles: &[f64]) -> Result<Isometry3<f64>> {
        if angles.len() != self.joints.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} joint angles, got {}",
                self.joints.len(),
                angles.len()
            )));
        }
        let mut t = Isometry3::identity();
        for (j, &a) in self.joints.iter().zip(angles) {
            let axis = Unit::new_normalize(j.axis);
            t = t * j.origin.to_isometry()? * Isometry3::rotation(axis.into_inner() * a);
        }
        Ok(t * self.end_effector.to_isometry()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    /// Hz.
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Scalar coordinate trajectory:
/// `θ(t) = offset + rate·τ + Σ A_k (sin(2π f_k τ + φ_k) − sin φ_k)` with
/// `τ = t − start`, held at `offset` before `start`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JointMotion {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub rate: f64,
    #[serde(default)]
    pub components: Vec<Sinusoid>,
    #[serde(default)]
    pub start: f64,
}

impl JointMotion {
    pub fn hold(angle: f64) -> Self {
        Self {
            offset: angle,
            ..Default::default()
        }
    }

    pub fn sine(amplitude: f64, frequency: f64, phase: f64) -> Self {
        Self {
            components: vec![Sinusoid {
                amplitude,
                frequency,
                phase,
            }],
            ..Default::default()
        }
    }

    pub fn spin(rate: f64) -> Self {
        Self {
            rate,
            ..Default::default()
        }
    }

    /// Value, first and second derivative at time `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        if t < self.start {
            return (self.offset, 0.0, 0.0);
        }
        let tau = t - self.start;
        let mut q = self.offset + self.rate * tau;
        let mut qd = self.rate;
        let mut qdd = 0.0;
        for c in &self.components {
            let w = TAU * c.frequency;
            let (s, co) = (w * tau + c.phase).sin_cos();
            q += c.amplitude * (s - c.phase.sin());
            qd += c.amplitude * w * co;
            qdd -= c.amplitude * w * w * s;
        }
        (q, qd, qdd)
    }

    pub fn max_frequency(&self) -> f64 {
        self.components.iter().map(|c| c.frequency).fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.offset, self.rate, self.start].iter().all(|v| v.is_finite())
            && self
                .components
                .iter()
                .all(|c| c.amplitude.is_finite() && c.frequency.is_finite() && c.frequency >= 0.0 && c.phase.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("non-finite joint motion".into()))
        }
    }
}

/// Motion of the whole chain's base body.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BaseMotion {
    /// Successive rotations about the base's local x, y and z axes (rad).
    #[serde(default)]
    pub rotation: [JointMotion; 3],
    /// World-frame translation along x, y, z (m).
    #[serde(default)]
    pub translation: [JointMotion; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    /// One entry per chain joint.
    pub joints: Vec<JointMotion>,
    #[serde(default)]
    pub base: BaseMotion,
    /// Seconds.
    pub duration: f64,
    /// Hz.
    pub sample_rate: f64,
    /// Uniform timestamp jitter half-width in seconds.
    #[serde(default)]
    pub jitter: f64,
}

impl TrajectorySpec {
    pub fn stationary(joint_count: usize, duration: f64, sample_rate: f64) -> Self {
        Self {
            joints: vec![JointMotion::default(); joint_count],
            base: BaseMotion::default(),
            duration,
            sample_rate,
            jitter: 0.0,
        }
    }

    pub fn validate(&self, chain: &ChainSpec) -> Result<()> {
        if !(self.sample_rate > 0.0) || !self.sample_rate.is_finite() {
            return Err(Error::InvalidInput("sample_rate must be positive".into()));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::InvalidInput("duration must be positive".into()));
        }
        if self.joints.len() != chain.joints.len() {
            return Err(Error::InvalidInput(format!(
                "trajectory has {} joint motions for {} joints",
                self.joints.len(),
                chain.joints.len()
            )));
        }
        if !(self.jitter >= 0.0) || self.jitter >= 0.5 / self.sample_rate {
            return Err(Error::InvalidInput(
                "jitter must lie in [0, half a sample period)".into(),
            ));
        }
        self.joints
            .iter()
            .chain(self.base.rotation.iter())
            .chain(self.base.translation.iter())
            .try_for_each(|m| m.validate())
    }

    pub fn sample_count(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize + 1
    }
}

/// Multi-axis base wobble resembling a hand-held shake: two sinusoids per
/// rotation axis with incommensurate frequencies between 0.3 and 1.2 Hz; the
/// secondary components carry about half of `amplitude` (rad).
pub fn hand_shake(amplitude: f64) -> BaseMotion {
    let axis = |f1: f64, p1: f64, k: f64, f2: f64, p2: f64| JointMotion {
        components: vec![
            Sinusoid { amplitude, frequency: f1, phase: p1 },
            Sinusoid { amplitude: amplitude * k, frequency: f2, phase: p2 },
        ],
        ..Default::default()
    };
    BaseMotion {
        rotation: [
            axis(0.42, 0.3, 0.5, 1.14, 1.3),
            axis(0.66, 1.0, 0.4, 0.96, 0.1),
            axis(0.30, 2.0, 0.5, 0.78, 0.7),
        ],
        translation: [
            JointMotion::sine(0.02, 0.5, 0.0),
            JointMotion::sine(0.015, 0.8, 1.0),
            JointMotion::sine(0.01, 1.1, 2.0),
        ],
    }
}

/// Sinusoidal swing `θ(t) = amplitude·sin(2π f t)` on one joint, others held at zero.
pub fn shake_trajectory(
    joint_count: usize,
    joint_index: usize,
    amplitude: f64,
    frequency: f64,
    duration: f64,
    sample_rate: f64,
) -> Result<TrajectorySpec> {
    if joint_index >= joint_count {
        return Err(Error::InvalidInput(format!(
            "joint index {joint_index} out of range for {joint_count} joints"
        )));
    }
    if frequency >= 0.5 * sample_rate {
        return Err(Error::Aliasing {
            frequency,
            sample_rate,
        });
    }
    let mut traj = TrajectorySpec::stationary(joint_count, duration, sample_rate);
    traj.joints[joint_index] = JointMotion::sine(amplitude, frequency, 0.0);
    Ok(traj)
}

/// Gaussian sensor noise shared by all IMUs plus per-IMU systematic errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(with = "crate::serde_nalgebra::mat3")]
    pub gyro_noise_cov: Matrix3<f64>,
    #[serde(with = "crate::serde_nalgebra::mat3")]
    pub accel_noise_cov: Matrix3<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Keyed by IMU id.
    #[serde(default)]
    pub sensors: BTreeMap<String, SensorErrors>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::noiseless()
    }
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            gyro_noise_cov: Matrix3::zeros(),
            accel_noise_cov: Matrix3::zeros(),
            seed: 0,
            sensors: BTreeMap::new(),
        }
    }

    /// Isotropic white noise with the given per-axis standard deviations.
    pub fn isotropic(gyro_std: f64, accel_std: f64, seed: u64) -> Self {
        Self {
            gyro_noise_cov: Matrix3::identity() * gyro_std * gyro_std,
            accel_noise_cov: Matrix3::identity() * accel_std * accel_std,
            seed,
            sensors: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !is_sym_psd3(&self.gyro_noise_cov) || !is_sym_psd3(&self.accel_noise_cov) {
            return Err(Error::InvalidInput(
                "noise covariances must be symmetric PSD".into(),
            ));
        }
        Ok(())
    }
}

/// Systematic sensor errors: `ω_raw = ω + gyro_bias`,
/// `f_raw = accel_scale·f + accel_bias`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorErrors {
    #[serde(default = "zero3", with = "crate::serde_nalgebra::vec3")]
    pub gyro_bias: Vector3<f64>,
    #[serde(default = "zero3", with = "crate::serde_nalgebra::vec3")]
    pub accel_bias: Vector3<f64>,
    #[serde(default = "eye3", with = "crate::serde_nalgebra::mat3")]
    pub accel_scale: Matrix3<f64>,
}

fn zero3() -> Vector3<f64> {
    Vector3::zeros()
}

fn eye3() -> Matrix3<f64> {
    Matrix3::identity()
}

impl Default for SensorErrors {
    fn default() -> Self {
        Self {
            gyro_bias: Vector3::zeros(),
            accel_bias: Vector3::zeros(),
            accel_scale: Matrix3::identity(),
        }
    }
}

/// World-frame kinematic state of one body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyState {
    pub rotation: Matrix3<f64>,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub omega: Vector3<f64>,
    pub alpha: Vector3<f64>,
}

impl BodyState {
    fn world() -> Self {
        Self {
            rotation: Matrix3::identity(),
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
            omega: Vector3::zeros(),
            alpha: Vector3::zeros(),
        }
    }

    /// State of a frame rigidly attached at `offset` (expressed in this body).
    pub fn attach(&self, offset: &Isometry3<f64>) -> Self {
        let d = self.rotation * offset.translation.vector;
        Self {
            rotation: self.rotation * offset.rotation.to_rotation_matrix().into_inner(),
            position: self.position + d,
            velocity: self.velocity + self.omega.cross(&d),
            acceleration: self.acceleration
                + self.alpha.cross(&d)
                + self.omega.cross(&self.omega.cross(&d)),
            omega: self.omega,
            alpha: self.alpha,
        }
    }

    /// Child state after a revolute joint about `axis` (in this frame).
    fn revolve(&self, axis: &Vector3<f64>, (q, qd, qdd): (f64, f64, f64)) -> Self {
        let z = self.rotation * axis;
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), q);
        Self {
            rotation: self.rotation * rot.into_inner(),
            position: self.position,
            velocity: self.velocity,
            acceleration: self.acceleration,
            omega: self.omega + z * qd,
            alpha: self.alpha + z * qdd + self.omega.cross(&(z * qd)),
        }
    }

    /// Ideal gyro and accelerometer readings of a sensor with this state.
    pub fn ideal_reading(&self, gravity: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
        let rt = self.rotation.transpose();
        (rt * self.omega, rt * (self.acceleration - gravity))
    }
}

/// World states of the base (index 0) and every joint-driven body at time `t`.
pub fn body_states(chain: &ChainSpec, traj: &TrajectorySpec, t: f64) -> Result<Vec<BodyState>> {
    let mut base = BodyState::world();
    for (k, m) in traj.base.translation.iter().enumerate() {
        let (p, v, a) = m.eval(t);
        base.position[k] = p;
        base.velocity[k] = v;
        base.acceleration[k] = a;
    }
    for (k, m) in traj.base.rotation.iter().enumerate() {
        base = base.revolve(&Vector3::ith(k, 1.0), m.eval(t));
    }
    let mut out = Vec::with_capacity(chain.joints.len() + 1);
    out.push(base);
    for (j, m) in chain.joints.iter().zip(&traj.joints) {
        let prev = out.last().expect("base pushed");
        let frame = prev.attach(&j.origin.to_isometry()?);
        out.push(frame.revolve(&j.axis, m.eval(t)));
    }
    Ok(out)
}

/// World state of a mounted IMU at time `t`.
pub fn imu_state(chain: &ChainSpec, traj: &TrajectorySpec, mount: &ImuMount, t: f64) -> Result<BodyState> {
    let bodies = body_states(chain, traj, t)?;
    Ok(bodies[mount.link].attach(&mount.pose.to_isometry()?))
}

/// Synthesizes one sample stream per mounted IMU.
///
/// Stream `i` draws from its own ChaCha stream of `noise.seed`, so output is
/// bit-identical for identical inputs regardless of evaluation order.
pub fn simulate_imu(
    chain: &ChainSpec,
    traj: &TrajectorySpec,
    noise: &NoiseSpec,
    gravity: &Vector3<f64>,
) -> Result<Vec<ImuStream>> {
    chain.validate()?;
    traj.validate(chain)?;
    noise.validate()?;
    let gyro_l = sym_sqrt3(&noise.gyro_noise_cov);
    let accel_l = sym_sqrt3(&noise.accel_noise_cov);
    let n = traj.sample_count();
    let dt = 1.0 / traj.sample_rate;

    chain
        .imus
        .iter()
        .enumerate()
        .map(|(idx, mount)| {
            let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
            rng.set_stream(idx as u64);
            let errors = noise.sensors.get(&mount.id).copied().unwrap_or_default();
            let offset = mount.pose.to_isometry()?;
            let mut samples = Vec::with_capacity(n);
            for k in 0..n {
                let jitter = if traj.jitter > 0.0 {
                    rng.random_range(-traj.jitter..traj.jitter)
                } else {
                    0.0
                };
                let t = k as f64 * dt + mount.time_offset + jitter;
                let state = body_states(chain, traj, t)?[mount.link].attach(&offset);
                let (w, f) = state.ideal_reading(gravity);
                let gyro = w + errors.gyro_bias + gyro_l * gaussian3(&mut rng);
                let accel = errors.accel_scale * f + errors.accel_bias + accel_l * gaussian3(&mut rng);
                samples.push(ImuSample::new(t, gyro, accel));
            }
            Ok(ImuStream {
                id: mount.id.clone(),
                samples,
            })
        })
        .collect()
}

fn gaussian3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}
