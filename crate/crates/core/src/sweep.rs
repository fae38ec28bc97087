//! Frequency response of the smoothing + position pipeline.
//!
//! A link of length `L` spins about `z` with angular velocity
//! `(0, 0, sin 2πft)`; IMU A sits on the axis and P at `(L, 0, 0)`. Both
//! noiseless streams go through SG smoothing and the RLS filter with the
//! orientation fixed at identity, and the recovered `‖r̂‖ / L` is reported.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationProfile;
use crate::error::{Error, Result};
use crate::estimator::align_streams;
use crate::rls::{RlsConfig, RlsState};
use crate::sg::SgConfig;
use crate::sim::{simulate_imu, standard_gravity, ChainSpec, ImuMount, JointMotion, JointSpec, NoiseSpec, Sinusoid, TrajectorySpec};
use crate::types::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub sg: SgConfig,
    pub rls: RlsConfig,
    /// Hz.
    pub sample_rate: f64,
    pub min_samples: usize,
    /// Lower bound on the number of excitation periods per run.
    pub min_periods: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sg: SgConfig::default(),
            rls: RlsConfig::default(),
            sample_rate: 100.0,
            min_samples: 2000,
            min_periods: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// `f / f_sample`.
    pub ratio: f64,
    /// Hz.
    pub frequency: f64,
    /// `‖r̂‖ / L`.
    pub length_ratio: f64,
}

/// Spin setup used by the sweep; exposed so logs can be generated from it.
pub fn sweep_setup(length: f64, ratio: f64, config: &SweepConfig) -> Result<(ChainSpec, TrajectorySpec)> {
    if !(ratio > 0.0 && ratio < 0.5) {
        return Err(Error::InvalidInput(format!("ratio {ratio} outside (0, 0.5)")));
    }
    if !(length > 0.0) || !length.is_finite() {
        return Err(Error::InvalidInput("link length must be positive".into()));
    }
    let frequency = ratio * config.sample_rate;
    let n = config
        .min_samples
        .max((config.min_periods / ratio).ceil() as usize);
    let chain = ChainSpec {
        joints: vec![JointSpec {
            name: "spin".into(),
            axis: Vector3::z(),
            origin: Pose::identity(),
        }],
        imus: vec![
            ImuMount { id: "A".into(), link: 1, pose: Pose::identity(), time_offset: 0.0 },
            ImuMount { id: "P".into(), link: 1, pose: Pose::from_translation(length, 0.0, 0.0), time_offset: 0.0 },
        ],
        end_effector: Pose::identity(),
    };
    let mut traj = TrajectorySpec::stationary(1, (n - 1) as f64 / config.sample_rate, config.sample_rate);
    // θ̇ = sin(2πft)
    traj.joints[0] = JointMotion {
        components: vec![Sinusoid {
            amplitude: 1.0 / (TAU * frequency),
            frequency,
            phase: -FRAC_PI_2,
        }],
        ..Default::default()
    };
    Ok((chain, traj))
}

pub fn sweep_point(length: f64, ratio: f64, config: &SweepConfig) -> Result<SweepPoint> {
    let (chain, traj) = sweep_setup(length, ratio, config)?;
    let streams = simulate_imu(&chain, &traj, &NoiseSpec::noiseless(), &standard_gravity())?;
    let identity = CalibrationProfile::identity();
    let aligned = align_streams(&streams[0].samples, &streams[1].samples, &identity, &identity, &config.sg)?;
    let mut rls = RlsState::new(config.rls)?;
    let (r_ap, zero) = (Matrix3::identity(), Matrix3::zeros());
    for s in &aligned {
        rls.step(s, &r_ap, &zero, &zero);
    }
    Ok(SweepPoint {
        ratio,
        frequency: ratio * config.sample_rate,
        length_ratio: rls.r_hat().norm() / length,
    })
}

pub fn freq_sweep(length: f64, ratios: &[f64], config: &SweepConfig) -> Result<Vec<SweepPoint>> {
    ratios.iter().map(|&r| sweep_point(length, r, config)).collect()
}
