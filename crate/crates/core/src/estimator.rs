//! Per-link relative pose pipeline: calibrate, SG-align, Bingham orientation
//! filter, then RLS position filter fed with the current orientation mode.

use nalgebra::{DMatrix, Isometry3, Matrix3, Matrix4, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::bingham::BinghamState;
use crate::calibration::{apply_calibration, CalibrationProfile};
use crate::error::{Error, Result};
use crate::quat::Quaternion;
use crate::rls::{MotionSample, RlsConfig, RlsState};
use crate::sg::{interpolate_to, SgConfig};
use crate::types::ImuSample;

pub const DEFAULT_POSITION_THRESHOLD: f64 = 0.005;
pub const DEFAULT_ROTATION_THRESHOLD_DEG: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub sg: SgConfig,
    pub rls: RlsConfig,
    pub gamma_rot: f64,
    /// Metres, compared against `2·sqrt(tr Σ_r)`.
    pub pos_threshold: f64,
    /// Degrees, compared against twice the Bingham angular dispersion.
    pub rot_threshold_deg: f64,
    /// Stop at the first sample where the stopping criterion holds.
    pub stop_on_convergence: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            sg: SgConfig::default(),
            rls: RlsConfig::default(),
            gamma_rot: 1.0,
            pos_threshold: DEFAULT_POSITION_THRESHOLD,
            rot_threshold_deg: DEFAULT_ROTATION_THRESHOLD_DEG,
            stop_on_convergence: false,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.sg.validate()?;
        self.rls.validate()?;
        if !(self.gamma_rot > 0.0 && self.gamma_rot <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "gamma_rot must lie in (0, 1], got {}",
                self.gamma_rot
            )));
        }
        if !(self.pos_threshold > 0.0) || !(self.rot_threshold_deg > 0.0) {
            return Err(Error::InvalidInput("thresholds must be positive".into()));
        }
        Ok(())
    }
}

/// Pose of IMU P expressed in the frame of IMU A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativePoseEstimate {
    #[serde(with = "crate::serde_nalgebra::vec3")]
    pub r_hat: Vector3<f64>,
    #[serde(rename = "Sigma_r", with = "crate::serde_nalgebra::mat3")]
    pub sigma_r: Matrix3<f64>,
    /// Rotation `R_AP` mapping P-frame vectors into the A frame.
    pub orientation_mode: Quaternion,
    #[serde(with = "crate::serde_nalgebra::mat4")]
    pub bingham_a: Matrix4<f64>,
    /// One-sigma rotation-angle dispersion of the orientation, radians.
    pub orientation_dispersion: f64,
    pub converged: bool,
    pub n_samples: usize,
}

impl RelativePoseEstimate {
    /// `2·sqrt(tr Σ_r)` in metres.
    pub fn position_radius(&self) -> f64 {
        2.0 * self.sigma_r.trace().max(0.0).sqrt()
    }

    /// Twice the angular dispersion, in degrees.
    pub fn orientation_radius_deg(&self) -> f64 {
        2.0 * self.orientation_dispersion.to_degrees()
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.orientation_mode
            .to_rotation()
            .unwrap_or_else(|_| Matrix3::identity())
    }

    pub fn pose(&self) -> Isometry3<f64> {
        let q = &self.orientation_mode;
        let uq = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q.w, q.v.x, q.v.y, q.v.z));
        Isometry3::from_parts(Translation3::from(self.r_hat), uq)
    }
}

/// `2·sqrt(tr Σ_r) < pos_thresh` and twice the orientation dispersion below `rot_thresh_deg`.
pub fn stopping_criterion(estimate: &RelativePoseEstimate, pos_thresh: f64, rot_thresh_deg: f64) -> bool {
    estimate.position_radius() < pos_thresh && estimate.orientation_radius_deg() < rot_thresh_deg
}

/// One row of the convergence trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub r_hat: Vector3<f64>,
    /// `2·sqrt(tr Σ_r)`, metres.
    pub position_radius: f64,
    /// Twice the angular dispersion, degrees.
    pub orientation_radius_deg: f64,
}

fn stream_matrix(samples: &[ImuSample]) -> DMatrix<f64> {
    DMatrix::from_fn(samples.len(), 6, |i, c| {
        if c < 3 {
            samples[i].gyro[c]
        } else {
            samples[i].accel[c - 3]
        }
    })
}

/// Calibrates both streams and resamples P onto A's timestamps within their
/// common time span, yielding smoothed rates, rate derivatives and forces.
pub fn align_streams(
    stream_a: &[ImuSample],
    stream_p: &[ImuSample],
    profile_a: &CalibrationProfile,
    profile_p: &CalibrationProfile,
    sg: &SgConfig,
) -> Result<Vec<MotionSample>> {
    sg.validate()?;
    let needed = sg.window_len();
    for (name, s) in [("A", stream_a), ("P", stream_p)] {
        if s.len() < needed {
            return Err(Error::InsufficientData { needed, got: s.len() });
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("stream {name} has non-finite values")));
        }
    }
    let start = stream_a[0].t.max(stream_p[0].t);
    let end = stream_a[stream_a.len() - 1].t.min(stream_p[stream_p.len() - 1].t);
    let in_overlap = |s: &[ImuSample]| s.iter().filter(|x| x.t >= start && x.t <= end).count();
    let (na, np) = (in_overlap(stream_a), in_overlap(stream_p));
    if na < needed || np < needed {
        return Err(Error::Alignment(format!(
            "streams share {} / {} samples in [{start}, {end}], need {needed}",
            na, np
        )));
    }

    let cal_a: Vec<ImuSample> = stream_a.iter().map(|s| apply_calibration(s, profile_a)).collect();
    let cal_p: Vec<ImuSample> = stream_p.iter().map(|s| apply_calibration(s, profile_p)).collect();
    let times_a: Vec<f64> = cal_a.iter().map(|s| s.t).collect();
    let times_p: Vec<f64> = cal_p.iter().map(|s| s.t).collect();
    let queries: Vec<f64> = times_a.iter().copied().filter(|t| *t >= start && *t <= end).collect();

    let fit_a = interpolate_to(&times_a, &stream_matrix(&cal_a), &queries, sg)?;
    let fit_p = interpolate_to(&times_p, &stream_matrix(&cal_p), &queries, sg)?;
    let v3 = |v: &nalgebra::DVector<f64>, o: usize| Vector3::new(v[o], v[o + 1], v[o + 2]);
    Ok(fit_a
        .iter()
        .zip(&fit_p)
        .map(|(a, p)| MotionSample {
            t: a.t,
            f_a: v3(&a.value, 3),
            f_p: v3(&p.value, 3),
            omega_a: v3(&a.value, 0),
            omega_p: v3(&p.value, 0),
            omega_dot_a: v3(&a.derivative, 0),
            omega_dot_p: v3(&p.derivative, 0),
        })
        .collect())
}

/// Incremental form of the pipeline operating on aligned samples.
#[derive(Debug, Clone)]
pub struct PairFilter {
    config: EstimatorConfig,
    sigma_omega_a: Matrix3<f64>,
    sigma_omega_p: Matrix3<f64>,
    bingham: BinghamState,
    rls: RlsState,
    samples: usize,
}

impl PairFilter {
    pub fn new(profile_a: &CalibrationProfile, profile_p: &CalibrationProfile, config: EstimatorConfig) -> Result<Self> {
        config.validate()?;
        profile_a.validate()?;
        profile_p.validate()?;
        Ok(Self {
            config,
            sigma_omega_a: profile_a.sigma_omega,
            sigma_omega_p: profile_p.sigma_omega,
            bingham: BinghamState::new(&profile_a.sigma_omega, &profile_p.sigma_omega, config.gamma_rot)?,
            rls: RlsState::new(config.rls)?,
            samples: 0,
        })
    }

    /// Orientation update, then a position update using the new mode as `R_AP`.
    pub fn push(&mut self, sample: &MotionSample) {
        self.bingham.update(&sample.omega_a, &sample.omega_p);
        let r_ap = self
            .bingham
            .mode()
            .quaternion
            .to_rotation()
            .unwrap_or_else(|_| Matrix3::identity());
        self.rls.step(sample, &r_ap, &self.sigma_omega_a, &self.sigma_omega_p);
        self.samples += 1;
    }

    pub fn estimate(&self) -> RelativePoseEstimate {
        let mode = self.bingham.mode();
        let mut est = RelativePoseEstimate {
            r_hat: *self.rls.r_hat(),
            sigma_r: self.rls.covariance(),
            orientation_mode: mode.quaternion,
            bingham_a: self.bingham.a,
            orientation_dispersion: mode.angular_dispersion(),
            converged: false,
            n_samples: self.samples,
        };
        est.converged = self.converged(&est);
        est
    }

    fn converged(&self, est: &RelativePoseEstimate) -> bool {
        stopping_criterion(est, self.config.pos_threshold, self.config.rot_threshold_deg)
    }
}

/// Runs the pipeline over two raw streams and returns the final estimate
/// together with a per-sample convergence trace.
pub fn pairwise_estimate_traced(
    stream_a: &[ImuSample],
    stream_p: &[ImuSample],
    profile_a: &CalibrationProfile,
    profile_p: &CalibrationProfile,
    config: &EstimatorConfig,
) -> Result<(RelativePoseEstimate, Vec<TracePoint>)> {
    let aligned = align_streams(stream_a, stream_p, profile_a, profile_p, &config.sg)?;
    let mut filter = PairFilter::new(profile_a, profile_p, *config)?;
    let mut trace = Vec::with_capacity(aligned.len());
    for sample in &aligned {
        filter.push(sample);
        let est = filter.estimate();
        trace.push(TracePoint {
            t: sample.t,
            r_hat: est.r_hat,
            position_radius: est.position_radius(),
            orientation_radius_deg: est.orientation_radius_deg(),
        });
        if config.stop_on_convergence && est.converged {
            return Ok((est, trace));
        }
    }
    Ok((filter.estimate(), trace))
}

pub fn pairwise_estimate(
    stream_a: &[ImuSample],
    stream_p: &[ImuSample],
    profile_a: &CalibrationProfile,
    profile_p: &CalibrationProfile,
    config: &EstimatorConfig,
) -> Result<RelativePoseEstimate> {
    pairwise_estimate_traced(stream_a, stream_p, profile_a, profile_p, config).map(|(e, _)| e)
}

/// Joint-to-joint transform `geom_A · T_AP · geom_P⁻¹`, where `geom_A` is the
/// pose of IMU A in joint `i`'s frame and `geom_P` that of IMU P in joint `i+1`'s frame.
pub fn compose_joint_pose(
    estimate: &RelativePoseEstimate,
    geom_a: &Isometry3<f64>,
    geom_p: &Isometry3<f64>,
) -> Isometry3<f64> {
    geom_a * estimate.pose() * geom_p.inverse()
}
