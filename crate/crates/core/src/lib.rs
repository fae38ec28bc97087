//! Relative pose estimation between IMUs mounted on rigid links.
//!
//! The pipeline calibrates each IMU, smooths and aligns the streams with a
//! Savitzky-Golay filter, estimates relative orientation with a recursive
//! Bingham filter and relative position with a recursive least-squares
//! filter. A rigid-chain simulator provides ground truth, and estimated
//! link transforms can be assembled into a kinematic model for FK/IK.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bingham;
pub mod calibration;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod log;
pub mod model;
pub mod quat;
pub mod rls;
pub(crate) mod serde_nalgebra;
pub mod sg;
pub mod sim;
pub mod sweep;
pub mod types;

pub use bingham::{BinghamMode, BinghamState};
pub use calibration::{CalibrationProfile, QuadricParams};
pub use error::{Error, Result};
pub use estimator::{pairwise_estimate, stopping_criterion, EstimatorConfig, RelativePoseEstimate};
pub use log::ImuLogRecord;
pub use model::{EstimatedModel, IkSolution};
pub use quat::Quaternion;
pub use rls::{MotionSample, RlsConfig, RlsState};
pub use sg::SgConfig;
pub use sim::{ChainSpec, NoiseSpec, TrajectorySpec};
pub use sweep::{SweepConfig, SweepPoint};
pub use types::{ImuSample, ImuStream, Pose};

pub use nalgebra;
