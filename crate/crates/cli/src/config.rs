//! Run configuration shared by all subcommands.

use std::path::Path;

use imuchain::calibration::{StationaryConfig, STANDARD_GRAVITY};
use imuchain::estimator::{DEFAULT_POSITION_THRESHOLD, DEFAULT_ROTATION_THRESHOLD_DEG};
use imuchain::{EstimatorConfig, NoiseSpec, RlsConfig, SgConfig, SweepConfig};
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Every tunable of a run. Missing fields take the defaults listed in `Default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sg: SgConfig,
    pub gamma_pos: f64,
    pub gamma_rot: f64,
    pub n_lag: usize,
    pub epsilon_init: f64,
    /// Fill the residual queue before the first position update.
    pub prime_queue: bool,
    /// Metres.
    pub pos_threshold: f64,
    /// Degrees.
    pub rot_threshold_deg: f64,
    /// Stop estimation at the first converged sample.
    pub stop_on_convergence: bool,
    pub g_mag: f64,
    /// Simulation noise, used when `simulate` gets no `--noise` file.
    pub noise: NoiseSpec,
    /// Overrides the noise seed when set.
    pub seed: Option<u64>,
    /// Minimum length of a stationary calibration segment.
    pub stationary_min_samples: usize,
    /// Gyro standard deviation (rad/s) above which a segment counts as moving.
    pub motion_threshold: f64,
    /// Hz.
    pub sweep_rate: f64,
    /// Metres.
    pub sweep_length: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let rls = RlsConfig::default();
        let stationary = StationaryConfig::default();
        Self {
            sg: SgConfig::default(),
            gamma_pos: rls.gamma_pos,
            gamma_rot: 1.0,
            n_lag: rls.n_lag,
            epsilon_init: rls.epsilon_init,
            prime_queue: rls.prime_queue,
            pos_threshold: DEFAULT_POSITION_THRESHOLD,
            rot_threshold_deg: DEFAULT_ROTATION_THRESHOLD_DEG,
            stop_on_convergence: false,
            g_mag: STANDARD_GRAVITY,
            noise: NoiseSpec::noiseless(),
            seed: None,
            stationary_min_samples: stationary.min_samples,
            motion_threshold: stationary.motion_threshold,
            sweep_rate: SweepConfig::default().sample_rate,
            sweep_length: 0.1,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let config: RunConfig = match path {
            Some(p) => crate::read_json(p)?,
            None => Self::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        self.estimator().validate()?;
        self.noise.validate()?;
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.g_mag) || !positive(self.sweep_rate) || !positive(self.sweep_length) {
            return Err(Failure::Usage("g_mag, sweep_rate and sweep_length must be positive".into()));
        }
        if !positive(self.motion_threshold) {
            return Err(Failure::Usage("motion_threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn rls(&self) -> RlsConfig {
        RlsConfig {
            gamma_pos: self.gamma_pos,
            n_lag: self.n_lag,
            epsilon_init: self.epsilon_init,
            prime_queue: self.prime_queue,
        }
    }

    pub fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            sg: self.sg,
            rls: self.rls(),
            gamma_rot: self.gamma_rot,
            pos_threshold: self.pos_threshold,
            rot_threshold_deg: self.rot_threshold_deg,
            stop_on_convergence: self.stop_on_convergence,
        }
    }

    pub fn stationary(&self) -> StationaryConfig {
        StationaryConfig {
            min_samples: self.stationary_min_samples,
            motion_threshold: self.motion_threshold,
            sg: self.sg,
        }
    }

    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            sg: self.sg,
            rls: self.rls(),
            sample_rate: self.sweep_rate,
            ..SweepConfig::default()
        }
    }
}
