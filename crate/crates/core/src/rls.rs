//! Recursive least-squares estimation of the relative position of two IMUs
//! on one rigid link.
//!
//! For IMUs `A` and `P` with relative rotation `R_AP`, rigid-body kinematics
//! give the linear model `F = Ω̄ r` with
//!
//! * `F = R_AP f_P − f_A` (gravity cancels),
//! * `Ω(ω) = [ω×]² + [ω̇×]`,
//! * `Ω̄ = ½(Ω(ω_A) + R_AP Ω(ω_P) R_APᵀ)`.
//!
//! The quadratic dependence of `Ω` on noisy `ω` biases the residual mean;
//! [`k_omega_correction`] removes that bias. Each sample is weighted by the
//! inverse of the covariance of the last `N_lag` residuals.

use std::collections::VecDeque;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{skew, sym_pinv3};

/// Singular values of the residual covariance below this fraction of the
/// largest are dropped in the pseudoinverse.
pub const PINV_RELATIVE_TOLERANCE: f64 = 1e-10;

/// `Ω(ω) = [ω×]² + [ω̇×]`.
pub fn omega_matrix(omega: &Vector3<f64>, omega_dot: &Vector3<f64>) -> Matrix3<f64> {
    let s = skew(omega);
    s * s + skew(omega_dot)
}

/// `Ω̄ = ½(Ω(ω_A, ω̇_A) + R_AP Ω(ω_P, ω̇_P) R_APᵀ)`.
pub fn averaged_omega(
    omega_a: &Vector3<f64>,
    omega_dot_a: &Vector3<f64>,
    omega_p: &Vector3<f64>,
    omega_dot_p: &Vector3<f64>,
    r_ap: &Matrix3<f64>,
) -> Matrix3<f64> {
    (omega_matrix(omega_a, omega_dot_a) + r_ap * omega_matrix(omega_p, omega_dot_p) * r_ap.transpose())
        * 0.5
}

/// `K = ½[tr(Σ_A + Σ_P) I − (Σ_A + R_AP Σ_P R_APᵀ)]`.
///
/// `E[[(ω+ε)×]²] = [ω×]² − (tr(Σ) I − Σ)`, so adding `K` to the averaged
/// matrix cancels the noise-induced bias.
pub fn k_omega_correction(
    sigma_a: &Matrix3<f64>,
    sigma_p: &Matrix3<f64>,
    r_ap: &Matrix3<f64>,
) -> Matrix3<f64> {
    let tr = (sigma_a + sigma_p).trace();
    (Matrix3::identity() * tr - (sigma_a + r_ap * sigma_p * r_ap.transpose())) * 0.5
}

/// `F = R_AP f_P − f_A`.
pub fn force_difference(f_a: &Vector3<f64>, f_p: &Vector3<f64>, r_ap: &Matrix3<f64>) -> Vector3<f64> {
    r_ap * f_p - f_a
}

/// One time-aligned pair of calibrated, filtered IMU readings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionSample {
    pub t: f64,
    pub f_a: Vector3<f64>,
    pub f_p: Vector3<f64>,
    pub omega_a: Vector3<f64>,
    pub omega_p: Vector3<f64>,
    pub omega_dot_a: Vector3<f64>,
    pub omega_dot_p: Vector3<f64>,
}

impl MotionSample {
    pub fn is_finite(&self) -> bool {
        [
            self.f_a,
            self.f_p,
            self.omega_a,
            self.omega_p,
            self.omega_dot_a,
            self.omega_dot_p,
        ]
        .iter()
        .all(|v| v.iter().all(|x| x.is_finite()))
            && self.t.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlsConfig {
    /// Forgetting factor `γ_pos` in `(0, 1]`.
    pub gamma_pos: f64,
    /// Length of the residual queue used for the weighting covariance.
    pub n_lag: usize,
    /// Initial information `P⁻¹ = ε I`.
    pub epsilon_init: f64,
    /// Spend the first `n_lag` samples filling the residual queue without
    /// updating the estimate. Without this, the zero-filled queue makes the
    /// weighting covariance tiny at start-up, so the first samples (taken
    /// while the orientation estimate is still rough) receive weights up to
    /// `n_lag` times larger than later ones and bias the estimate for a long time.
    #[serde(default = "default_prime_queue")]
    pub prime_queue: bool,
}

fn default_prime_queue() -> bool {
    true
}

impl Default for RlsConfig {
    fn default() -> Self {
        Self {
            gamma_pos: 1.0,
            n_lag: 100,
            epsilon_init: 1e-6,
            prime_queue: true,
        }
    }
}

impl RlsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_pos > 0.0 && self.gamma_pos <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "gamma_pos must lie in (0, 1], got {}",
                self.gamma_pos
            )));
        }
        if self.n_lag < 3 {
            return Err(Error::InvalidInput(format!(
                "n_lag must be at least 3, got {}",
                self.n_lag
            )));
        }
        if !(self.epsilon_init > 0.0) || !self.epsilon_init.is_finite() {
            return Err(Error::InvalidInput(format!(
                "epsilon_init must be positive, got {}",
                self.epsilon_init
            )));
        }
        Ok(())
    }
}

/// Estimate returned after every step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionEstimate {
    pub r_hat: Vector3<f64>,
    pub covariance: Matrix3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlsState {
    config: RlsConfig,
    /// Information matrix `P⁻¹`.
    p_inv: Matrix3<f64>,
    /// Information vector `Q`.
    q: Vector3<f64>,
    r_hat: Vector3<f64>,
    diffs: VecDeque<Vector3<f64>>,
    /// Samples that only filled the queue.
    primed: usize,
    steps: usize,
}

impl RlsState {
    pub fn new(config: RlsConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            p_inv: Matrix3::identity() * config.epsilon_init,
            q: Vector3::zeros(),
            r_hat: Vector3::zeros(),
            diffs: std::iter::repeat_n(Vector3::zeros(), config.n_lag).collect(),
            primed: 0,
            steps: 0,
        })
    }

    pub fn config(&self) -> &RlsConfig {
        &self.config
    }

    pub fn information(&self) -> &Matrix3<f64> {
        &self.p_inv
    }

    pub fn information_vector(&self) -> &Vector3<f64> {
        &self.q
    }

    pub fn r_hat(&self) -> &Vector3<f64> {
        &self.r_hat
    }

    pub fn residuals(&self) -> &VecDeque<Vector3<f64>> {
        &self.diffs
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `Σ_r = (P⁻¹)⁻¹`. The information matrix can be very ill-conditioned
    /// (prior `ε` next to large data terms), so the inverse goes through a
    /// Cholesky factorization, with an eigen-decomposition fallback.
    pub fn covariance(&self) -> Matrix3<f64> {
        if let Some(ch) = self.p_inv.cholesky() {
            let inv = ch.inverse();
            return (inv + inv.transpose()) * 0.5;
        }
        let eig = SymmetricEigen::new(self.p_inv);
        let floor = self.config.epsilon_init * 1e-6;
        let inv_vals = eig.eigenvalues.map(|l| 1.0 / l.max(floor));
        eig.eigenvectors * Matrix3::from_diagonal(&inv_vals) * eig.eigenvectors.transpose()
    }

    pub fn estimate(&self) -> PositionEstimate {
        PositionEstimate {
            r_hat: self.r_hat,
            covariance: self.covariance(),
        }
    }

    /// Residual covariance `C = Σ δδᵀ / (N_lag − 1)` over the queue.
    pub fn residual_covariance(&self) -> Matrix3<f64> {
        let mut c = Matrix3::zeros();
        for d in &self.diffs {
            c += d * d.transpose();
        }
        c / (self.config.n_lag - 1) as f64
    }

    /// One full update from a motion sample.
    ///
    /// The residual `δ = F − Ω̄₀ r̂` is computed with the previous estimate and
    /// pushed into the fixed-length queue before the weighting covariance is
    /// formed. A singular covariance (early on, or with noiseless data) is
    /// handled by its pseudoinverse. With `prime_queue`, the first `n_lag`
    /// calls only enqueue.
    pub fn step(
        &mut self,
        sample: &MotionSample,
        r_ap: &Matrix3<f64>,
        sigma_omega_a: &Matrix3<f64>,
        sigma_omega_p: &Matrix3<f64>,
    ) -> PositionEstimate {
        let f = force_difference(&sample.f_a, &sample.f_p, r_ap);
        let omega0 = averaged_omega(
            &sample.omega_a,
            &sample.omega_dot_a,
            &sample.omega_p,
            &sample.omega_dot_p,
            r_ap,
        ) + k_omega_correction(sigma_omega_a, sigma_omega_p, r_ap);

        self.diffs.push_back(f - omega0 * self.r_hat);
        self.diffs.pop_front();
        if self.config.prime_queue && self.primed < self.config.n_lag {
            self.primed += 1;
            return self.estimate();
        }
        let weight = sym_pinv3(&self.residual_covariance(), PINV_RELATIVE_TOLERANCE);
        self.accumulate(&omega0, &f, &weight)
    }

    /// Adds one weighted observation `F = Ω̄₀ r` to the information form and
    /// re-solves for `r̂`.
    pub fn accumulate(
        &mut self,
        omega0: &Matrix3<f64>,
        f: &Vector3<f64>,
        weight: &Matrix3<f64>,
    ) -> PositionEstimate {
        let g = self.config.gamma_pos;
        let wt = omega0.transpose() * weight;
        let update = wt * omega0 * g;
        self.p_inv += (update + update.transpose()) * 0.5;
        self.q += wt * f * g;
        if let Some(r) = self.p_inv.cholesky().map(|c| c.solve(&self.q)) {
            self.r_hat = r;
        }
        self.steps += 1;
        self.estimate()
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.config).expect("config validated at construction");
    }
}

/// `sqrt(tr Σ)`; twice this value is reported as the 95th-percentile radius.
pub fn covariance_summary(sigma: &Matrix3<f64>) -> Result<f64> {
    let tr = sigma.trace();
    if tr < 0.0 || tr.is_nan() {
        return Err(Error::Internal(format!("covariance has negative trace {tr}")));
    }
    Ok(tr.sqrt())
}
