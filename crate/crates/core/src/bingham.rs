//! Bingham-distribution linear filter for the relative orientation of two
//! IMUs on one rigid body.
//!
//! Every angular-velocity pair `(ω_i, ω_j)` with `ω_i = R_ij ω_j` yields the
//! linear constraint `H(ω_i, ω_j) q = 0` on the quaternion of `R_ij`. The
//! parameter matrix `A` of the distribution `p(q) ∝ exp(qᵀ A q)` accumulates
//! the negative quadratic penalty of these constraints; its top eigenvector is
//! the mode.

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_sym_psd3, skew};
use crate::quat::Quaternion;

/// Covariance of the uniform distribution over unit quaternions.
pub const UNIFORM_QUAT_VARIANCE: f64 = 0.25;

/// Regularization added to a singular `Σ^H` before inversion.
pub const SIGMA_H_REGULARIZATION: f64 = 1e-12;

/// Relative eigenvalue gap below which the mode is considered undetermined.
const DEGENERATE_GAP: f64 = 1e-10;

/// Constraint matrix with `H(a, b) q = 0` iff `a = R(q) b` for unit `q`.
///
/// For unit `q`, `‖H(a, b) q‖ = ‖a − R(q) b‖`.
pub fn h_matrix(a: &Vector3<f64>, b: &Vector3<f64>) -> Matrix4<f64> {
    let d = a - b;
    let s = -skew(&(a + b));
    let mut h = Matrix4::zeros();
    for k in 0..3 {
        h[(0, k + 1)] = d[k];
        h[(k + 1, 0)] = -d[k];
        for l in 0..3 {
            h[(k + 1, l + 1)] = s[(k, l)];
        }
    }
    h
}

/// Column blocks of the 4x24 noise-mapping matrix:
/// `[H(e1,0) H(e2,0) H(e3,0) H(0,e1) H(0,e2) H(0,e3)]`.
pub fn noise_blocks() -> [Matrix4<f64>; 6] {
    let e = [Vector3::x(), Vector3::y(), Vector3::z()];
    let z = Vector3::zeros();
    [
        h_matrix(&e[0], &z),
        h_matrix(&e[1], &z),
        h_matrix(&e[2], &z),
        h_matrix(&z, &e[0]),
        h_matrix(&z, &e[1]),
        h_matrix(&z, &e[2]),
    ]
}

/// Covariance of `H(a + ε_a, b + ε_b) q − H(a, b) q` for zero-mean gyro noise
/// with covariances `sigma_a`, `sigma_b` and `q` uniform on the unit sphere.
///
/// Equal to `N (blockdiag(Σa, Σb) ⊗ Σq) Nᵀ` with `Σq = 0.25 I₄`.
pub fn sigma_h(sigma_a: &Matrix3<f64>, sigma_b: &Matrix3<f64>) -> Result<Matrix4<f64>> {
    if !is_sym_psd3(sigma_a) || !is_sym_psd3(sigma_b) {
        return Err(Error::InvalidInput(
            "gyro covariances must be symmetric positive semidefinite".into(),
        ));
    }
    let blocks = noise_blocks();
    let cov6 = |k: usize, l: usize| -> f64 {
        match (k < 3, l < 3) {
            (true, true) => sigma_a[(k, l)],
            (false, false) => sigma_b[(k - 3, l - 3)],
            _ => 0.0,
        }
    };
    let mut out = Matrix4::zeros();
    for k in 0..6 {
        for l in 0..6 {
            let c = cov6(k, l);
            if c != 0.0 {
                out += blocks[k] * blocks[l].transpose() * (c * UNIFORM_QUAT_VARIANCE);
            }
        }
    }
    Ok(out)
}

/// Mode of a Bingham distribution together with its eigen-spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinghamMode {
    /// Unit, sign-canonical top eigenvector (identity when `degenerate`).
    pub quaternion: Quaternion,
    /// Eigenvalues of `A`, sorted descending.
    pub eigenvalues: [f64; 4],
    /// The largest eigenvalue is repeated, so no unique mode exists.
    pub degenerate: bool,
}

impl BinghamMode {
    pub fn eigen_gap(&self) -> f64 {
        self.eigenvalues[0] - self.eigenvalues[1]
    }

    /// One-sigma rotation-angle dispersion (radians) around the mode.
    ///
    /// Along the softest direction `qᵀAq ≈ λ₁ − (λ₁ − λ₂) φ²`, so the quaternion
    /// arc `φ` has standard deviation `1/sqrt(2(λ₁ − λ₂))` and the rotation
    /// angle `2φ` twice that.
    pub fn angular_dispersion(&self) -> f64 {
        let gap = self.eigen_gap();
        if self.degenerate || !(gap > 0.0) {
            f64::INFINITY
        } else {
            2.0 / (2.0 * gap).sqrt()
        }
    }
}

/// Extracts the mode of `B(A)`.
pub fn bingham_mode(a: &Matrix4<f64>) -> BinghamMode {
    let eig = SymmetricEigen::new(*a);
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues = order.map(|i| eig.eigenvalues[i]);
    let scale = eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let degenerate = scale == 0.0 || eigenvalues[0] - eigenvalues[1] <= DEGENERATE_GAP * scale;
    let quaternion = if degenerate {
        Quaternion::identity()
    } else {
        let v = eig.eigenvectors.column(order[0]);
        let q = Quaternion::new(v[0], v[1], v[2], v[3]);
        q.normalize().map(|q| q.canonical()).unwrap_or(Quaternion::identity())
    };
    BinghamMode {
        quaternion,
        eigenvalues,
        degenerate,
    }
}

/// Recursive estimator of the relative rotation `R_ij` from angular-velocity pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinghamState {
    #[serde(with = "crate::serde_nalgebra::mat4")]
    pub a: Matrix4<f64>,
    pub gamma_rot: f64,
    #[serde(with = "crate::serde_nalgebra::mat4")]
    pub sigma_h_inv: Matrix4<f64>,
}

impl BinghamState {
    /// Starts from `A = 0` with `(Σ^H)⁻¹` precomputed from the two gyro covariances.
    pub fn new(sigma_i: &Matrix3<f64>, sigma_j: &Matrix3<f64>, gamma_rot: f64) -> Result<Self> {
        let sh = sigma_h(sigma_i, sigma_j)?;
        Self::with_sigma_h(&sh, gamma_rot)
    }

    pub fn with_sigma_h(sigma_h: &Matrix4<f64>, gamma_rot: f64) -> Result<Self> {
        if !(gamma_rot > 0.0 && gamma_rot <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "gamma_rot must lie in (0, 1], got {gamma_rot}"
            )));
        }
        let eig = SymmetricEigen::new(*sigma_h);
        let min = eig.eigenvalues.min();
        let regularized = if min > SIGMA_H_REGULARIZATION * (1.0 + eig.eigenvalues.max()) {
            *sigma_h
        } else {
            sigma_h + Matrix4::identity() * SIGMA_H_REGULARIZATION
        };
        let sigma_h_inv = regularized
            .try_inverse()
            .ok_or_else(|| Error::InvalidInput("Σ^H is not invertible".into()))?;
        Ok(Self {
            a: Matrix4::zeros(),
            gamma_rot,
            sigma_h_inv,
        })
    }

    /// Information increment `ΔA = −½ Hᵀ (Σ^H)⁻¹ H` for one angular-velocity pair.
    pub fn increment(&self, omega_i: &Vector3<f64>, omega_j: &Vector3<f64>) -> Matrix4<f64> {
        let h = h_matrix(omega_i, omega_j);
        let d = h.transpose() * self.sigma_h_inv * h * -0.5;
        (d + d.transpose()) * 0.5
    }

    /// `A ← γ_rot A + ΔA`.
    pub fn update(&mut self, omega_i: &Vector3<f64>, omega_j: &Vector3<f64>) {
        let delta = self.increment(omega_i, omega_j);
        self.a = self.a * self.gamma_rot + delta;
    }

    pub fn mode(&self) -> BinghamMode {
        bingham_mode(&self.a)
    }

    pub fn reset(&mut self) {
        self.a = Matrix4::zeros();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_rotation_in_null_space() {
        let a = Vector3::new(0.3, -2.0, 1.0);
        let h = h_matrix(&a, &a);
        assert_eq!(h * Quaternion::identity().to_vector(), nalgebra::Vector4::zeros());
    }

    #[test]
    fn quarter_turn_null_space() {
        // a = R(q) b with b = y, a = x requires a -90° turn about z
        let h4 = std::f64::consts::FRAC_PI_4;
        let q = Quaternion::new(h4.cos(), 0.0, 0.0, -h4.sin());
        let hm = h_matrix(&Vector3::x(), &Vector3::y());
        assert!((hm * q.to_vector()).norm() < 1e-15);
        let q_pos = Quaternion::new(h4.cos(), 0.0, 0.0, h4.sin());
        assert!((hm * q_pos.to_vector()).norm() > 1.0);
    }

    #[test]
    fn sigma_h_zero() {
        assert_eq!(sigma_h(&Matrix3::zeros(), &Matrix3::zeros()).unwrap(), Matrix4::zeros());
    }

    #[test]
    fn sigma_h_rejects_indefinite() {
        let bad = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, 1.0));
        assert!(matches!(sigma_h(&bad, &Matrix3::zeros()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn sigma_h_isotropic_closed_form() {
        // Σ_k N_k N_kᵀ = 3 I for each half, so Σ^H = 0.25 σ² 6 I
        let s2 = 0.01;
        let sh = sigma_h(&(Matrix3::identity() * s2), &(Matrix3::identity() * s2)).unwrap();
        assert!((sh - Matrix4::identity() * 1.5 * s2).norm() < 1e-15);
    }

    #[test]
    fn first_update_equals_increment() {
        let mut st = BinghamState::new(&(Matrix3::identity() * 1e-4), &(Matrix3::identity() * 1e-4), 1.0).unwrap();
        let wi = Vector3::new(0.1, 0.5, -0.3);
        let wj = Vector3::new(0.2, -0.1, 0.55);
        let d = st.increment(&wi, &wj);
        st.update(&wi, &wj);
        assert_eq!(st.a, d);
    }

    #[test]
    fn zero_noise_is_regularized() {
        let st = BinghamState::new(&Matrix3::zeros(), &Matrix3::zeros(), 1.0).unwrap();
        assert!(st.sigma_h_inv.iter().all(|v| v.is_finite()));
        assert!((st.sigma_h_inv - Matrix4::identity() * 1e12).norm() < 1.0);
    }

    #[test]
    fn bad_gamma_rejected() {
        assert!(BinghamState::new(&Matrix3::identity(), &Matrix3::identity(), 0.0).is_err());
        assert!(BinghamState::new(&Matrix3::identity(), &Matrix3::identity(), 1.5).is_err());
    }

    #[test]
    fn mode_of_diagonal() {
        let m = bingham_mode(&Matrix4::from_diagonal(&nalgebra::Vector4::new(0.0, -1.0, -1.0, -1.0)));
        assert!(!m.degenerate);
        assert_eq!(m.quaternion, Quaternion::identity());
        assert_eq!(m.eigenvalues, [0.0, -1.0, -1.0, -1.0]);
    }

    #[test]
    fn mode_of_zero_is_degenerate_identity() {
        let m = bingham_mode(&Matrix4::zeros());
        assert!(m.degenerate);
        assert_eq!(m.quaternion, Quaternion::identity());
        assert!(m.angular_dispersion().is_infinite());
    }

    #[test]
    fn mode_sign_is_canonical() {
        let q = Quaternion::new(-0.5, 0.5, -0.5, 0.5);
        let v = q.to_vector();
        let a = v * v.transpose() - Matrix4::identity();
        let m = bingham_mode(&a);
        assert!(m.quaternion.w > 0.0);
        assert!(m.quaternion.angle_to(&q) < 1e-9);
    }

    #[test]
    fn single_pair_leaves_mode_undetermined() {
        let mut st = BinghamState::new(&(Matrix3::identity() * 1e-4), &(Matrix3::identity() * 1e-4), 1.0).unwrap();
        st.update(&Vector3::new(0.0, 0.0, 1.0), &Vector3::new(0.0, 0.0, 1.0));
        assert!(st.mode().degenerate);
    }

    #[test]
    fn forgetting_converges_geometrically() {
        let mut st = BinghamState::new(&(Matrix3::identity() * 1e-3), &(Matrix3::identity() * 1e-3), 0.5).unwrap();
        let wi = Vector3::new(0.3, 0.1, -0.2);
        let wj = Vector3::new(0.1, 0.3, 0.2);
        let d = st.increment(&wi, &wj);
        for _ in 0..80 {
            st.update(&wi, &wj);
        }
        assert!((st.a - d * 2.0).norm() <= 1e-12 * d.norm());
    }
}
