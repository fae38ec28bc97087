//! IMU calibration: gyro bias and noise covariances from a stationary
//! segment, accelerometer bias and shape from an ellipsoid fit to a
//! slow-rotation segment.

use nalgebra::{DMatrix, Matrix3, Matrix6, SymmetricEigen, Vector3, Vector6, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_sym_psd3, mean_cov3, sym_sqrt3};
use crate::sg::{smooth, SgConfig};
use crate::types::ImuSample;

pub const STANDARD_GRAVITY: f64 = 9.80665;

/// Per-IMU calibration, applied as `ω' = ω − b_ω`, `f' = S (f − b_f)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    #[serde(with = "crate::serde_nalgebra::vec3")]
    pub gyro_bias: Vector3<f64>,
    #[serde(rename = "Sigma_omega", with = "crate::serde_nalgebra::mat3")]
    pub sigma_omega: Matrix3<f64>,
    #[serde(rename = "Sigma_omega_dot", with = "crate::serde_nalgebra::mat3")]
    pub sigma_omega_dot: Matrix3<f64>,
    #[serde(rename = "Sigma_f", with = "crate::serde_nalgebra::mat3")]
    pub sigma_f: Matrix3<f64>,
    #[serde(with = "crate::serde_nalgebra::vec3")]
    pub accel_bias: Vector3<f64>,
    #[serde(with = "crate::serde_nalgebra::mat3")]
    pub accel_shape: Matrix3<f64>,
    pub g_mag: f64,
}

impl Default for CalibrationProfile {
    fn default() -> Self {
        Self::identity()
    }
}

impl CalibrationProfile {
    /// No correction and zero noise.
    pub fn identity() -> Self {
        Self {
            gyro_bias: Vector3::zeros(),
            sigma_omega: Matrix3::zeros(),
            sigma_omega_dot: Matrix3::zeros(),
            sigma_f: Matrix3::zeros(),
            accel_bias: Vector3::zeros(),
            accel_shape: Matrix3::identity(),
            g_mag: STANDARD_GRAVITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in [
            ("Sigma_omega", &self.sigma_omega),
            ("Sigma_omega_dot", &self.sigma_omega_dot),
            ("Sigma_f", &self.sigma_f),
        ] {
            if !is_sym_psd3(m) {
                return Err(Error::InvalidInput(format!("{name} is not symmetric PSD")));
            }
        }
        let s = &self.accel_shape;
        if (s - s.transpose()).abs().max() > 1e-9 * s.abs().max()
            || SymmetricEigen::new(*s).eigenvalues.min() <= 0.0
        {
            return Err(Error::InvalidInput(
                "accel_shape must be symmetric positive definite".into(),
            ));
        }
        if !(self.g_mag > 0.0) || !self.g_mag.is_finite() {
            return Err(Error::InvalidInput("g_mag must be positive".into()));
        }
        if self.gyro_bias.iter().chain(self.accel_bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite bias".into()));
        }
        Ok(())
    }
}

pub fn apply_calibration(sample: &ImuSample, profile: &CalibrationProfile) -> ImuSample {
    ImuSample {
        t: sample.t,
        gyro: sample.gyro - profile.gyro_bias,
        accel: profile.accel_shape * (sample.accel - profile.accel_bias),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryConfig {
    pub min_samples: usize,
    /// Largest per-axis gyro standard deviation (rad/s) accepted as "not moving".
    pub motion_threshold: f64,
    pub sg: SgConfig,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        Self {
            min_samples: 100,
            motion_threshold: 0.05,
            sg: SgConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryStats {
    pub gyro_bias: Vector3<f64>,
    pub sigma_omega: Matrix3<f64>,
    pub sigma_omega_dot: Matrix3<f64>,
    pub sigma_f: Matrix3<f64>,
    pub accel_mean: Vector3<f64>,
}

/// Gyro bias and the sample covariances of the gyro, its filtered derivative
/// and the accelerometer over a stationary segment.
pub fn stationary_stats(samples: &[ImuSample], config: &StationaryConfig) -> Result<StationaryStats> {
    let needed = config.min_samples.max(config.sg.window_len());
    if samples.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: samples.len(),
        });
    }
    let gyro: Vec<Vector3<f64>> = samples.iter().map(|s| s.gyro).collect();
    let accel: Vec<Vector3<f64>> = samples.iter().map(|s| s.accel).collect();
    let (gyro_bias, sigma_omega) = mean_cov3(&gyro);
    let std_dev = (0..3).map(|i| sigma_omega[(i, i)].sqrt()).fold(0.0, f64::max);
    if !(std_dev <= config.motion_threshold) {
        return Err(Error::NotStationary {
            std_dev,
            threshold: config.motion_threshold,
        });
    }
    let (accel_mean, sigma_f) = mean_cov3(&accel);

    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let values = DMatrix::from_fn(samples.len(), 3, |r, c| gyro[r][c]);
    let filtered = smooth(&times, &values, &config.sg)?;
    let derivs: Vec<Vector3<f64>> = filtered
        .iter()
        .map(|p| Vector3::new(p.derivative[0], p.derivative[1], p.derivative[2]))
        .collect();
    let (_, sigma_omega_dot) = mean_cov3(&derivs);

    Ok(StationaryStats {
        gyro_bias,
        sigma_omega,
        sigma_omega_dot,
        sigma_f,
        accel_mean,
    })
}

/// General quadric `aX² + bXY + cXZ + dY² + eYZ + fZ² + pX + qY + rZ + s = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadricParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub s: f64,
}

impl QuadricParams {
    pub fn from_array(v: [f64; 10]) -> Self {
        let [a, b, c, d, e, f, p, q, r, s] = v;
        Self {
            a,
            b,
            c,
            d,
            e,
            f,
            p,
            q,
            r,
            s,
        }
    }

    pub fn to_array(&self) -> [f64; 10] {
        [
            self.a, self.b, self.c, self.d, self.e, self.f, self.p, self.q, self.r, self.s,
        ]
    }

    /// Symmetric quadratic-form matrix, linear term and constant.
    pub fn parts(&self) -> (Matrix3<f64>, Vector3<f64>, f64) {
        let m = Matrix3::new(
            self.a,
            0.5 * self.b,
            0.5 * self.c,
            0.5 * self.b,
            self.d,
            0.5 * self.e,
            0.5 * self.c,
            0.5 * self.e,
            self.f,
        );
        (m, Vector3::new(self.p, self.q, self.r), self.s)
    }

    pub fn from_parts(m: &Matrix3<f64>, u: &Vector3<f64>, s: f64) -> Self {
        Self::from_array([
            m[(0, 0)],
            m[(0, 1)] + m[(1, 0)],
            m[(0, 2)] + m[(2, 0)],
            m[(1, 1)],
            m[(1, 2)] + m[(2, 1)],
            m[(2, 2)],
            u.x,
            u.y,
            u.z,
            s,
        ])
    }

    /// Scales to unit coefficient norm with a positive-definite quadratic part
    /// when possible.
    pub fn normalized(&self) -> Self {
        let arr = self.to_array();
        let n = arr.iter().map(|v| v * v).sum::<f64>().sqrt();
        let sign = if self.a + self.d + self.f < 0.0 { -1.0 } else { 1.0 };
        Self::from_array(arr.map(|v| sign * v / n))
    }

    /// Center and normalized shape `E` with `(x − c)ᵀ E (x − c) = 1`, if the
    /// quadric is a real ellipsoid.
    pub fn ellipsoid(&self) -> Option<(Vector3<f64>, Matrix3<f64>)> {
        let (m, u, s) = self.parts();
        let center = -0.5 * m.try_inverse()? * u;
        let k = center.dot(&(m * center)) - s;
        if !(k != 0.0) || !k.is_finite() {
            return None;
        }
        let e = m / k;
        let eig = SymmetricEigen::new(e);
        (eig.eigenvalues.min() > 0.0).then_some((center, e))
    }

    pub fn is_ellipsoid(&self) -> bool {
        self.ellipsoid().is_some()
    }
}

/// Result of [`ellipsoid_fit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidFit {
    pub quadric: QuadricParams,
    /// The unconstrained minimizer was not an ellipsoid and the
    /// ellipsoid-specific constrained solution was used instead.
    pub constrained: bool,
    /// RMS of `‖E^{1/2}(x − c)‖ − 1` over the points.
    pub radial_rms: f64,
}

/// Centered data whose smallest-to-largest spread ratio falls below this is rejected.
pub const MIN_SPREAD_RATIO: f64 = 1e-2;
/// A constrained ellipsoid with a larger relative radial RMS residual does not fit the data.
pub const MAX_CONSTRAINED_RADIAL_RMS: f64 = 0.05;

/// Least-squares quadric through `points`, restricted to ellipsoids.
///
/// Points are centered and scaled before building the design matrix. The
/// unconstrained solution is the right singular vector of the smallest
/// singular value. If it is not an ellipsoid, the fit is repeated under the
/// constraint `4J − I² = 1`, which admits only ellipsoids, by solving the
/// corresponding generalized symmetric eigenproblem.
pub fn ellipsoid_fit(points: &[Vector3<f64>]) -> Result<EllipsoidFit> {
    if points.len() < 10 {
        return Err(Error::InsufficientData {
            needed: 10,
            got: points.len(),
        });
    }
    if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidInput("non-finite point".into()));
    }
    let (mean, cov) = mean_cov3(points);
    let spread = SymmetricEigen::new(cov).eigenvalues;
    let (lo, hi) = (spread.min().max(0.0), spread.max());
    if !(hi > 0.0) || (lo / hi).sqrt() < MIN_SPREAD_RATIO {
        return Err(Error::DegenerateData(format!(
            "points do not span three dimensions (spread ratio {:.3e})",
            if hi > 0.0 { (lo / hi).sqrt() } else { 0.0 }
        )));
    }
    let scale = cov.trace().sqrt();
    let ys: Vec<Vector3<f64>> = points.iter().map(|p| (p - mean) / scale).collect();

    let design = DMatrix::from_fn(ys.len(), 10, |i, j| {
        let y = &ys[i];
        match j {
            0 => y.x * y.x,
            1 => y.x * y.y,
            2 => y.x * y.z,
            3 => y.y * y.y,
            4 => y.y * y.z,
            5 => y.z * y.z,
            6 => y.x,
            7 => y.y,
            8 => y.z,
            _ => 1.0,
        }
    });

    let svd = SVD::new(design.clone(), false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Internal("SVD did not return right singular vectors".into()))?;
    let imin = svd.singular_values.imin();
    let v: Vec<f64> = v_t.row(imin).iter().copied().collect();
    let mut local = QuadricParams::from_array(v.try_into().expect("ten coefficients"));
    let mut constrained = false;

    if !local.is_ellipsoid() {
        local = constrained_fit(&design)?;
        constrained = true;
        if !local.is_ellipsoid() {
            return Err(Error::ConstraintFailure(
                "constrained solution is not an ellipsoid".into(),
            ));
        }
    }

    let radial_rms = radial_rms(&local, &ys);
    if constrained && !(radial_rms <= MAX_CONSTRAINED_RADIAL_RMS) {
        return Err(Error::ConstraintFailure(format!(
            "best ellipsoid leaves a relative radial RMS residual of {radial_rms:.3}"
        )));
    }

    // Undo y = (x − mean) / scale.
    let (ml, ul, sl) = local.parts();
    let m = ml / (scale * scale);
    let u = ul / scale - 2.0 * m * mean;
    let s = mean.dot(&(m * mean)) - ul.dot(&mean) / scale + sl;
    Ok(EllipsoidFit {
        quadric: QuadricParams::from_parts(&m, &u, s).normalized(),
        constrained,
        radial_rms,
    })
}

fn radial_rms(quadric: &QuadricParams, ys: &[Vector3<f64>]) -> f64 {
    let Some((center, e)) = quadric.ellipsoid() else {
        return f64::INFINITY;
    };
    let ss: f64 = ys
        .iter()
        .map(|y| {
            let d = y - center;
            (d.dot(&(e * d)).sqrt() - 1.0).powi(2)
        })
        .sum();
    (ss / ys.len() as f64).sqrt()
}

/// Maximizes `v₁ᵀ C v₁ / v₁ᵀ S̃ v₁` where `C` encodes `4J − I²` on the
/// quadratic coefficients and `S̃` is the scatter matrix with the linear
/// coefficients eliminated.
fn constrained_fit(design: &DMatrix<f64>) -> Result<QuadricParams> {
    let scatter = design.transpose() * design;
    let s11: Matrix6<f64> = scatter.fixed_view::<6, 6>(0, 0).into_owned();
    let s12 = scatter.fixed_view::<6, 4>(0, 6).into_owned();
    let s22 = scatter.fixed_view::<4, 4>(6, 6).into_owned();
    let s22_inv = s22
        .try_inverse()
        .ok_or_else(|| Error::DegenerateData("singular linear-term scatter".into()))?;
    let reduced = s11 - s12 * s22_inv * s12.transpose();
    let reduced = (reduced + reduced.transpose()) * 0.5;
    let chol = reduced
        .cholesky()
        .ok_or_else(|| Error::DegenerateData("reduced scatter is not positive definite".into()))?;

    // Coefficient order (a, b, c, d, e, f); a, d, f are the diagonal terms.
    let mut cmat = Matrix6::from_diagonal_element(-1.0);
    for (i, j) in [(0, 3), (0, 5), (3, 5)] {
        cmat[(i, j)] = 1.0;
        cmat[(j, i)] = 1.0;
    }
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Internal("singular Cholesky factor".into()))?;
    let sym = l_inv * cmat * l_inv.transpose();
    let eig = SymmetricEigen::new((sym + sym.transpose()) * 0.5);
    let top = eig.eigenvalues.imax();
    if !(eig.eigenvalues[top] > 0.0) {
        return Err(Error::ConstraintFailure(
            "no solution satisfies the ellipsoid constraint".into(),
        ));
    }
    let w: Vector6<f64> = eig.eigenvectors.column(top).into_owned();
    let v1 = l_inv.transpose() * w;
    let v2 = -s22_inv * s12.transpose() * v1;
    Ok(QuadricParams::from_array([
        v1[0], v1[1], v1[2], v1[3], v1[4], v1[5], v2[0], v2[1], v2[2], v2[3],
    ]))
}

/// Splits an ellipsoid into the accelerometer bias (its center) and the
/// correction `S = g E^{1/2}` that maps it onto the sphere of radius `g_mag`.
pub fn quadric_to_calibration(
    quadric: &QuadricParams,
    g_mag: f64,
) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    if !(g_mag > 0.0) {
        return Err(Error::InvalidInput("g_mag must be positive".into()));
    }
    let (center, e) = quadric
        .ellipsoid()
        .ok_or_else(|| Error::InvalidInput("quadric is not an ellipsoid".into()))?;
    Ok((center, sym_sqrt3(&e) * g_mag))
}

/// Full calibration from a stationary segment and a slow-rotation segment.
pub fn calibrate(
    stationary: &[ImuSample],
    rotation: &[ImuSample],
    g_mag: f64,
    config: &StationaryConfig,
) -> Result<CalibrationProfile> {
    let stats = stationary_stats(stationary, config)?;
    let points: Vec<Vector3<f64>> = rotation.iter().map(|s| s.accel).collect();
    let fit = ellipsoid_fit(&points)?;
    let (accel_bias, accel_shape) = quadric_to_calibration(&fit.quadric, g_mag)?;
    let profile = CalibrationProfile {
        gyro_bias: stats.gyro_bias,
        sigma_omega: stats.sigma_omega,
        sigma_omega_dot: stats.sigma_omega_dot,
        sigma_f: accel_shape * stats.sigma_f * accel_shape.transpose(),
        accel_bias,
        accel_shape,
        g_mag,
    };
    profile.validate()?;
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
        let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
        (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let rho = (1.0 - z * z).sqrt();
                let th = golden * i as f64;
                Vector3::new(rho * th.cos(), rho * th.sin(), z)
            })
            .collect()
    }

    #[test]
    fn identity_profile_is_noop() {
        let s = ImuSample::new(1.5, Vector3::new(0.1, 0.2, 0.3), Vector3::new(-1.0, 2.0, 9.0));
        assert_eq!(apply_calibration(&s, &CalibrationProfile::identity()), s);
    }

    #[test]
    fn gyro_at_bias_is_zero() {
        let mut p = CalibrationProfile::identity();
        p.gyro_bias = Vector3::new(0.01, -0.02, 0.005);
        let s = ImuSample::new(0.0, p.gyro_bias, Vector3::z());
        assert_eq!(apply_calibration(&s, &p).gyro, Vector3::zeros());
    }

    #[test]
    fn identical_samples_have_zero_covariance() {
        let samples: Vec<ImuSample> = (0..200)
            .map(|i| ImuSample::new(i as f64 * 0.01, Vector3::new(0.01, 0.0, -0.02), Vector3::new(0.0, 0.0, 9.8)))
            .collect();
        let st = stationary_stats(&samples, &StationaryConfig::default()).unwrap();
        assert!((st.gyro_bias - Vector3::new(0.01, 0.0, -0.02)).norm() < 1e-15);
        assert!(st.sigma_omega.norm() < 1e-25);
        assert!(st.sigma_omega_dot.norm() < 1e-20);
        assert!(st.sigma_f.norm() < 1e-25);
    }

    #[test]
    fn too_few_samples() {
        let samples: Vec<ImuSample> = (0..50)
            .map(|i| ImuSample::new(i as f64 * 0.01, Vector3::zeros(), Vector3::z()))
            .collect();
        assert_eq!(
            stationary_stats(&samples, &StationaryConfig::default()),
            Err(Error::InsufficientData { needed: 100, got: 50 })
        );
    }

    #[test]
    fn shaking_is_rejected() {
        let samples: Vec<ImuSample> = (0..300)
            .map(|i| {
                let t = i as f64 * 0.01;
                ImuSample::new(t, Vector3::new((6.0 * t).sin(), 0.0, 0.0), Vector3::z())
            })
            .collect();
        assert!(matches!(
            stationary_stats(&samples, &StationaryConfig::default()),
            Err(Error::NotStationary { .. })
        ));
    }

    #[test]
    fn unit_sphere_quadric() {
        let fit = ellipsoid_fit(&fibonacci_sphere(500)).unwrap();
        let q = fit.quadric;
        assert!(!fit.constrained);
        assert!((q.a - q.d).abs() < 1e-9 && (q.a - q.f).abs() < 1e-9);
        for v in [q.b, q.c, q.e, q.p, q.q, q.r] {
            assert!(v.abs() < 1e-9);
        }
        assert!((q.s + q.a).abs() < 1e-9);
        assert!(q.a > 0.0);
        let n: f64 = q.to_array().iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn offset_sphere_center() {
        let c = Vector3::new(0.3, -0.2, 0.1);
        let pts: Vec<_> = fibonacci_sphere(2000).iter().map(|u| u * 9.81 + c).collect();
        let fit = ellipsoid_fit(&pts).unwrap();
        let (center, _) = fit.quadric.ellipsoid().unwrap();
        assert!((center - c).norm() < 1e-6);
    }

    #[test]
    fn planar_points_are_degenerate() {
        let pts: Vec<_> = (0..100)
            .map(|i| {
                let a = i as f64 * 0.1;
                Vector3::new(9.8 * a.cos(), 9.8 * a.sin(), 0.0)
            })
            .collect();
        assert!(matches!(ellipsoid_fit(&pts), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn unit_sphere_calibration_is_identity() {
        let q = QuadricParams::from_array([1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0]);
        let (b, s) = quadric_to_calibration(&q, 1.0).unwrap();
        assert!(b.norm() < 1e-15);
        assert!((s - Matrix3::identity()).norm() < 1e-15);
    }

    #[test]
    fn axis_aligned_ellipsoid_shape() {
        let (ax, ay, az) = (9.0_f64, 9.81_f64, 10.5_f64);
        let q = QuadricParams::from_array([
            1.0 / (ax * ax), 0.0, 0.0, 1.0 / (ay * ay), 0.0, 1.0 / (az * az), 0.0, 0.0, 0.0, -1.0,
        ])
        .normalized();
        let g = STANDARD_GRAVITY;
        let (b, s) = quadric_to_calibration(&q, g).unwrap();
        assert!(b.norm() < 1e-12);
        let expected = Matrix3::from_diagonal(&Vector3::new(g / ax, g / ay, g / az));
        assert!((s - expected).norm() < 1e-12);
    }

    #[test]
    fn hyperboloid_quadric_rejected() {
        let q = QuadricParams::from_array([1.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0]);
        assert!(matches!(quadric_to_calibration(&q, 1.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn hyperboloid_data_fails_constraint() {
        let mut pts = Vec::new();
        for i in 0..40 {
            for j in 0..40 {
                let th = i as f64 * std::f64::consts::TAU / 40.0;
                let h = -1.5 + 3.0 * j as f64 / 39.0;
                let rho = (1.0 + h * h).sqrt();
                pts.push(Vector3::new(rho * th.cos(), rho * th.sin(), h));
            }
        }
        assert!(matches!(ellipsoid_fit(&pts), Err(Error::ConstraintFailure(_))));
    }

    #[test]
    fn profile_json_field_names() {
        let json = serde_json::to_value(CalibrationProfile::identity()).unwrap();
        for key in ["gyro_bias", "Sigma_omega", "Sigma_omega_dot", "Sigma_f", "accel_bias", "accel_shape", "g_mag"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(json["accel_shape"][0], serde_json::json!([1.0, 0.0, 0.0]));
    }

    #[test]
    fn invalid_profile_detected() {
        let mut p = CalibrationProfile::identity();
        p.accel_shape = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, 1.0));
        assert!(p.validate().is_err());
    }
}
