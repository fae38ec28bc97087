//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Moore-Penrose pseudoinverse of a symmetric 3x3 matrix.
///
/// Eigenvalues with magnitude below `rel_tol * max|eigenvalue|` are treated as zero.
pub fn sym_pinv3(m: &Matrix3<f64>, rel_tol: f64) -> Matrix3<f64> {
    let eig = SymmetricEigen::new(*m);
    let max = eig.eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if max == 0.0 || !max.is_finite() {
        return Matrix3::zeros();
    }
    let cutoff = rel_tol * max;
    let mut out = Matrix3::zeros();
    for i in 0..3 {
        let lambda = eig.eigenvalues[i];
        if lambda.abs() > cutoff {
            let v = eig.eigenvectors.column(i);
            out += v * v.transpose() / lambda;
        }
    }
    out
}

/// Symmetric square root of a symmetric positive semidefinite matrix.
pub fn sym_sqrt3(m: &Matrix3<f64>) -> Matrix3<f64> {
    let eig = SymmetricEigen::new(*m);
    let mut out = Matrix3::zeros();
    for i in 0..3 {
        let v = eig.eigenvectors.column(i);
        out += v * v.transpose() * eig.eigenvalues[i].max(0.0).sqrt();
    }
    out
}

/// Checks that `m` is symmetric and positive semidefinite within a relative tolerance.
pub fn is_sym_psd3(m: &Matrix3<f64>) -> bool {
    if m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let scale = m.abs().max().max(f64::MIN_POSITIVE);
    if (m - m.transpose()).abs().max() > 1e-9 * scale {
        return false;
    }
    let eig = SymmetricEigen::new(*m);
    eig.eigenvalues.iter().all(|&l| l >= -1e-12 * scale)
}

/// Sample mean and unbiased sample covariance of a set of 3-vectors.
pub fn mean_cov3(xs: &[Vector3<f64>]) -> (Vector3<f64>, Matrix3<f64>) {
    let n = xs.len();
    if n == 0 {
        return (Vector3::zeros(), Matrix3::zeros());
    }
    let mean = xs.iter().fold(Vector3::zeros(), |acc, x| acc + x) / n as f64;
    if n < 2 {
        return (mean, Matrix3::zeros());
    }
    let mut cov = Matrix3::zeros();
    for x in xs {
        let d = x - mean;
        cov += d * d.transpose();
    }
    (mean, cov / (n - 1) as f64)
}
