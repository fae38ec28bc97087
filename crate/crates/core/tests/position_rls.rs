use imuchain::linalg::skew;
use imuchain::quat::Quaternion;
use imuchain::rls::{averaged_omega, k_omega_correction, omega_matrix, MotionSample, RlsConfig, RlsState};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gauss3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let v = nalgebra::Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    Quaternion::from_vector(&(v / v.norm())).to_rotation().unwrap()
}

#[test]
fn correction_removes_noise_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let r = random_rotation(&mut rng);
    let omega = Vector3::new(0.7, -0.3, 1.1);
    let (sa, sb) = (0.05, 0.08);
    let sigma_a = Matrix3::identity() * sa * sa;
    let sigma_p = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 0.5)) * sb * sb;
    let lp = sigma_p.map(f64::sqrt);
    let wp = r.transpose() * omega;
    let clean = averaged_omega(&omega, &Vector3::zeros(), &wp, &Vector3::zeros(), &r);
    let k = k_omega_correction(&sigma_a, &sigma_p, &r);
    let draws = 1_000_000;
    let mut sum = Matrix3::zeros();
    let mut sum_sq = Matrix3::zeros();
    for _ in 0..draws {
        let na = gauss3(&mut rng) * sa;
        let np = lp * gauss3(&mut rng);
        let m = averaged_omega(&(omega + na), &Vector3::zeros(), &(wp + np), &Vector3::zeros(), &r) - clean;
        sum += m;
        sum_sq += m.component_mul(&m);
    }
    let n = draws as f64;
    let mean = sum / n;
    let stderr = (sum_sq / n - mean.component_mul(&mean)).map(|v| (v / n).sqrt());
    // E[Ω̄(noisy)] = Ω̄(clean) − K within 3 standard errors.
    for i in 0..3 {
        for j in 0..3 {
            assert!((mean[(i, j)] + k[(i, j)]).abs() < 3.0 * stderr[(i, j)] + 1e-12, "({i},{j})");
        }
    }
    assert!((mean + k).norm() * 10.0 < mean.norm());
}

#[test]
fn conjugation_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let r = random_rotation(&mut rng);
        let (w, wd) = (gauss3(&mut rng), gauss3(&mut rng));
        let avg = averaged_omega(&w, &wd, &(r.transpose() * w), &(r.transpose() * wd), &r);
        assert!((avg - omega_matrix(&w, &wd)).norm() < 1e-12);
        assert!((skew(&(r * w)) - r * skew(&w) * r.transpose()).norm() < 1e-12);
    }
}

#[test]
fn fixed_weight_recursion_equals_batch_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let truth = Vector3::new(0.15, -0.04, 0.07);
    let l = Matrix3::new(0.05, 0.0, 0.0, 0.01, 0.04, 0.0, -0.02, 0.005, 0.06);
    let c = l * l.transpose();
    let w = c.try_inverse().unwrap();
    let cfg = RlsConfig::default();
    let mut rls = RlsState::new(cfg).unwrap();
    let n = 300;
    let mut rows = DMatrix::zeros(3 * n + 3, 3);
    let mut rhs = DVector::zeros(3 * n + 3);
    let w_half = w.cholesky().unwrap().l().transpose();
    let sqrt_eps = cfg.epsilon_init.sqrt();
    for i in 0..3 {
        rows[(i, i)] = sqrt_eps;
    }
    for k in 0..n {
        let om = omega_matrix(&gauss3(&mut rng), &gauss3(&mut rng));
        let f = om * truth + l * gauss3(&mut rng);
        rls.accumulate(&om, &f, &w);
        let a = w_half * om;
        let b = w_half * f;
        rows.view_mut((3 + 3 * k, 0), (3, 3)).copy_from(&a);
        rhs.rows_mut(3 + 3 * k, 3).copy_from(&b);
    }
    let batch = rows.svd(true, true).solve(&rhs, 1e-14).unwrap();
    let rec = rls.r_hat();
    for i in 0..3 {
        assert!((rec[i] - batch[i]).abs() < 1e-9, "{rec} vs {batch}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// With γ = 1 every step adds a PSD term, so the information never drops
    /// and the covariance radius never grows.
    #[test]
    fn information_is_monotone(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rls = RlsState::new(RlsConfig { n_lag: 10, ..Default::default() }).unwrap();
        let truth = gauss3(&mut rng) * 0.1;
        let sig = Matrix3::identity() * 1e-4;
        let mut prev_info = *rls.information();
        let mut prev_radius = rls.covariance().trace().sqrt();
        for k in 0..80 {
            let (w, wd) = (gauss3(&mut rng), gauss3(&mut rng));
            let om = omega_matrix(&w, &wd);
            let fa = gauss3(&mut rng);
            let s = MotionSample {
                t: k as f64,
                f_a: fa,
                f_p: fa + om * truth + gauss3(&mut rng) * 0.01,
                omega_a: w + gauss3(&mut rng) * 0.01,
                omega_p: w + gauss3(&mut rng) * 0.01,
                omega_dot_a: wd,
                omega_dot_p: wd,
            };
            rls.step(&s, &Matrix3::identity(), &sig, &sig);
            let gain = rls.information() - prev_info;
            prop_assert!(gain.symmetric_eigenvalues().min() >= -1e-9 * (1.0 + rls.information().norm()));
            let radius = rls.covariance().trace().sqrt();
            prop_assert!(radius <= prev_radius * (1.0 + 1e-9), "step {k}: {radius} > {prev_radius}; info {}", rls.information());
            prev_info = *rls.information();
            prev_radius = radius;
        }
    }
}

fn random_sample(rng: &mut ChaCha8Rng, r: &Vector3<f64>) -> MotionSample {
    let (w, wd, fa) = (gauss3(rng), gauss3(rng), gauss3(rng));
    MotionSample {
        t: 0.0,
        f_a: fa,
        f_p: fa + omega_matrix(&w, &wd) * r + gauss3(rng) * 0.05,
        omega_a: w,
        omega_p: w,
        omega_dot_a: wd,
        omega_dot_p: wd,
    }
}

#[test]
fn primed_queue_holds_the_prior_until_full() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let truth = Vector3::new(0.1, -0.2, 0.05);
    let config = RlsConfig { n_lag: 20, ..Default::default() };
    let mut primed = RlsState::new(config).unwrap();
    let mut literal = RlsState::new(RlsConfig { prime_queue: false, ..config }).unwrap();
    let prior = *primed.information();
    for k in 0..20 {
        let s = random_sample(&mut rng, &truth);
        primed.step(&s, &Matrix3::identity(), &Matrix3::zeros(), &Matrix3::zeros());
        literal.step(&s, &Matrix3::identity(), &Matrix3::zeros(), &Matrix3::zeros());
        assert_eq!(*primed.information(), prior, "step {k}");
        assert_eq!(*primed.r_hat(), Vector3::zeros());
        // With r̂ still zero the residual is the force difference itself.
        assert_eq!(*primed.residuals().back().unwrap(), s.f_p - s.f_a);
    }
    assert!(literal.information().trace() > prior.trace());
    assert_eq!(primed.steps(), 0);
    // The queue now holds real residuals, so the next update is weighted by them.
    let s = random_sample(&mut rng, &truth);
    let est = primed.step(&s, &Matrix3::identity(), &Matrix3::zeros(), &Matrix3::zeros());
    assert_eq!(primed.steps(), 1);
    assert!(est.r_hat != Vector3::zeros());
    assert!(primed.residuals().iter().all(|d| d.norm() > 0.0));
}
