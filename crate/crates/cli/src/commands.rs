use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use imuchain::calibration::calibrate as fit_profile;
use imuchain::estimator::pairwise_estimate_traced;
use imuchain::log::{find_stream, read_log, write_log};
use imuchain::model::{solve_ik, ModelJoint, DEFAULT_IK_MAX_ITERS, DEFAULT_IK_TOLERANCE};
use imuchain::nalgebra::Vector3;
use imuchain::sim::simulate_imu;
use imuchain::sweep::{freq_sweep as run_sweep, sweep_setup};
use imuchain::{
    CalibrationProfile, ChainSpec, EstimatedModel, ImuSample, ImuStream, NoiseSpec, Pose, RelativePoseEstimate,
    TrajectorySpec,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{read_json, read_text, write_output, Failure};

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Usage(format!("serialization failed: {e}")))?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn load_log(path: &Path) -> Result<Vec<ImuStream>, Failure> {
    let file = fs::File::open(path).map_err(|e| Failure::Usage(format!("cannot open {}: {e}", path.display())))?;
    Ok(read_log(BufReader::new(file))?)
}

pub fn simulate(
    config: &RunConfig,
    chain_path: &Path,
    trajectory_path: &Path,
    noise_path: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let chain: ChainSpec = read_json(chain_path)?;
    let trajectory: TrajectorySpec = read_json(trajectory_path)?;
    let mut noise: NoiseSpec = match noise_path {
        Some(p) => read_json(p)?,
        None => config.noise.clone(),
    };
    if let Some(seed) = config.seed {
        noise.seed = seed;
    }
    let gravity = Vector3::new(0.0, 0.0, -config.g_mag);
    let streams = simulate_imu(&chain, &trajectory, &noise, &gravity)?;
    let mut bytes = Vec::new();
    write_log(&mut bytes, &streams)?;
    write_output(out, &bytes)
}

fn segment(samples: &[ImuSample], (start, end): (f64, f64)) -> Vec<ImuSample> {
    samples.iter().filter(|s| s.t >= start && s.t < end).cloned().collect()
}

pub fn calibrate(
    config: &RunConfig,
    log_path: &Path,
    imu: &str,
    stationary: (f64, f64),
    rotation: (f64, f64),
    out: Option<&Path>,
) -> Result<(), Failure> {
    let streams = load_log(log_path)?;
    let samples = &find_stream(&streams, imu)?.samples;
    let profile = fit_profile(
        &segment(samples, stationary),
        &segment(samples, rotation),
        config.g_mag,
        &config.stationary(),
    )?;
    write_output(out, &to_json(&profile)?)
}

fn load_profile(path: Option<&Path>) -> Result<CalibrationProfile, Failure> {
    let profile = match path {
        Some(p) => read_json(p)?,
        None => CalibrationProfile::identity(),
    };
    profile.validate()?;
    Ok(profile)
}

pub fn estimate(
    config: &RunConfig,
    log_path: &Path,
    (a, p): (&str, &str),
    (profile_a, profile_p): (Option<&Path>, Option<&Path>),
    trace_path: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let streams = load_log(log_path)?;
    let stream_a = &find_stream(&streams, a)?.samples;
    let stream_p = &find_stream(&streams, p)?.samples;
    let (est, trace) = pairwise_estimate_traced(
        stream_a,
        stream_p,
        &load_profile(profile_a)?,
        &load_profile(profile_p)?,
        &config.estimator(),
    )?;
    if let Some(path) = trace_path {
        let mut csv = String::from("t,r_x,r_y,r_z,position_radius,orientation_radius_deg\n");
        for row in &trace {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                row.t, row.r_hat.x, row.r_hat.y, row.r_hat.z, row.position_radius, row.orientation_radius_deg
            );
        }
        write_output(Some(path), csv.as_bytes())?;
    }
    write_output(out, &to_json(&est)?)?;
    if est.converged {
        Ok(())
    } else {
        Err(Failure::Domain(format!(
            "not converged: position radius {:.4} m, orientation radius {:.4} deg after {} samples",
            est.position_radius(),
            est.orientation_radius_deg(),
            est.n_samples
        )))
    }
}

pub fn freq_sweep(
    config: &RunConfig,
    ratios: &[f64],
    length: Option<f64>,
    setup_dir: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    if ratios.is_empty() {
        return Err(Failure::Usage("no ratios given".into()));
    }
    let length = length.unwrap_or(config.sweep_length);
    let sweep = config.sweep();
    if let Some(dir) = setup_dir {
        fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
        for &ratio in ratios {
            let (chain, trajectory) = sweep_setup(length, ratio, &sweep)?;
            write_output(Some(&dir.join(format!("chain_{ratio}.json"))), &to_json(&chain)?)?;
            write_output(Some(&dir.join(format!("trajectory_{ratio}.json"))), &to_json(&trajectory)?)?;
        }
    }
    let points = run_sweep(length, ratios, &sweep)?;
    let mut csv = String::from("ratio,frequency,length_ratio\n");
    for pt in &points {
        let _ = writeln!(csv, "{},{},{}", pt.ratio, pt.frequency, pt.length_ratio);
    }
    write_output(out, csv.as_bytes())
}

/// Model description for `assemble`: every joint is either placed by a known
/// origin or by an estimated IMU pair.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssemblySpec {
    pub joints: Vec<AssemblyJoint>,
    /// Tool pose in the last joint's frame.
    #[serde(default)]
    pub end_effector: Pose,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssemblyJoint {
    pub name: String,
    pub axis: [f64; 3],
    /// Joint frame in the previous joint's frame (the base for the first joint).
    #[serde(default)]
    pub origin: Option<Pose>,
    #[serde(default)]
    pub estimated: Option<EstimatedLink>,
}

/// Places a joint from an estimate of IMU P's pose relative to IMU A, where A
/// sits on the previous link and P is rigidly fixed to this joint's frame on
/// the same link.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatedLink {
    /// Estimate file written by `estimate`.
    pub estimate: PathBuf,
    /// Pose of IMU A in the previous joint's frame.
    pub imu_a: Pose,
    /// Pose of IMU P in this joint's frame.
    pub imu_p: Pose,
}

fn build_model(spec: &AssemblySpec, base_dir: &Path) -> Result<EstimatedModel, Failure> {
    let mut joints = Vec::with_capacity(spec.joints.len());
    for j in &spec.joints {
        let axis = Vector3::from(j.axis);
        let joint = match (&j.origin, &j.estimated) {
            (Some(origin), None) => ModelJoint::known(j.name.clone(), axis, &origin.to_isometry()?),
            (None, Some(link)) => {
                let est: RelativePoseEstimate = read_json(&base_dir.join(&link.estimate))?;
                ModelJoint::from_estimate(
                    j.name.clone(),
                    axis,
                    &est,
                    &link.imu_a.to_isometry()?,
                    &link.imu_p.to_isometry()?,
                )
            }
            _ => {
                return Err(Failure::Usage(format!(
                    "joint `{}` needs exactly one of `origin` or `estimated`",
                    j.name
                )))
            }
        };
        joints.push(joint);
    }
    let model = EstimatedModel {
        joints,
        end_effector: spec.end_effector.to_isometry()?.to_homogeneous(),
    };
    model.validate()?;
    Ok(model)
}

pub fn assemble(spec_path: &Path, urdf: Option<&Path>, out: Option<&Path>) -> Result<(), Failure> {
    let spec: AssemblySpec = read_json(spec_path)?;
    let base_dir = spec_path.parent().unwrap_or(Path::new("."));
    let model = build_model(&spec, base_dir)?;
    if let Some(path) = urdf {
        write_output(Some(path), model.to_urdf("imuchain_model")?.as_bytes())?;
    }
    let mut text = model.to_json();
    text.push('\n');
    write_output(out, text.as_bytes())
}

#[derive(Debug, Serialize)]
struct ReachReport {
    goal: [f64; 3],
    angles: Vec<f64>,
    residual: f64,
    iterations: usize,
}

pub fn reach(model_path: &Path, target: [f64; 3], offset_z: f64, out: Option<&Path>) -> Result<(), Failure> {
    let model = EstimatedModel::from_json(&read_text(model_path)?)?;
    let goal = Vector3::from(target) + Vector3::new(0.0, 0.0, offset_z);
    let sol = solve_ik(&model, &goal, DEFAULT_IK_TOLERANCE, DEFAULT_IK_MAX_ITERS)?;
    let report = ReachReport {
        goal: goal.into(),
        angles: sol.angles,
        residual: sol.residual,
        iterations: sol.iterations,
    };
    write_output(out, &to_json(&report)?)
}
