//! Joint-to-joint kinematic model assembled from pairwise estimates, with
//! forward/inverse kinematics and JSON/URDF export.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, Matrix4, Rotation3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{compose_joint_pose, RelativePoseEstimate};
use crate::sim::ChainSpec;

const RIGID_TOLERANCE: f64 = 1e-6;

/// Converts a homogeneous matrix into a rigid transform, rejecting anything
/// that is not a proper rotation plus translation.
pub fn isometry_from_matrix(m: &Matrix4<f64>) -> Result<Isometry3<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("transform has non-finite entries".into()));
    }
    let bottom = m.fixed_view::<1, 4>(3, 0);
    if (bottom - nalgebra::RowVector4::new(0.0, 0.0, 0.0, 1.0)).norm() > RIGID_TOLERANCE {
        return Err(Error::InvalidInput("transform bottom row must be [0 0 0 1]".into()));
    }
    let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    if (r.transpose() * r - Matrix3::identity()).norm() > RIGID_TOLERANCE || r.determinant() <= 0.0 {
        return Err(Error::InvalidInput("transform rotation is not orthonormal".into()));
    }
    let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix(&r));
    Ok(Isometry3::from_parts(
        Translation3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]),
        rot,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkUncertainty {
    /// `2·sqrt(tr Σ_r)`, metres.
    pub position_95: f64,
    /// Twice the orientation dispersion, degrees.
    pub orientation_95_deg: f64,
    #[serde(rename = "Sigma_r", with = "crate::serde_nalgebra::mat3")]
    pub sigma_r: Matrix3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelJoint {
    pub name: String,
    /// Unit rotation axis in this joint's frame.
    #[serde(with = "crate::serde_nalgebra::vec3")]
    pub axis: Vector3<f64>,
    /// Previous joint's rotated frame (or the base) to this joint's frame.
    #[serde(with = "crate::serde_nalgebra::mat4")]
    pub transform: Matrix4<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<LinkUncertainty>,
}

impl ModelJoint {
    /// Joint whose incoming transform is known by design.
    pub fn known(name: impl Into<String>, axis: Vector3<f64>, transform: &Isometry3<f64>) -> Self {
        Self {
            name: name.into(),
            axis,
            transform: transform.to_homogeneous(),
            uncertainty: None,
        }
    }

    /// Joint whose incoming transform comes from an IMU-pair estimate; see
    /// [`compose_joint_pose`] for the geometry arguments.
    pub fn from_estimate(
        name: impl Into<String>,
        axis: Vector3<f64>,
        estimate: &RelativePoseEstimate,
        geom_a: &Isometry3<f64>,
        geom_p: &Isometry3<f64>,
    ) -> Self {
        Self {
            name: name.into(),
            axis,
            transform: compose_joint_pose(estimate, geom_a, geom_p).to_homogeneous(),
            uncertainty: Some(LinkUncertainty {
                position_95: estimate.position_radius(),
                orientation_95_deg: estimate.orientation_radius_deg(),
                sigma_r: estimate.sigma_r,
            }),
        }
    }

    pub fn isometry(&self) -> Result<Isometry3<f64>> {
        isometry_from_matrix(&self.transform)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedModel {
    pub joints: Vec<ModelJoint>,
    /// Tool pose in the last joint's rotated frame.
    #[serde(with = "crate::serde_nalgebra::mat4")]
    pub end_effector: Matrix4<f64>,
}

/// World placement of one joint for a given configuration.
#[derive(Debug, Clone, Copy)]
struct JointFrame {
    origin: Vector3<f64>,
    axis: Vector3<f64>,
}

impl EstimatedModel {
    /// Ground-truth model of a simulated chain.
    pub fn from_chain(chain: &ChainSpec) -> Result<Self> {
        chain.validate()?;
        Ok(Self {
            joints: chain
                .joints
                .iter()
                .map(|j| Ok(ModelJoint::known(j.name.clone(), j.axis, &j.origin.to_isometry()?)))
                .collect::<Result<_>>()?,
            end_effector: chain.end_effector.to_isometry()?.to_homogeneous(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        for j in &self.joints {
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("joint {} axis is not unit length", j.name)));
            }
            j.isometry()?;
        }
        isometry_from_matrix(&self.end_effector)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    fn walk(&self, angles: &[f64]) -> Result<(Isometry3<f64>, Vec<JointFrame>)> {
        if angles.len() != self.joints.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} joint angles, got {}",
                self.joints.len(),
                angles.len()
            )));
        }
        let mut t = Isometry3::identity();
        let mut frames = Vec::with_capacity(angles.len());
        for (j, &q) in self.joints.iter().zip(angles) {
            t *= j.isometry()?;
            let axis = Unit::new_normalize(j.axis);
            frames.push(JointFrame {
                origin: t.translation.vector,
                axis: t.rotation * axis.into_inner(),
            });
            t *= Isometry3::rotation(axis.into_inner() * q);
        }
        Ok((t * isometry_from_matrix(&self.end_effector)?, frames))
    }

    pub fn forward_kinematics(&self, angles: &[f64]) -> Result<Isometry3<f64>> {
        self.walk(angles).map(|(t, _)| t)
    }

    /// Position Jacobian of the tool point (3 × joints).
    pub fn position_jacobian(&self, angles: &[f64]) -> Result<DMatrix<f64>> {
        let (tool, frames) = self.walk(angles)?;
        let p = tool.translation.vector;
        let mut jac = DMatrix::zeros(3, frames.len());
        for (k, f) in frames.iter().enumerate() {
            jac.set_column(k, &f.axis.cross(&(p - f.origin)));
        }
        Ok(jac)
    }

    /// URDF description with one continuous joint per model joint and a fixed tool joint.
    pub fn to_urdf(&self, robot_name: &str) -> Result<String> {
        self.validate()?;
        let mut out = String::new();
        let _ = writeln!(out, r#"<?xml version="1.0"?>"#);
        let _ = writeln!(out, r#"<robot name="{}">"#, xml_escape(robot_name));
        let _ = writeln!(out, r#"  <link name="base_link"/>"#);
        let mut parent = "base_link".to_string();
        for (k, j) in self.joints.iter().enumerate() {
            let child = format!("link_{}", k + 1);
            let _ = writeln!(out, r#"  <link name="{child}"/>"#);
            let _ = writeln!(out, r#"  <joint name="{}" type="continuous">"#, xml_escape(&j.name));
            let _ = writeln!(out, r#"    <parent link="{parent}"/>"#);
            let _ = writeln!(out, r#"    <child link="{child}"/>"#);
            let _ = writeln!(out, "    {}", origin_tag(&j.isometry()?));
            let _ = writeln!(out, r#"    <axis xyz="{} {} {}"/>"#, j.axis.x, j.axis.y, j.axis.z);
            if let Some(u) = &j.uncertainty {
                let _ = writeln!(
                    out,
                    "    <!-- position_95_m={} orientation_95_deg={} -->",
                    u.position_95, u.orientation_95_deg
                );
            }
            let _ = writeln!(out, "  </joint>");
            parent = child;
        }
        let _ = writeln!(out, r#"  <link name="tool"/>"#);
        let _ = writeln!(out, r#"  <joint name="tool_joint" type="fixed">"#);
        let _ = writeln!(out, r#"    <parent link="{parent}"/>"#);
        let _ = writeln!(out, r#"    <child link="tool"/>"#);
        let _ = writeln!(out, "    {}", origin_tag(&isometry_from_matrix(&self.end_effector)?));
        let _ = writeln!(out, "  </joint>");
        let _ = writeln!(out, "</robot>");
        Ok(out)
    }
}

fn origin_tag(t: &Isometry3<f64>) -> String {
    let (roll, pitch, yaw) = t.rotation.euler_angles();
    let p = t.translation.vector;
    format!(r#"<origin xyz="{} {} {}" rpy="{} {} {}"/>"#, p.x, p.y, p.z, roll, pitch, yaw)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkSolution {
    pub angles: Vec<f64>,
    /// `‖FK(θ) − target‖`, metres.
    pub residual: f64,
    pub iterations: usize,
}

pub const DEFAULT_IK_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_IK_MAX_ITERS: usize = 200;
const MAX_JOINT_STEP: f64 = 0.5;

/// Damped least squares from a given start; `max_iters` bounds the number of
/// accepted or rejected steps.
pub fn solve_ik_from(
    model: &EstimatedModel,
    target: &Vector3<f64>,
    initial: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<IkSolution> {
    model.validate()?;
    if !(tol > 0.0) || target.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("IK needs a finite target and positive tolerance".into()));
    }
    let position = |q: &[f64]| model.forward_kinematics(q).map(|t| t.translation.vector);
    let mut q = initial.to_vec();
    let mut err = target - position(&q)?;
    let mut lambda = 1e-2;
    let mut iterations = 0;
    while err.norm() >= tol && iterations < max_iters {
        iterations += 1;
        let jac = model.position_jacobian(&q)?;
        let jjt = &jac * jac.transpose() + DMatrix::identity(3, 3) * (lambda * lambda);
        let e = DVector::from_column_slice(err.as_slice());
        let Some(solved) = jjt.cholesky().map(|c| c.solve(&e)) else {
            lambda *= 10.0;
            continue;
        };
        let mut step = jac.transpose() * solved;
        let biggest = step.amax();
        if biggest > MAX_JOINT_STEP {
            step *= MAX_JOINT_STEP / biggest;
        }
        let trial: Vec<f64> = q.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
        let trial_err = target - position(&trial)?;
        if trial_err.norm() < err.norm() {
            q = trial;
            err = trial_err;
            lambda = (lambda * 0.5).max(1e-6);
        } else {
            lambda *= 10.0;
        }
    }
    let residual = err.norm();
    if residual < tol {
        Ok(IkSolution { angles: q, residual, iterations })
    } else {
        Err(Error::Unreachable { angles: q, residual, iterations })
    }
}

/// Position-only IK. Starts from the zero configuration and, if that stalls,
/// from a few fixed alternative configurations; the best attempt is reported
/// on failure.
pub fn solve_ik(model: &EstimatedModel, target: &Vector3<f64>, tol: f64, max_iters: usize) -> Result<IkSolution> {
    let n = model.joints.len();
    let mut best: Option<Error> = None;
    for start in [0.0, 1.0, -1.0, 2.5, -2.5] {
        let init: Vec<f64> = (0..n).map(|k| if k % 2 == 0 { start } else { -start * 0.5 }).collect();
        match solve_ik_from(model, target, &init, tol, max_iters) {
            Ok(sol) => return Ok(sol),
            Err(e @ Error::Unreachable { .. }) => {
                let better = match (&best, &e) {
                    (Some(Error::Unreachable { residual: old, .. }), Error::Unreachable { residual: new, .. }) => new < old,
                    _ => true,
                };
                if better {
                    best = Some(e);
                }
            }
            Err(e) => return Err(e),
        }
    }
    Err(best.expect("at least one attempt ran"))
}
