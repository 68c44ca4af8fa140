//! Variable storage and manifold retractions.

use crate::error::{Error, Result};
use crate::inertia::{InertialParams, VectorParams};
use crate::se3::{exp_pose, exp_rotation, Pose, Twist, Vec3};

/// Identifies one variable in the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum VariableId {
    Pose { t: usize },
    Force { t: usize, contact: usize },
    Contact { t: usize, contact: usize },
    Inertial,
}

impl VariableId {
    pub fn local_dim(&self) -> usize {
        match self {
            VariableId::Pose { .. } => 6,
            VariableId::Force { .. } | VariableId::Contact { .. } => 3,
            VariableId::Inertial => 10,
        }
    }
}

/// The inertial unknown in either parameterization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InertialState {
    Manifold(InertialParams),
    Vector(VectorParams),
}

impl InertialState {
    pub fn as_manifold(&self) -> Option<&InertialParams> {
        match self {
            InertialState::Manifold(p) => Some(p),
            InertialState::Vector(_) => None,
        }
    }
}

/// Current estimates for every variable. Timestamps are data, not variables.
#[derive(Debug, Clone)]
pub struct Values {
    pub poses: Vec<Pose>,
    /// `forces[t][c]`, body frame at timestep `t`.
    pub forces: Vec<Vec<Vec3>>,
    pub contacts: Vec<Vec<Vec3>>,
    pub inertial: InertialState,
}

/// Right retraction of a pose: `X * exp([rot, trans])`.
pub fn retract_pose(pose: &Pose, delta: &[f64]) -> Result<Pose> {
    if delta.len() != 6 {
        return Err(Error::DimensionMismatch {
            got: delta.len(),
            expected: 6,
        });
    }
    let xi = Twist::new(
        Vec3::new(delta[0], delta[1], delta[2]),
        Vec3::new(delta[3], delta[4], delta[5]),
    );
    Ok(pose.compose(&exp_pose(&xi)))
}

/// Euclidean retraction on mass, center of mass, and moments; exponential on
/// the principal-axis rotation. Layout: `[m, com(3), L(3), rot(3)]`.
pub fn retract_inertial(p: &InertialParams, delta: &[f64]) -> Result<InertialParams> {
    if delta.len() != 10 {
        return Err(Error::DimensionMismatch {
            got: delta.len(),
            expected: 10,
        });
    }
    Ok(InertialParams {
        mass: p.mass + delta[0],
        com: p.com + Vec3::new(delta[1], delta[2], delta[3]),
        principal_moments: p.principal_moments + Vec3::new(delta[4], delta[5], delta[6]),
        principal_rotation: p
            .principal_rotation
            .compose(&exp_rotation(&Vec3::new(delta[7], delta[8], delta[9]))),
    })
}

pub fn retract_inertial_state(s: &InertialState, delta: &[f64]) -> Result<InertialState> {
    match s {
        InertialState::Manifold(p) => Ok(InertialState::Manifold(retract_inertial(p, delta)?)),
        InertialState::Vector(v) => {
            if delta.len() != 10 {
                return Err(Error::DimensionMismatch {
                    got: delta.len(),
                    expected: 10,
                });
            }
            let mut out = *v;
            for i in 0..10 {
                out.0[i] += delta[i];
            }
            Ok(InertialState::Vector(out))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::{log_pose, Rotation};

    #[test]
    fn retract_zero_is_identity() {
        let pose = Pose::new(Rotation::from_axis_angle(1, 0.4), Vec3::new(0.1, 0.2, 0.3));
        let out = retract_pose(&pose, &[0.0; 6]).unwrap();
        assert_eq!(out, pose);
    }

    #[test]
    fn retract_small_rotation_first_order() {
        let eps = 1e-6;
        let out = retract_pose(&Pose::identity(), &[0.0, 0.0, eps, 0.0, 0.0, 0.0]).unwrap();
        let phi = crate::se3::log_rotation(&out.rotation);
        assert!((phi - Vec3::new(0.0, 0.0, eps)).norm() < eps * eps);
    }

    #[test]
    fn chained_retractions_first_order() {
        // retract(retract(x, a), b) ~ retract(x, a+b) + O(|delta|^2)
        let pose = Pose::new(Rotation::from_axis_angle(0, 0.3), Vec3::new(0.5, -0.2, 0.1));
        let a = [1e-4, -2e-4, 3e-4, 2e-4, 1e-4, -1e-4];
        let b = [-2e-4, 1e-4, 1e-4, -3e-4, 2e-4, 2e-4];
        let chained = retract_pose(&retract_pose(&pose, &a).unwrap(), &b).unwrap();
        let sum: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x + y).collect();
        let direct = retract_pose(&pose, &sum).unwrap();
        let diff = log_pose(&direct.inverse().compose(&chained));
        let delta_norm: f64 = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(diff.angular.norm() + diff.linear.norm() < 10.0 * delta_norm * delta_norm);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(retract_pose(&Pose::identity(), &[0.0; 5]).is_err());
        let p = crate::inertia::reference_sim_params();
        assert!(retract_inertial(&p, &[0.0; 9]).is_err());
    }
}
