//! Rotation and pose algebra plus the finite-difference pipeline that turns
//! three timestamped poses into body-frame velocities and accelerations.
//!
//! Rotations are stored as unit quaternions with the canonical sign `w >= 0`.
//! Poses act on points as `x_world = R * x_body + t`. Twists carry the
//! angular and linear velocity of the body expressed in the body frame.
//!
//! The velocity of a pose pair is the SE(3) log of the relative pose divided
//! by the time gap, which is exact for screw motions and reduces to the
//! decoupled SO(3)-log-plus-translation-difference form when the rotation is
//! small. The decoupled variant is kept available through [`LogConvention`]
//! for comparison.

use nalgebra::{Matrix3, Quaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this angle (radians) log/exp switch to second-order Taylor series.
const SMALL_ANGLE: f64 = 1e-7;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Skew-symmetric cross-product matrix: `hat(a) * b == a.cross(&b)`.
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// A 3D rotation as a unit quaternion `(w, x, y, z)` with `w >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation {
            w: 1.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    /// Build from quaternion components, normalizing and canonicalizing sign.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        let s = if w < 0.0 { -1.0 / n } else { 1.0 / n };
        Rotation {
            w: w * s,
            x: x * s,
            y: y * s,
            z: z * s,
        }
    }

    /// Build from components already known to be unit norm, canonicalizing
    /// only the sign. Keeps deserialization bit-exact.
    pub fn from_wxyz_unit(w: f64, x: f64, y: f64, z: f64) -> Self {
        debug_assert!((w * w + x * x + y * y + z * z - 1.0).abs() < 1e-8);
        if w < 0.0 {
            Rotation {
                w: -w,
                x: -x,
                y: -y,
                z: -z,
            }
        } else {
            Rotation { w, x, y, z }
        }
    }

    pub fn wxyz(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Rotation about a coordinate axis (0 = x, 1 = y, 2 = z).
    pub fn from_axis_angle(axis: usize, angle: f64) -> Self {
        let mut v = Vec3::zeros();
        v[axis] = angle;
        exp_rotation(&v)
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        let a = Quaternion::new(self.w, self.x, self.y, self.z);
        let b = Quaternion::new(other.w, other.x, other.y, other.z);
        let q = a * b;
        Rotation::from_wxyz(q.w, q.i, q.j, q.k)
    }

    pub fn inverse(&self) -> Rotation {
        // conjugate; canonical sign is preserved since w is unchanged
        Rotation {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Rotate a vector from the source frame into the destination frame.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        // q v q^-1 expanded: v + 2w(u x v) + 2 u x (u x v)
        let u = Vec3::new(self.x, self.y, self.z);
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(&t)
    }

    pub fn to_matrix(&self) -> Mat3 {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Mat3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Recover a rotation from an orthonormal matrix with determinant +1.
    pub fn from_matrix(m: &Mat3) -> Rotation {
        // Shepperd's method: branch on the largest diagonal element so the
        // division stays well conditioned for angles near pi.
        let t = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let (w, x, y, z);
        if t > 0.0 {
            let s = (t + 1.0).sqrt() * 2.0;
            w = 0.25 * s;
            x = (m[(2, 1)] - m[(1, 2)]) / s;
            y = (m[(0, 2)] - m[(2, 0)]) / s;
            z = (m[(1, 0)] - m[(0, 1)]) / s;
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            w = (m[(2, 1)] - m[(1, 2)]) / s;
            x = 0.25 * s;
            y = (m[(0, 1)] + m[(1, 0)]) / s;
            z = (m[(0, 2)] + m[(2, 0)]) / s;
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            w = (m[(0, 2)] - m[(2, 0)]) / s;
            x = (m[(0, 1)] + m[(1, 0)]) / s;
            y = 0.25 * s;
            z = (m[(1, 2)] + m[(2, 1)]) / s;
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            w = (m[(1, 0)] - m[(0, 1)]) / s;
            x = (m[(0, 2)] + m[(2, 0)]) / s;
            y = (m[(1, 2)] + m[(2, 1)]) / s;
            z = 0.25 * s;
        }
        Rotation::from_wxyz(w, x, y, z)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn angle_to(&self, other: &Rotation) -> f64 {
        log_rotation(&self.inverse().compose(other)).norm()
    }
}

/// Axis-angle vector of a rotation; magnitude in `[0, pi]`.
///
/// With the canonical sign `w >= 0` the vector part of the quaternion is the
/// rotation axis scaled by `sin(angle/2)`, which stays well conditioned all
/// the way to angle pi (where `w = 0` and the vector part has unit norm).
pub fn log_rotation(r: &Rotation) -> Vec3 {
    let u = Vec3::new(r.x, r.y, r.z);
    let s = u.norm();
    if s < SMALL_ANGLE {
        // angle ~ 2s/w; scale = angle/s expanded to second order
        u * (2.0 / r.w) * (1.0 - s * s / (3.0 * r.w * r.w))
    } else {
        let angle = 2.0 * s.atan2(r.w);
        u * (angle / s)
    }
}

/// Quaternion exponential of an axis-angle vector.
pub fn exp_rotation(phi: &Vec3) -> Rotation {
    let angle = phi.norm();
    let (w, k) = if angle < SMALL_ANGLE {
        // cos(a/2) ~ 1 - a^2/8, sin(a/2)/a ~ 1/2 - a^2/48
        (1.0 - angle * angle / 8.0, 0.5 - angle * angle / 48.0)
    } else {
        let half = 0.5 * angle;
        (half.cos(), half.sin() / angle)
    };
    Rotation::from_wxyz(w, k * phi.x, k * phi.y, k * phi.z)
}

/// Left Jacobian of SO(3): `V(phi) = I + (1-cos a)/a^2 [phi]x + (a-sin a)/a^3 [phi]x^2`.
fn so3_left_jacobian(phi: &Vec3) -> Mat3 {
    let a = phi.norm();
    let px = hat(phi);
    if a < SMALL_ANGLE {
        Mat3::identity() + 0.5 * px + px * px / 6.0
    } else {
        let a2 = a * a;
        Mat3::identity() + ((1.0 - a.cos()) / a2) * px + ((a - a.sin()) / (a2 * a)) * px * px
    }
}

fn so3_left_jacobian_inv(phi: &Vec3) -> Mat3 {
    let a = phi.norm();
    let px = hat(phi);
    if a < SMALL_ANGLE {
        Mat3::identity() - 0.5 * px + px * px / 12.0
    } else {
        let half = 0.5 * a;
        let cot = half.cos() / half.sin();
        Mat3::identity() - 0.5 * px + ((1.0 - half * cot) / (a * a)) * px * px
    }
}

/// A rigid transform: rotation plus translation, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Rotation::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.translation + self.rotation.rotate(&other.translation),
        }
    }

    pub fn inverse(&self) -> Pose {
        let rinv = self.rotation.inverse();
        Pose {
            rotation: rinv,
            translation: -rinv.rotate(&self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }
}

/// Angular (rad/s) and linear (m/s) velocity of a rigid body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub angular: Vec3,
    pub linear: Vec3,
}

impl Twist {
    pub fn zero() -> Self {
        Twist {
            angular: Vec3::zeros(),
            linear: Vec3::zeros(),
        }
    }

    pub fn new(angular: Vec3, linear: Vec3) -> Self {
        Twist { angular, linear }
    }

    pub fn is_finite(&self) -> bool {
        self.angular.iter().chain(self.linear.iter()).all(|v| v.is_finite())
    }

    pub fn scale(&self, s: f64) -> Twist {
        Twist {
            angular: self.angular * s,
            linear: self.linear * s,
        }
    }
}

/// SE(3) logarithm: the twist whose unit-time exponential is the pose.
pub fn log_pose(p: &Pose) -> Twist {
    let phi = log_rotation(&p.rotation);
    let rho = so3_left_jacobian_inv(&phi) * p.translation;
    Twist {
        angular: phi,
        linear: rho,
    }
}

/// SE(3) exponential of a twist over unit time.
pub fn exp_pose(t: &Twist) -> Pose {
    Pose {
        rotation: exp_rotation(&t.angular),
        translation: so3_left_jacobian(&t.angular) * t.linear,
    }
}

/// Which logarithm the velocity pipeline uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LogConvention {
    /// Joint SE(3) log of the relative pose (default; exact for screws).
    #[default]
    Se3Coupled,
    /// SO(3) log on the rotation, plain difference on the translation.
    DecoupledSo3R3,
}

/// A pose with its sample time in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPose {
    pub pose: Pose,
    pub stamp: f64,
}

impl TimedPose {
    pub fn new(pose: Pose, stamp: f64) -> Self {
        TimedPose { pose, stamp }
    }
}

/// Finite-difference velocities and accelerations over a three-pose window,
/// all expressed in the body frame at the first pose.
#[derive(Debug, Clone, Copy)]
pub struct KinematicWindow {
    /// Angular velocity over the first interval, frame of the first pose.
    pub omega_prev: Vec3,
    /// Angular velocity over the second interval, transported to the same frame.
    pub omega_curr: Vec3,
    pub linear_accel: Vec3,
    pub angular_accel: Vec3,
    /// World pose of the window's base timestep.
    pub frame_pose: Pose,
}

/// `a^-1 * b`: the pose of `b` expressed in the frame of `a`.
pub fn relative_pose(a: &Pose, b: &Pose) -> Pose {
    a.inverse().compose(b)
}

/// Instantaneous body twist between two timed poses, expressed in frame `a`.
pub fn body_twist(a: &TimedPose, b: &TimedPose) -> Result<Twist> {
    body_twist_with(a, b, LogConvention::Se3Coupled)
}

pub fn body_twist_with(a: &TimedPose, b: &TimedPose, conv: LogConvention) -> Result<Twist> {
    let dt = b.stamp - a.stamp;
    if dt <= 1e-9 {
        return Err(Error::DegenerateTimestamp {
            earlier: a.stamp,
            later: b.stamp,
        });
    }
    let rel = relative_pose(&a.pose, &b.pose);
    let tw = match conv {
        LogConvention::Se3Coupled => log_pose(&rel),
        LogConvention::DecoupledSo3R3 => Twist {
            angular: log_rotation(&rel.rotation),
            linear: rel.translation,
        },
    };
    Ok(tw.scale(1.0 / dt))
}

/// First-order frame transport of a twist: `tw + (omega_ref x tw) * dt`
/// applied to the angular and linear parts independently.
pub fn transport_twist(tw: &Twist, omega_ref: &Vec3, dt: f64) -> Twist {
    Twist {
        angular: tw.angular + omega_ref.cross(&tw.angular) * dt,
        linear: tw.linear + omega_ref.cross(&tw.linear) * dt,
    }
}

pub fn window_kinematics(p0: &TimedPose, p1: &TimedPose, p2: &TimedPose) -> Result<KinematicWindow> {
    window_kinematics_with(p0, p1, p2, LogConvention::Se3Coupled)
}

/// Two finite-difference twists, the transport correction, then a divided
/// difference over the second interval. Timestamps may be non-uniform.
pub fn window_kinematics_with(
    p0: &TimedPose,
    p1: &TimedPose,
    p2: &TimedPose,
    conv: LogConvention,
) -> Result<KinematicWindow> {
    let tw1 = body_twist_with(p0, p1, conv)?;
    let tw2 = body_twist_with(p1, p2, conv)?;
    let dt2 = p2.stamp - p1.stamp;
    let tw2_in_base = transport_twist(&tw2, &tw1.angular, dt2);
    Ok(KinematicWindow {
        omega_prev: tw1.angular,
        omega_curr: tw2_in_base.angular,
        linear_accel: (tw2_in_base.linear - tw1.linear) / dt2,
        angular_accel: (tw2_in_base.angular - tw1.angular) / dt2,
        frame_pose: p0.pose,
    })
}
