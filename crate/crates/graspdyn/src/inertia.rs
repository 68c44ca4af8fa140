//! Physically-consistent inertial parameterization and its projections.
//!
//! A rigid body's inertial unknowns are held as `(m, r_c, L, R)`: mass,
//! center of mass in the body frame, the three principal second moments
//! `L = (integral of r_x^2 rho, ...)` about the body origin, and the rotation
//! taking the principal axes into the body frame. The origin-frame inertia is
//!
//! ```text
//! bH = R * diag(L_y+L_z, L_x+L_z, L_x+L_y) * R^T
//! ```
//!
//! which is realizable by a nonnegative density exactly when `L >= 0`. Mass
//! positivity and center-of-mass membership in the object's convex hull
//! complete the consistency conditions.
//!
//! The pseudo-inertia is the symmetric 4x4
//!
//! ```text
//! proj(m, r_c, bH) = [ 1/2 tr(bH) I - bH    m r_c ]
//!                    [ m r_c^T              m     ]
//! ```
//!
//! whose positive definiteness characterizes consistency; the scalar
//! `|4 - tr(p_gt^-1 p_est)|` is the scale-invariant error metric used to
//! compare estimates.

use nalgebra::{Matrix4, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hull::{ConvexHull, CONTAINMENT_TOL};
use crate::se3::{Mat3, Rotation, Vec3};

/// Which parallel-axis expression converts between origin-frame and
/// center-of-mass inertia.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ParallelAxis {
    /// `H_cm = bH - m (|r_c|^2 I - r_c r_c^T)` (the theorem).
    #[default]
    Standard,
    /// `H_cm = bH - m r_c r_c^T` as printed in some sources; kept selectable
    /// so table roundtrips can be checked under either reading.
    RankOne,
}

impl ParallelAxis {
    /// The matrix subtracted from `bH` to reach `H_cm`.
    pub fn offset(&self, mass: f64, com: &Vec3) -> Mat3 {
        match self {
            ParallelAxis::Standard => {
                mass * (com.norm_squared() * Mat3::identity() - com * com.transpose())
            }
            ParallelAxis::RankOne => mass * com * com.transpose(),
        }
    }
}

/// Manifold-parameterized inertial unknowns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertialParams {
    pub mass: f64,
    /// Center of mass, body frame, meters.
    pub com: Vec3,
    /// Principal second moments `(L_x, L_y, L_z)`, kg m^2, about the body origin.
    pub principal_moments: Vec3,
    /// Principal axes -> body frame.
    pub principal_rotation: Rotation,
}

impl InertialParams {
    pub fn new(mass: f64, com: Vec3, principal_moments: Vec3, principal_rotation: Rotation) -> Self {
        InertialParams {
            mass,
            com,
            principal_moments,
            principal_rotation,
        }
    }
}

/// Origin-frame inertia `bH = R diag(L_y+L_z, L_x+L_z, L_x+L_y) R^T`.
pub fn body_inertia(p: &InertialParams) -> Mat3 {
    let l = p.principal_moments;
    let h_diag = Mat3::from_diagonal(&Vec3::new(l.y + l.z, l.x + l.z, l.x + l.y));
    let r = p.principal_rotation.to_matrix();
    let h = r * h_diag * r.transpose();
    symmetrize(&h)
}

/// Center-of-mass inertia under the default parallel-axis convention.
pub fn cm_inertia(p: &InertialParams) -> Mat3 {
    cm_inertia_with(p, ParallelAxis::Standard)
}

pub fn cm_inertia_with(p: &InertialParams, conv: ParallelAxis) -> Mat3 {
    symmetrize(&(body_inertia(p) - conv.offset(p.mass, &p.com)))
}

/// Matrix-space view of the same parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertialMatrixForm {
    pub mass: f64,
    pub com: Vec3,
    /// Symmetric inertia about the body origin.
    pub inertia_body: Mat3,
    /// Symmetric inertia about the center of mass.
    pub inertia_cm: Mat3,
}

impl InertialMatrixForm {
    pub fn from_cm(mass: f64, com: Vec3, inertia_cm: Mat3, conv: ParallelAxis) -> Self {
        let inertia_cm = symmetrize(&inertia_cm);
        InertialMatrixForm {
            mass,
            com,
            inertia_body: inertia_cm + conv.offset(mass, &com),
            inertia_cm,
        }
    }

    pub fn from_body(mass: f64, com: Vec3, inertia_body: Mat3, conv: ParallelAxis) -> Self {
        let inertia_body = symmetrize(&inertia_body);
        InertialMatrixForm {
            mass,
            com,
            inertia_body,
            inertia_cm: inertia_body - conv.offset(mass, &com),
        }
    }

    pub fn from_params(p: &InertialParams, conv: ParallelAxis) -> Self {
        InertialMatrixForm::from_body(p.mass, p.com, body_inertia(p), conv)
    }
}

/// Recover manifold parameters from mass, center of mass, and H_cm by
/// eigendecomposition of the origin-frame inertia. Eigenvalues are sorted
/// descending; eigenvector signs are fixed by making the first component of
/// largest magnitude positive, and a reflection is repaired by negating the
/// last axis.
pub fn params_from_matrix(mass: f64, com: Vec3, inertia_cm: Mat3, conv: ParallelAxis) -> InertialParams {
    let bh = symmetrize(&(inertia_cm + conv.offset(mass, &com)));
    let (eigenvalues, eigenvectors) = jacobi_eigen(&bh);
    // sort descending
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        eigenvalues[b]
            .partial_cmp(&eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let h = Vec3::new(
        eigenvalues[order[0]],
        eigenvalues[order[1]],
        eigenvalues[order[2]],
    );
    let mut axes = [Vec3::zeros(); 3];
    for (k, &idx) in order.iter().enumerate() {
        let mut v: Vec3 = eigenvectors.column(idx).into();
        // sign convention: largest-magnitude component positive
        let mut imax = 0;
        for i in 1..3 {
            if v[i].abs() > v[imax].abs() {
                imax = i;
            }
        }
        if v[imax] < 0.0 {
            v = -v;
        }
        axes[k] = v;
    }
    let mut r = Mat3::from_columns(&axes);
    if r.determinant() < 0.0 {
        let mut c2: Vec3 = r.column(2).into();
        c2 = -c2;
        r.set_column(2, &c2);
    }
    let l = Vec3::new(
        0.5 * (-h.x + h.y + h.z),
        0.5 * (h.x - h.y + h.z),
        0.5 * (h.x + h.y - h.z),
    );
    InertialParams {
        mass,
        com,
        principal_moments: l,
        principal_rotation: Rotation::from_matrix(&r),
    }
}

/// Symmetric 4x4 projection of inertial parameters onto the positive-definite
/// manifold; bottom-right entry is the mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoInertia(Matrix4<f64>);

impl PseudoInertia {
    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn mass(&self) -> f64 {
        self.0[(3, 3)]
    }

    pub fn from_matrix_form(m: &InertialMatrixForm) -> Self {
        Self::from_parts(m.mass, &m.com, &m.inertia_body)
    }

    pub fn from_parts(mass: f64, com: &Vec3, inertia_body: &Mat3) -> Self {
        let sigma = 0.5 * inertia_body.trace() * Mat3::identity() - inertia_body;
        let h = mass * com;
        let mut p = Matrix4::zeros();
        p.fixed_view_mut::<3, 3>(0, 0).copy_from(&sigma);
        p.fixed_view_mut::<3, 1>(0, 3).copy_from(&h);
        p.fixed_view_mut::<1, 3>(3, 0).copy_from(&h.transpose());
        p[(3, 3)] = mass;
        PseudoInertia(p)
    }

    pub fn try_inverse(&self) -> Option<Matrix4<f64>> {
        self.0.try_inverse().filter(|m| m.iter().all(|v| v.is_finite()))
    }
}

pub fn project_pseudo(p: &InertialParams) -> PseudoInertia {
    PseudoInertia::from_parts(p.mass, &p.com, &body_inertia(p))
}

/// `tr(proj(prior)^-1 proj(p))`; equals 4 when `p == prior`.
pub fn geodesic_prior_value(p: &InertialParams, prior: &InertialParams) -> Result<f64> {
    let p0 = project_pseudo(prior);
    let inv = p0.try_inverse().ok_or(Error::SingularPrior)?;
    Ok((inv * project_pseudo(p).matrix()).trace())
}

/// Scale-invariant inertial error `|4 - tr(p_gt^-1 p_est)|`.
pub fn inertial_error(gt: &InertialParams, est: &InertialParams) -> Result<f64> {
    inertial_error_pseudo(&project_pseudo(gt), &project_pseudo(est))
}

pub fn inertial_error_pseudo(gt: &PseudoInertia, est: &PseudoInertia) -> Result<f64> {
    let inv = gt.try_inverse().ok_or(Error::SingularPrior)?;
    Ok((4.0 - (inv * est.matrix()).trace()).abs())
}

/// One violated consistency constraint with its positive margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: ConstraintId,
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintId {
    Mass,
    /// Principal second moment index 0..3.
    Moment(usize),
    /// Hull face index.
    HullFace(usize),
}

/// Check `m > 0`, `L >= 0`, and center of mass inside the hull. Margins at or
/// below the floating-point containment tolerance are treated as satisfied.
pub fn consistency_violations(p: &InertialParams, hull: &ConvexHull) -> Vec<Violation> {
    let mut out = Vec::new();
    if p.mass <= CONTAINMENT_TOL {
        out.push(Violation {
            constraint: ConstraintId::Mass,
            margin: -p.mass,
        });
    }
    for i in 0..3 {
        if p.principal_moments[i] < -CONTAINMENT_TOL {
            out.push(Violation {
                constraint: ConstraintId::Moment(i),
                margin: -p.principal_moments[i],
            });
        }
    }
    for (i, m) in hull.face_margins(&p.com).iter().enumerate() {
        if *m > CONTAINMENT_TOL {
            out.push(Violation {
                constraint: ConstraintId::HullFace(i),
                margin: *m,
            });
        }
    }
    out
}

/// Unconstrained vector-space parameterization
/// `[m, m r_c, bH_xx, bH_yy, bH_zz, bH_xy, bH_xz, bH_yz]`.
///
/// Storing `m r_c` and the origin-frame inertia keeps the Newton-Euler
/// equations linear in the vector, which the least-squares baseline requires.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorParams(pub SVector<f64, 10>);

impl VectorParams {
    pub fn zeros() -> Self {
        VectorParams(SVector::zeros())
    }

    pub fn mass(&self) -> f64 {
        self.0[0]
    }

    pub fn mass_com(&self) -> Vec3 {
        Vec3::new(self.0[1], self.0[2], self.0[3])
    }

    pub fn inertia_body(&self) -> Mat3 {
        sym3_from_components(&[self.0[4], self.0[5], self.0[6], self.0[7], self.0[8], self.0[9]])
    }
}

/// `[xx, yy, zz, xy, xz, yz]` -> symmetric matrix.
pub fn sym3_from_components(c: &[f64; 6]) -> Mat3 {
    Mat3::new(c[0], c[3], c[4], c[3], c[1], c[5], c[4], c[5], c[2])
}

/// Symmetric matrix -> `[xx, yy, zz, xy, xz, yz]`.
pub fn components_from_sym3(m: &Mat3) -> [f64; 6] {
    [m[(0, 0)], m[(1, 1)], m[(2, 2)], m[(0, 1)], m[(0, 2)], m[(1, 2)]]
}

pub fn vectorize(p: &InertialParams) -> VectorParams {
    let bh = body_inertia(p);
    let c = components_from_sym3(&bh);
    let h = p.mass * p.com;
    VectorParams(SVector::<f64, 10>::from_column_slice(&[
        p.mass, h.x, h.y, h.z, c[0], c[1], c[2], c[3], c[4], c[5],
    ]))
}

pub fn devectorize(v: &VectorParams) -> Result<InertialMatrixForm> {
    devectorize_with(v, ParallelAxis::Standard)
}

pub fn devectorize_with(v: &VectorParams, conv: ParallelAxis) -> Result<InertialMatrixForm> {
    let m = v.mass();
    if m == 0.0 || !m.is_finite() {
        return Err(Error::DegenerateMass);
    }
    let com = v.mass_com() / m;
    Ok(InertialMatrixForm::from_body(m, com, v.inertia_body(), conv))
}

fn symmetrize(m: &Mat3) -> Mat3 {
    0.5 * (m + m.transpose())
}

/// Cyclic Jacobi eigendecomposition of a symmetric 3x3 matrix. Converges to
/// machine precision in a handful of sweeps and is fully deterministic.
fn jacobi_eigen(m: &Mat3) -> (Vec3, Mat3) {
    let mut a = *m;
    let mut v = Mat3::identity();
    for _ in 0..32 {
        let off = a[(0, 1)].abs() + a[(0, 2)].abs() + a[(1, 2)].abs();
        if off < 1e-300 || off < 1e-16 * a.trace().abs().max(a.norm()) {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq.abs() < 1e-300 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut rot = Mat3::identity();
            rot[(p, p)] = c;
            rot[(q, q)] = c;
            rot[(p, q)] = s;
            rot[(q, p)] = -s;
            a = rot.transpose() * a * rot;
            // keep exact symmetry
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
            v *= rot;
        }
    }
    (Vec3::new(a[(0, 0)], a[(1, 1)], a[(2, 2)]), v)
}

/// Ground-truth parameters used by the simulation studies: 1.3 kg, center of
/// mass (0.2, 0.5, 0.1) m, and the reference center-of-mass inertia.
pub fn reference_sim_params() -> InertialParams {
    let h_cm = sym3_from_components(&[
        40.15e-2, 12.92e-2, 47.99e-2, -12.97e-2, -2.59e-2, -6.49e-2,
    ]);
    params_from_matrix(1.3, Vec3::new(0.2, 0.5, 0.1), h_cm, ParallelAxis::Standard)
}
