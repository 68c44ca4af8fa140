//! Factor residuals and Jacobians.
//!
//! Residuals are returned pre-weighted (multiplied by the square root of the
//! factor's information). Jacobians are taken in the local coordinates of
//! each connected variable, either analytically where the factor is linear
//! (force/contact measurements, the force and contact-point blocks of the
//! dynamics factor) or by central differences through the retraction.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{dynamics_residual, dynamics_residual_vector, ContactObservation};
use crate::hull::ConvexHull;
use crate::inertia::InertialParams;
use crate::se3::{hat, log_pose, Pose, TimedPose, Vec3};

use super::values::{retract_inertial_state, retract_pose, InertialState, Values, VariableId};
use super::{JacobianMode, SolverConfig};

/// A single factor. Weights and measured values are fixed at build time;
/// the constraint weight is supplied through [`EvalContext`] so it can be
/// escalated without rebuilding the graph.
#[derive(Debug, Clone)]
pub enum Factor {
    PoseMeas {
        t: usize,
        measured: Pose,
    },
    ForceMeas {
        t: usize,
        contact: usize,
        measured: Vec3,
        sigma: f64,
    },
    ContactMeas {
        t: usize,
        contact: usize,
        measured: Vec3,
    },
    /// Wrench balance over the window `(base, base+1, base+2)` using the
    /// forces and contact points at `base`.
    Dynamics {
        base: usize,
    },
    /// Hinge penalties on mass, moments, and hull containment.
    Consistency,
    /// `sqrt(w) * (tr(prior^-1 proj(p)) - 4)`.
    GeodesicPrior {
        prior_inverse: nalgebra::Matrix4<f64>,
    },
}

/// Evaluation-time context shared by all factors.
pub struct EvalContext<'a> {
    pub stamps: &'a [f64],
    pub hull: &'a ConvexHull,
    pub config: &'a SolverConfig,
    pub constraint_weight: f64,
}

/// A factor's variable values, extracted so residuals can be re-evaluated
/// under local perturbations without touching the full state.
#[derive(Debug, Clone)]
pub enum LocalVal {
    Pose(Pose),
    V3(Vec3),
    Inertial(InertialState),
}

impl LocalVal {
    pub fn dim(&self) -> usize {
        match self {
            LocalVal::Pose(_) => 6,
            LocalVal::V3(_) => 3,
            LocalVal::Inertial(_) => 10,
        }
    }

    pub fn retracted(&self, delta: &[f64]) -> LocalVal {
        match self {
            LocalVal::Pose(p) => LocalVal::Pose(retract_pose(p, delta).expect("dim checked")),
            LocalVal::V3(v) => LocalVal::V3(v + Vec3::new(delta[0], delta[1], delta[2])),
            LocalVal::Inertial(s) => {
                LocalVal::Inertial(retract_inertial_state(s, delta).expect("dim checked"))
            }
        }
    }
}

impl Factor {
    /// Connected variables, in the order their Jacobian blocks are returned.
    pub fn variables(&self, contact_counts: &[usize]) -> Vec<VariableId> {
        match self {
            Factor::PoseMeas { t, .. } => vec![VariableId::Pose { t: *t }],
            Factor::ForceMeas { t, contact, .. } => vec![VariableId::Force {
                t: *t,
                contact: *contact,
            }],
            Factor::ContactMeas { t, contact, .. } => vec![VariableId::Contact {
                t: *t,
                contact: *contact,
            }],
            Factor::Dynamics { base } => {
                let mut vars = vec![
                    VariableId::Pose { t: *base },
                    VariableId::Pose { t: *base + 1 },
                    VariableId::Pose { t: *base + 2 },
                ];
                for c in 0..contact_counts[*base] {
                    vars.push(VariableId::Force { t: *base, contact: c });
                }
                for c in 0..contact_counts[*base] {
                    vars.push(VariableId::Contact { t: *base, contact: c });
                }
                vars.push(VariableId::Inertial);
                vars
            }
            Factor::Consistency | Factor::GeodesicPrior { .. } => vec![VariableId::Inertial],
        }
    }

    pub fn residual_dim(&self, hull_faces: usize) -> usize {
        match self {
            Factor::PoseMeas { .. } | Factor::Dynamics { .. } => 6,
            Factor::ForceMeas { .. } | Factor::ContactMeas { .. } => 3,
            Factor::Consistency => 4 + hull_faces,
            Factor::GeodesicPrior { .. } => 1,
        }
    }

    pub fn extract_locals(&self, values: &Values, contact_counts: &[usize]) -> Vec<LocalVal> {
        self.variables(contact_counts)
            .iter()
            .map(|id| match id {
                VariableId::Pose { t } => LocalVal::Pose(values.poses[*t]),
                VariableId::Force { t, contact } => LocalVal::V3(values.forces[*t][*contact]),
                VariableId::Contact { t, contact } => LocalVal::V3(values.contacts[*t][*contact]),
                VariableId::Inertial => LocalVal::Inertial(values.inertial),
            })
            .collect()
    }

    /// Weighted residual from the factor's local variable values.
    pub fn residual(&self, locals: &[LocalVal], ctx: &EvalContext) -> DVector<f64> {
        match self {
            Factor::PoseMeas { measured, .. } => {
                let LocalVal::Pose(x) = &locals[0] else { unreachable!() };
                let err = log_pose(&measured.inverse().compose(x));
                let wr = 1.0 / ctx.config.pose_rot_sigma;
                let wt = 1.0 / ctx.config.pose_trans_sigma;
                DVector::from_column_slice(&[
                    wr * err.angular.x,
                    wr * err.angular.y,
                    wr * err.angular.z,
                    wt * err.linear.x,
                    wt * err.linear.y,
                    wt * err.linear.z,
                ])
            }
            Factor::ForceMeas { measured, sigma, .. } => {
                let LocalVal::V3(f) = &locals[0] else { unreachable!() };
                let w = 1.0 / sigma;
                DVector::from_iterator(3, (f - measured).iter().map(|v| w * v))
            }
            Factor::ContactMeas { measured, .. } => {
                let LocalVal::V3(p) = &locals[0] else { unreachable!() };
                let w = 1.0 / ctx.config.contact_sigma;
                DVector::from_iterator(3, (p - measured).iter().map(|v| w * v))
            }
            Factor::Dynamics { base } => self.dynamics_residual_impl(*base, locals, ctx),
            Factor::Consistency => {
                let LocalVal::Inertial(state) = &locals[0] else { unreachable!() };
                let p = state
                    .as_manifold()
                    .expect("consistency factor requires the manifold parameterization");
                constraint_residual(p, ctx.hull, ctx.constraint_weight)
            }
            Factor::GeodesicPrior { prior_inverse } => {
                let LocalVal::Inertial(state) = &locals[0] else { unreachable!() };
                let p = state
                    .as_manifold()
                    .expect("geodesic prior requires the manifold parameterization");
                let trace = (prior_inverse * crate::inertia::project_pseudo(p).matrix()).trace();
                let w = ctx.config.geodesic_weight.sqrt();
                DVector::from_element(1, w * (trace - 4.0))
            }
        }
    }

    fn dynamics_residual_impl(
        &self,
        base: usize,
        locals: &[LocalVal],
        ctx: &EvalContext,
    ) -> DVector<f64> {
        let n = (locals.len() - 4) / 2;
        let LocalVal::Pose(p0) = &locals[0] else { unreachable!() };
        let LocalVal::Pose(p1) = &locals[1] else { unreachable!() };
        let LocalVal::Pose(p2) = &locals[2] else { unreachable!() };
        let window = match crate::se3::window_kinematics(
            &TimedPose::new(*p0, ctx.stamps[base]),
            &TimedPose::new(*p1, ctx.stamps[base + 1]),
            &TimedPose::new(*p2, ctx.stamps[base + 2]),
        ) {
            Ok(w) => w,
            Err(_) => return DVector::from_element(6, f64::NAN),
        };
        let g_body = crate::dynamics::gravity_in_frame(&ctx.config.gravity_vec(), p0);
        let contacts: Vec<ContactObservation> = (0..n)
            .map(|c| {
                let LocalVal::V3(f) = &locals[3 + c] else { unreachable!() };
                let LocalVal::V3(pt) = &locals[3 + n + c] else { unreachable!() };
                ContactObservation {
                    contact_id: c as u32,
                    point: *pt,
                    force: *f,
                    force_sigma: 1.0,
                }
            })
            .collect();
        let LocalVal::Inertial(state) = &locals[3 + 2 * n] else { unreachable!() };
        let r = match state {
            InertialState::Manifold(p) => dynamics_residual(p, &window, &contacts, &g_body),
            InertialState::Vector(v) => dynamics_residual_vector(v, &window, &contacts, &g_body),
        };
        let wf = 1.0 / ctx.config.dynamics_force_sigma;
        let wt = 1.0 / ctx.config.dynamics_torque_sigma;
        DVector::from_column_slice(&[
            wf * r.force.x,
            wf * r.force.y,
            wf * r.force.z,
            wt * r.torque.x,
            wt * r.torque.y,
            wt * r.torque.z,
        ])
    }

    /// Jacobian blocks per connected variable. Analytic blocks are used for
    /// the linear pieces unless `JacobianMode::Numeric` forces differencing.
    pub fn jacobians(
        &self,
        locals: &[LocalVal],
        ctx: &EvalContext,
        residual: &DVector<f64>,
    ) -> Vec<DMatrix<f64>> {
        let analytic = ctx.config.jacobian == JacobianMode::AnalyticWhereAvailable;
        match self {
            Factor::ForceMeas { sigma, .. } if analytic => {
                vec![DMatrix::identity(3, 3) / *sigma]
            }
            Factor::ContactMeas { .. } if analytic => {
                vec![DMatrix::identity(3, 3) / ctx.config.contact_sigma]
            }
            Factor::Dynamics { .. } if analytic => self.dynamics_jacobians(locals, ctx, residual),
            _ => numeric_jacobian(self, locals, ctx, ctx.config.jacobian_step),
        }
    }

    /// Numeric pose and inertial blocks; closed-form force and contact
    /// blocks, which are exact because the residual is linear in them.
    fn dynamics_jacobians(
        &self,
        locals: &[LocalVal],
        ctx: &EvalContext,
        _residual: &DVector<f64>,
    ) -> Vec<DMatrix<f64>> {
        let n = (locals.len() - 4) / 2;
        let step = ctx.config.jacobian_step;
        let mut out = Vec::with_capacity(locals.len());
        // poses: numeric
        for k in 0..3 {
            out.push(numeric_jacobian_column_block(self, locals, ctx, k, step));
        }
        let wf = 1.0 / ctx.config.dynamics_force_sigma;
        let wt = 1.0 / ctx.config.dynamics_torque_sigma;
        // forces: d/df [A - sum f; B - sum p x f] = [-I; -[p]x]
        for c in 0..n {
            let LocalVal::V3(pt) = &locals[3 + n + c] else { unreachable!() };
            let mut j = DMatrix::zeros(6, 3);
            j.view_mut((0, 0), (3, 3))
                .copy_from(&(-wf * nalgebra::Matrix3::identity()));
            j.view_mut((3, 0), (3, 3)).copy_from(&(-wt * hat(pt)));
            out.push(j);
        }
        // contact points: d/dp (-(p x f)) = [f]x
        for c in 0..n {
            let LocalVal::V3(f) = &locals[3 + c] else { unreachable!() };
            let mut j = DMatrix::zeros(6, 3);
            j.view_mut((3, 0), (3, 3)).copy_from(&(wt * hat(f)));
            out.push(j);
        }
        // inertial: the residual is W (Phi v - wrench), so the block is
        // W Phi (dv/ddelta); only the cheap packing map needs differencing
        out.push(self.dynamics_inertial_block(locals, ctx, step, wf, wt));
        out
    }

    fn dynamics_inertial_block(
        &self,
        locals: &[LocalVal],
        ctx: &EvalContext,
        step: f64,
        wf: f64,
        wt: f64,
    ) -> DMatrix<f64> {
        let Factor::Dynamics { base } = self else { unreachable!() };
        let n = (locals.len() - 4) / 2;
        let LocalVal::Pose(p0) = &locals[0] else { unreachable!() };
        let LocalVal::Pose(p1) = &locals[1] else { unreachable!() };
        let LocalVal::Pose(p2) = &locals[2] else { unreachable!() };
        let LocalVal::Inertial(state) = &locals[3 + 2 * n] else { unreachable!() };
        let Ok(window) = crate::se3::window_kinematics(
            &TimedPose::new(*p0, ctx.stamps[*base]),
            &TimedPose::new(*p1, ctx.stamps[*base + 1]),
            &TimedPose::new(*p2, ctx.stamps[*base + 2]),
        ) else {
            return DMatrix::from_element(6, 10, f64::NAN);
        };
        let g_body = crate::dynamics::gravity_in_frame(&ctx.config.gravity_vec(), p0);
        let phi = crate::dynamics::newton_euler_matrix(&window, &g_body);
        let mut w_phi = DMatrix::zeros(6, 10);
        for col in 0..10 {
            for row in 0..3 {
                w_phi[(row, col)] = wf * phi[(row, col)];
                w_phi[(row + 3, col)] = wt * phi[(row + 3, col)];
            }
        }
        match state {
            // v is the variable itself
            InertialState::Vector(_) => w_phi,
            // chain through the packing map v(params)
            InertialState::Manifold(p) => {
                let mut dv = DMatrix::zeros(10, 10);
                let mut delta = [0.0; 10];
                for i in 0..10 {
                    delta[i] = step;
                    let vp = crate::inertia::vectorize(
                        &super::values::retract_inertial(p, &delta).expect("dim fixed"),
                    );
                    delta[i] = -step;
                    let vm = crate::inertia::vectorize(
                        &super::values::retract_inertial(p, &delta).expect("dim fixed"),
                    );
                    delta[i] = 0.0;
                    for r in 0..10 {
                        dv[(r, i)] = (vp.0[r] - vm.0[r]) / (2.0 * step);
                    }
                }
                w_phi * dv
            }
        }
    }
}

/// Hinge residual of the physical-consistency constraints:
/// `weight * max(0, margin)` per constraint, zero when consistent.
/// Layout: `[mass, L_x, L_y, L_z, face_0, ..., face_{F-1}]`.
pub fn constraint_residual(p: &InertialParams, hull: &ConvexHull, weight: f64) -> DVector<f64> {
    let faces = hull.halfspaces().len();
    let mut r = DVector::zeros(4 + faces);
    r[0] = weight * (-p.mass).max(0.0);
    for i in 0..3 {
        r[1 + i] = weight * (-p.principal_moments[i]).max(0.0);
    }
    for (i, m) in hull.face_margins(&p.com).iter().enumerate() {
        r[4 + i] = weight * m.max(0.0);
    }
    r
}

/// Central-difference Jacobian of one factor with respect to all of its
/// variables, in local coordinates through the retraction.
pub fn numeric_jacobian(
    factor: &Factor,
    locals: &[LocalVal],
    ctx: &EvalContext,
    step: f64,
) -> Vec<DMatrix<f64>> {
    (0..locals.len())
        .map(|k| numeric_jacobian_column_block(factor, locals, ctx, k, step))
        .collect()
}

fn numeric_jacobian_column_block(
    factor: &Factor,
    locals: &[LocalVal],
    ctx: &EvalContext,
    var: usize,
    step: f64,
) -> DMatrix<f64> {
    let dim = locals[var].dim();
    let rdim = factor.residual_dim(ctx.hull.halfspaces().len());
    let mut j = DMatrix::zeros(rdim, dim);
    let mut work: Vec<LocalVal> = locals.to_vec();
    let mut delta = vec![0.0; dim];
    for i in 0..dim {
        delta[i] = step;
        work[var] = locals[var].retracted(&delta);
        let rp = factor.residual(&work, ctx);
        delta[i] = -step;
        work[var] = locals[var].retracted(&delta);
        let rm = factor.residual(&work, ctx);
        delta[i] = 0.0;
        work[var] = locals[var].clone();
        let col = (rp - rm) / (2.0 * step);
        j.set_column(i, &col);
    }
    j
}
