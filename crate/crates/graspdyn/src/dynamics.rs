//! Newton-Euler wrench residual linking inertial parameters, window
//! kinematics, and measured contact forces.
//!
//! With forces `f_i` applied at body-frame points `p_i`, the balance over a
//! finite-difference window (all quantities in the body frame at the window
//! base) reads
//!
//! ```text
//! A = m (a - g) - m [r_c]x wdot + m [w_curr]x [w_prev]x r_c
//! B = m [r_c]x (a - g) + bH wdot + [w_curr]x bH w_prev
//! residual = [ A - sum_i f_i ;  B - sum_i [p_i]x f_i ]
//! ```
//!
//! The residual is linear in the vector parameterization
//! `[m, m r_c, bH components]`, which both the least-squares baseline and the
//! unconstrained factor-graph variant exploit.

use nalgebra::SMatrix;

use crate::inertia::{body_inertia, InertialParams, VectorParams};
use crate::se3::{hat, KinematicWindow, Mat3, Pose, Vec3};

/// One fingertip observation in the object body frame at its own timestep.
/// A broken contact is encoded as zero force with a large noise scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactObservation {
    pub contact_id: u32,
    /// Contact point, meters.
    pub point: Vec3,
    /// Contact force, newtons.
    pub force: Vec3,
    /// Per-axis force noise scale, newtons.
    pub force_sigma: f64,
}

/// Stacked force (N) and torque (N m) residual of the wrench balance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrenchResidual {
    pub force: Vec3,
    pub torque: Vec3,
}

impl WrenchResidual {
    pub fn norm(&self) -> f64 {
        (self.force.norm_squared() + self.torque.norm_squared()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.torque.iter()).all(|v| v.is_finite())
    }
}

/// Rotate the world gravity vector into a body frame. Translation plays no
/// role: gravity is a free vector.
pub fn gravity_in_frame(world_gravity: &Vec3, frame: &Pose) -> Vec3 {
    frame.rotation.inverse().rotate(world_gravity)
}

/// The `A` (force, N) and `B` (torque, N m) sides of the wrench balance.
pub fn newton_euler_terms(p: &InertialParams, k: &KinematicWindow, g_body: &Vec3) -> (Vec3, Vec3) {
    let bh = body_inertia(p);
    newton_euler_terms_from(p.mass, &p.com, &bh, k, g_body)
}

fn newton_euler_terms_from(
    mass: f64,
    com: &Vec3,
    bh: &Mat3,
    k: &KinematicWindow,
    g_body: &Vec3,
) -> (Vec3, Vec3) {
    let accel = k.linear_accel - g_body;
    let a = mass * accel - mass * com.cross(&k.angular_accel)
        + mass * k.omega_curr.cross(&k.omega_prev.cross(com));
    let b = mass * com.cross(&accel) + bh * k.angular_accel + k.omega_curr.cross(&(bh * k.omega_prev));
    (a, b)
}

/// Net contact wrench about the body origin: `(sum f_i, sum p_i x f_i)`.
pub fn net_contact_wrench(contacts: &[ContactObservation]) -> (Vec3, Vec3) {
    let mut f = Vec3::zeros();
    let mut tau = Vec3::zeros();
    for c in contacts {
        f += c.force;
        tau += c.point.cross(&c.force);
    }
    (f, tau)
}

/// Wrench-balance residual for manifold parameters. Contacts are expected in
/// the window's base body frame.
pub fn dynamics_residual(
    p: &InertialParams,
    k: &KinematicWindow,
    contacts: &[ContactObservation],
    g_body: &Vec3,
) -> WrenchResidual {
    let (a, b) = newton_euler_terms(p, k, g_body);
    let (f, tau) = net_contact_wrench(contacts);
    WrenchResidual {
        force: a - f,
        torque: b - tau,
    }
}

/// `6x10` matrix `Phi` with `[A; B] = Phi * v` for the vector
/// parameterization `v = [m, h, bH6]`, `h = m r_c`.
pub fn newton_euler_matrix(k: &KinematicWindow, g_body: &Vec3) -> SMatrix<f64, 6, 10> {
    let mut phi = SMatrix::<f64, 6, 10>::zeros();
    let accel = k.linear_accel - g_body;

    // force rows: m*(a-g) + [wdot]x h + [w_curr]x [w_prev]x h
    phi.fixed_view_mut::<3, 1>(0, 0).copy_from(&accel);
    let h_force = hat(&k.angular_accel) + hat(&k.omega_curr) * hat(&k.omega_prev);
    phi.fixed_view_mut::<3, 3>(0, 1).copy_from(&h_force);

    // torque rows: -[a-g]x h + G(wdot) H6 + [w_curr]x G(w_prev) H6
    phi.fixed_view_mut::<3, 3>(3, 1).copy_from(&(-hat(&accel)));
    let g = sym_product_matrix(&k.angular_accel) + hat(&k.omega_curr) * sym_product_matrix(&k.omega_prev);
    phi.fixed_view_mut::<3, 6>(3, 4).copy_from(&g);
    phi
}

/// `3x6` matrix `G(u)` with `H u = G(u) * [H_xx,H_yy,H_zz,H_xy,H_xz,H_yz]`.
fn sym_product_matrix(u: &Vec3) -> SMatrix<f64, 3, 6> {
    SMatrix::<f64, 3, 6>::from_row_slice(&[
        u.x, 0.0, 0.0, u.y, u.z, 0.0, //
        0.0, u.y, 0.0, u.x, 0.0, u.z, //
        0.0, 0.0, u.z, 0.0, u.x, u.y,
    ])
}

/// Residual via the vector parameterization; identical to
/// [`dynamics_residual`] when `v = vectorize(p)`.
pub fn dynamics_residual_vector(
    v: &VectorParams,
    k: &KinematicWindow,
    contacts: &[ContactObservation],
    g_body: &Vec3,
) -> WrenchResidual {
    let ab = newton_euler_matrix(k, g_body) * v.0;
    let (f, tau) = net_contact_wrench(contacts);
    WrenchResidual {
        force: Vec3::new(ab[0], ab[1], ab[2]) - f,
        torque: Vec3::new(ab[3], ab[4], ab[5]) - tau,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inertia::{reference_sim_params, vectorize};
    use crate::se3::{exp_rotation, Rotation};
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_window(rng: &mut StdRng) -> KinematicWindow {
        KinematicWindow {
            omega_prev: Vec3::from_fn(|_, _| rng.gen_range(-2.0..2.0)),
            omega_curr: Vec3::from_fn(|_, _| rng.gen_range(-2.0..2.0)),
            linear_accel: Vec3::from_fn(|_, _| rng.gen_range(-5.0..5.0)),
            angular_accel: Vec3::from_fn(|_, _| rng.gen_range(-5.0..5.0)),
            frame_pose: Pose::identity(),
        }
    }

    fn static_window() -> KinematicWindow {
        KinematicWindow {
            omega_prev: Vec3::zeros(),
            omega_curr: Vec3::zeros(),
            linear_accel: Vec3::zeros(),
            angular_accel: Vec3::zeros(),
            frame_pose: Pose::identity(),
        }
    }

    #[test]
    fn gravity_identity_frame() {
        let g = Vec3::new(0.0, 0.0, -9.81);
        assert_eq!(gravity_in_frame(&g, &Pose::identity()), g);
    }

    #[test]
    fn gravity_rotated_frame() {
        let g = Vec3::new(0.0, 0.0, -9.81);
        let frame = Pose::new(
            Rotation::from_axis_angle(0, std::f64::consts::FRAC_PI_2),
            Vec3::new(1.0, 2.0, 3.0),
        );
        let gb = gravity_in_frame(&g, &frame);
        // oracle: R^T g with the quaternion rotation applied explicitly
        let expect = frame.rotation.to_matrix().transpose() * g;
        assert_relative_eq!(gb, expect, epsilon = 1e-12);
        assert_relative_eq!(gb, Vec3::new(0.0, -9.81, 0.0), epsilon = 1e-12);
        assert_relative_eq!(gb.norm(), g.norm(), epsilon = 1e-12);
    }

    #[test]
    fn static_terms_hand_evaluated() {
        let p = reference_sim_params();
        let g_body = Vec3::new(0.0, 0.0, -9.81);
        let (a, b) = newton_euler_terms(&p, &static_window(), &g_body);
        assert_relative_eq!(a, Vec3::new(0.0, 0.0, 12.753), epsilon = 1e-12);
        assert_relative_eq!(b, Vec3::new(6.3765, -2.5506, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn massless_limit() {
        let mut rng = StdRng::seed_from_u64(5);
        let p = InertialParams::new(
            0.0,
            Vec3::new(0.3, -0.2, 0.1),
            Vec3::new(0.1, 0.2, 0.3),
            Rotation::identity(),
        );
        let k = random_window(&mut rng);
        let g = Vec3::new(0.0, 0.0, -9.81);
        let (a, b) = newton_euler_terms(&p, &k, &g);
        assert!(a.norm() < 1e-15);
        let bh = body_inertia(&p);
        let expect = bh * k.angular_accel + k.omega_curr.cross(&(bh * k.omega_prev));
        assert_relative_eq!(b, expect, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_implementation_oracle() {
        // independently coded formula evaluation
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..300 {
            let p = InertialParams::new(
                rng.gen_range(0.1..3.0),
                Vec3::from_fn(|_, _| rng.gen_range(-0.3..0.3)),
                Vec3::from_fn(|_, _| rng.gen_range(0.0..0.4)),
                exp_rotation(&Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0))),
            );
            let k = random_window(&mut rng);
            let g = Vec3::from_fn(|_, _| rng.gen_range(-10.0..10.0));
            let (a, b) = newton_euler_terms(&p, &k, &g);

            let bh = body_inertia(&p);
            let m = p.mass;
            let rc = p.com;
            let acc = k.linear_accel - g;
            let a2 = m * acc - m * hat(&rc) * k.angular_accel
                + m * hat(&k.omega_curr) * hat(&k.omega_prev) * rc;
            let b2 = m * hat(&rc) * acc + bh * k.angular_accel
                + hat(&k.omega_curr) * bh * k.omega_prev;
            assert_relative_eq!(a, a2, epsilon = 1e-12);
            assert_relative_eq!(b, b2, epsilon = 1e-12);
        }
    }

    #[test]
    fn static_equilibrium_residual_zero() {
        let p = reference_sim_params();
        let g_body = Vec3::new(0.0, 0.0, -9.81);
        let (a, b) = newton_euler_terms(&p, &static_window(), &g_body);
        // distribute the required wrench over four points by construction:
        // three points carry pure force along A/3 at points on the line of
        // action; correct the torque with a couple.
        let pts = [
            Vec3::new(0.2, 0.5, 0.1),
            Vec3::new(0.3, 0.4, 0.0),
            Vec3::new(0.1, 0.6, 0.2),
            Vec3::new(0.0, 0.0, 0.0),
        ];
        // solve a tiny least-squares for forces reproducing (a, b) exactly
        let mut g_mat = nalgebra::DMatrix::<f64>::zeros(6, 12);
        for (i, pt) in pts.iter().enumerate() {
            g_mat
                .view_mut((0, 3 * i), (3, 3))
                .copy_from(&Mat3::identity());
            g_mat.view_mut((3, 3 * i), (3, 3)).copy_from(&hat(pt));
        }
        let w = nalgebra::DVector::from_iterator(6, a.iter().chain(b.iter()).cloned());
        let gt = g_mat.transpose();
        let f = &gt * (&g_mat * &gt).try_inverse().unwrap() * w;
        let contacts: Vec<ContactObservation> = (0..4)
            .map(|i| ContactObservation {
                contact_id: i as u32,
                point: pts[i],
                force: Vec3::new(f[3 * i], f[3 * i + 1], f[3 * i + 2]),
                force_sigma: 1e-6,
            })
            .collect();
        let r = dynamics_residual(&p, &static_window(), &contacts, &g_body);
        assert!(r.norm() < 1e-10, "residual {:?}", r);
    }

    #[test]
    fn mass_perturbation_is_linear() {
        let p = reference_sim_params();
        let mut k = static_window();
        k.linear_accel = Vec3::new(0.0, 0.0, -9.81);
        let g_body = Vec3::zeros();
        // free fall with a - g = -9.81 z, g_body folded into accel
        let dm = 0.25;
        let mut p2 = p;
        p2.mass += dm;
        // keep r_c fixed: com identical, so A changes by dm * (a - g)
        let (a1, _) = newton_euler_terms(&p, &k, &g_body);
        let (a2, _) = newton_euler_terms(&p2, &k, &g_body);
        assert_relative_eq!(a2 - a1, dm * (k.linear_accel - g_body), epsilon = 1e-12);
    }

    #[test]
    fn vector_route_matches_manifold_route() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..200 {
            let p = InertialParams::new(
                rng.gen_range(0.1..3.0),
                Vec3::from_fn(|_, _| rng.gen_range(-0.3..0.3)),
                Vec3::from_fn(|_, _| rng.gen_range(0.0..0.4)),
                exp_rotation(&Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0))),
            );
            let k = random_window(&mut rng);
            let g = Vec3::new(0.0, 0.0, -9.81);
            let contacts = [ContactObservation {
                contact_id: 0,
                point: Vec3::new(0.1, 0.0, 0.0),
                force: Vec3::new(0.0, 2.0, 1.0),
                force_sigma: 1e-6,
            }];
            let r1 = dynamics_residual(&p, &k, &contacts, &g);
            let r2 = dynamics_residual_vector(&vectorize(&p), &k, &contacts, &g);
            assert_relative_eq!(r1.force, r2.force, epsilon = 1e-10);
            assert_relative_eq!(r1.torque, r2.torque, epsilon = 1e-10);
        }
    }

    #[test]
    fn superposition_in_vector_params() {
        let mut rng = StdRng::seed_from_u64(13);
        let k = random_window(&mut rng);
        let g = Vec3::new(0.0, 0.0, -9.81);
        let contacts = [ContactObservation {
            contact_id: 0,
            point: Vec3::new(0.05, -0.02, 0.04),
            force: Vec3::new(1.0, -2.0, 3.0),
            force_sigma: 1e-6,
        }];
        let rand_v = |rng: &mut StdRng| {
            VectorParams(nalgebra::SVector::<f64, 10>::from_fn(|_, _| {
                rng.gen_range(-1.0..1.0)
            }))
        };
        for _ in 0..100 {
            let v1 = rand_v(&mut rng);
            let v2 = rand_v(&mut rng);
            let sum = VectorParams(v1.0 + v2.0);
            let r_sum = dynamics_residual_vector(&sum, &k, &contacts, &g);
            let r_zero = dynamics_residual_vector(&VectorParams::zeros(), &k, &contacts, &g);
            let r1 = dynamics_residual_vector(&v1, &k, &contacts, &g);
            let r2 = dynamics_residual_vector(&v2, &k, &contacts, &g);
            assert_relative_eq!(
                r_sum.force + r_zero.force,
                r1.force + r2.force,
                epsilon = 1e-10
            );
            assert_relative_eq!(
                r_sum.torque + r_zero.torque,
                r1.torque + r2.torque,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn zero_force_contact_changes_nothing() {
        let p = reference_sim_params();
        let g = Vec3::new(0.0, 0.0, -9.81);
        let mut rng = StdRng::seed_from_u64(17);
        let k = random_window(&mut rng);
        let mut contacts = vec![ContactObservation {
            contact_id: 0,
            point: Vec3::new(0.1, 0.2, 0.0),
            force: Vec3::new(1.0, 0.5, -0.2),
            force_sigma: 1e-6,
        }];
        let r1 = dynamics_residual(&p, &k, &contacts, &g);
        contacts.push(ContactObservation {
            contact_id: 1,
            point: Vec3::new(-0.3, 0.1, 0.2),
            force: Vec3::zeros(),
            force_sigma: 10.0,
        });
        let r2 = dynamics_residual(&p, &k, &contacts, &g);
        assert_eq!(r1, r2);
    }

    #[test]
    fn frame_equivariance() {
        // rotating every input by a common rotation rotates the residual
        let mut rng = StdRng::seed_from_u64(19);
        for _ in 0..100 {
            let p = InertialParams::new(
                rng.gen_range(0.1..3.0),
                Vec3::from_fn(|_, _| rng.gen_range(-0.3..0.3)),
                Vec3::from_fn(|_, _| rng.gen_range(0.0..0.4)),
                exp_rotation(&Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0))),
            );
            let k = random_window(&mut rng);
            let g = Vec3::from_fn(|_, _| rng.gen_range(-10.0..10.0));
            let contacts = [ContactObservation {
                contact_id: 0,
                point: Vec3::from_fn(|_, _| rng.gen_range(-0.2..0.2)),
                force: Vec3::from_fn(|_, _| rng.gen_range(-3.0..3.0)),
                force_sigma: 1e-6,
            }];
            let r0 = dynamics_residual(&p, &k, &contacts, &g);

            let q = exp_rotation(&Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0)));
            let qm = q.to_matrix();
            let p_rot = InertialParams::new(
                p.mass,
                q.rotate(&p.com),
                p.principal_moments,
                q.compose(&p.principal_rotation),
            );
            let k_rot = KinematicWindow {
                omega_prev: q.rotate(&k.omega_prev),
                omega_curr: q.rotate(&k.omega_curr),
                linear_accel: q.rotate(&k.linear_accel),
                angular_accel: q.rotate(&k.angular_accel),
                frame_pose: k.frame_pose,
            };
            let contacts_rot = [ContactObservation {
                contact_id: 0,
                point: q.rotate(&contacts[0].point),
                force: q.rotate(&contacts[0].force),
                force_sigma: 1e-6,
            }];
            let r1 = dynamics_residual(&p_rot, &k_rot, &contacts_rot, &q.rotate(&g));
            assert_relative_eq!(r1.force, qm * r0.force, epsilon = 1e-10);
            assert_relative_eq!(r1.torque, qm * r0.torque, epsilon = 1e-10);
        }
    }
}
