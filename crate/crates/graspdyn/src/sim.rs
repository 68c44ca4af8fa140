//! Deterministic rigid-body simulator for generating ground-truth grasp
//! trajectories, plus the force- and pose-noise models of the simulation
//! study.
//!
//! Two stepping modes are provided:
//!
//! * [`step`] integrates the continuous Newton-Euler dynamics with a
//!   semi-implicit Euler scheme at a fine timestep. Datasets produced this
//!   way carry the genuine finite-difference discretization error that the
//!   estimators must cope with at the sample rate.
//! * The sample-exact mode advances the state at the sample period with the
//!   discrete-time wrench balance that the estimation pipeline inverts, so
//!   the recorded dataset satisfies the window residual to machine precision.
//!   This is the master self-consistency oracle for the whole artifact.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector6};
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::ContactObservation;
use crate::error::{Error, Result};
use crate::hull::ConvexHull;
use crate::inertia::{body_inertia, consistency_violations, InertialParams};
use crate::se3::{
    exp_pose, exp_rotation, hat, Mat3, Pose, TimedPose, Twist, Vec3,
};

/// Default per-contact noise scale recorded for noiseless simulated forces.
pub const NOISELESS_FORCE_SIGMA: f64 = 1e-6;

/// The simulated object: ground-truth parameters, geometry, and the
/// body-frame points where the fingertips apply force.
#[derive(Debug, Clone)]
pub struct RigidBodyModel {
    pub params: InertialParams,
    pub hull: ConvexHull,
    pub attachments: Vec<Vec3>,
}

impl RigidBodyModel {
    pub fn new(params: InertialParams, hull: ConvexHull, attachments: Vec<Vec3>) -> Result<Self> {
        if !consistency_violations(&params, &hull).is_empty() {
            return Err(Error::InvalidConfig(
                "model parameters are not physically consistent".into(),
            ));
        }
        if attachments.is_empty() {
            return Err(Error::InvalidConfig("need at least one attachment".into()));
        }
        for (i, p) in attachments.iter().enumerate() {
            if !hull.contains(p, 1e-6) {
                return Err(Error::InvalidConfig(format!(
                    "attachment {i} lies outside the hull"
                )));
            }
        }
        Ok(RigidBodyModel {
            params,
            hull,
            attachments,
        })
    }
}

/// Sinusoidal excitation plus an optional per-sample dither on the commanded
/// net wrench. The hold component compensates gravity in the current body
/// frame so zero excitation produces a stationary grasp.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForceProfile {
    pub gravity_comp: bool,
    /// Peak sinusoidal net force per axis, N.
    pub force_amp: [f64; 3],
    pub force_freq_hz: [f64; 3],
    pub force_phase: [f64; 3],
    /// Peak sinusoidal net torque per axis, N m.
    pub torque_amp: [f64; 3],
    pub torque_freq_hz: [f64; 3],
    pub torque_phase: [f64; 3],
    /// Std-dev of a zero-order-hold random net force added per sample, N.
    pub force_dither: f64,
    /// Std-dev of a zero-order-hold random net torque added per sample, N m.
    pub torque_dither: f64,
    /// Route the excitation force through the center of mass (adds
    /// `r_c x F` to the commanded torque); with zero torque excitation the
    /// object then translates without rotating.
    pub force_through_com: bool,
    /// Weak impedance feedback emulating the robot's hold: translational
    /// stiffness (N/m) and damping (N s/m) on the center of mass, rotational
    /// stiffness (N m/rad) and damping (N m s/rad) on the attitude. Keeps the
    /// open-loop excitation from drifting; recorded like any other force.
    pub hold_stiffness: f64,
    pub hold_damping: f64,
    pub hold_ang_stiffness: f64,
    pub hold_ang_damping: f64,
}

impl Default for ForceProfile {
    fn default() -> Self {
        // frequencies chosen to excite all six inertia components while
        // keeping |omega| below ~3 rad/s at the default amplitudes
        ForceProfile {
            gravity_comp: true,
            force_amp: [2.0, 1.6, 1.8],
            force_freq_hz: [0.7, 1.1, 1.3],
            force_phase: [0.0, 1.0, 2.0],
            torque_amp: [0.25, 0.2, 0.3],
            torque_freq_hz: [1.1, 1.3, 0.7],
            torque_phase: [0.5, 1.5, 2.5],
            force_dither: 16.0,
            torque_dither: 0.3,
            force_through_com: true,
            hold_stiffness: 4.0,
            hold_damping: 4.0,
            hold_ang_stiffness: 2.0,
            hold_ang_damping: 1.0,
        }
    }
}

impl ForceProfile {
    /// Static hold only; the resulting trajectory is stationary.
    pub fn static_hold() -> Self {
        ForceProfile {
            force_amp: [0.0; 3],
            torque_amp: [0.0; 3],
            force_dither: 0.0,
            torque_dither: 0.0,
            ..Default::default()
        }
    }

    /// Smooth excitation only (no dither).
    pub fn smooth(&self) -> Self {
        ForceProfile {
            force_dither: 0.0,
            torque_dither: 0.0,
            ..self.clone()
        }
    }

    fn sinusoid(&self, t: f64) -> (Vec3, Vec3) {
        let mut f = Vec3::zeros();
        let mut tau = Vec3::zeros();
        for i in 0..3 {
            f[i] = self.force_amp[i]
                * (2.0 * std::f64::consts::PI * self.force_freq_hz[i] * t + self.force_phase[i])
                    .sin();
            tau[i] = self.torque_amp[i]
                * (2.0 * std::f64::consts::PI * self.torque_freq_hz[i] * t + self.torque_phase[i])
                    .sin();
        }
        (f, tau)
    }

    /// Commanded net body-frame wrench at time `t`, including the
    /// gravity-compensating hold for the current orientation and the
    /// impedance feedback for the current state.
    pub fn net_wrench(
        &self,
        params: &InertialParams,
        pose: &Pose,
        twist: &Twist,
        g_body: &Vec3,
        t: f64,
        dither: Option<&(Vec3, Vec3)>,
    ) -> (Vec3, Vec3) {
        let (mut f, mut tau) = self.sinusoid(t);
        if let Some((df, dtau)) = dither {
            f += df;
            tau += dtau;
        }
        if self.force_through_com {
            tau += params.com.cross(&f);
        }
        if self.gravity_comp {
            f -= params.mass * g_body;
            tau -= params.mass * params.com.cross(g_body);
        }
        // impedance hold about the start pose (identity, com at rest)
        let rinv = pose.rotation.inverse();
        let com_world = pose.transform_point(&params.com);
        let com_rest = params.com;
        let v_com_world = pose
            .rotation
            .rotate(&(twist.linear + twist.angular.cross(&params.com)));
        let f_fb = rinv.rotate(
            &(-self.hold_stiffness * (com_world - com_rest) - self.hold_damping * v_com_world),
        );
        let att_err = crate::se3::log_rotation(&pose.rotation);
        let tau_fb =
            rinv.rotate(&(-self.hold_ang_stiffness * att_err)) - self.hold_ang_damping * twist.angular;
        f += f_fb;
        tau += tau_fb + params.com.cross(&f_fb);
        (f, tau)
    }
}

/// How the recorded samples relate to the integrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SampleMode {
    /// Fine semi-implicit integration between samples; the recorded windows
    /// carry realistic finite-difference discretization error.
    #[default]
    Integrated,
    /// Advance at the sample period with the discrete wrench balance; window
    /// residuals vanish to machine precision.
    Exact,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    /// Integration timestep, seconds.
    pub dt: f64,
    /// Sample period, seconds.
    pub sample_period: f64,
    pub duration: f64,
    pub gravity: [f64; 3],
    pub profile: ForceProfile,
    pub seed: u64,
    pub mode: SampleMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-4,
            sample_period: 0.01,
            duration: 10.0,
            gravity: [0.0, 0.0, -9.81],
            profile: ForceProfile::default(),
            seed: 0,
            mode: SampleMode::Integrated,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        if self.dt > self.sample_period + 1e-15 {
            return Err(Error::InvalidConfig(
                "dt must not exceed the sample period".into(),
            ));
        }
        if !(self.duration > 0.0) {
            return Err(Error::InvalidConfig("duration must be positive".into()));
        }
        Ok(())
    }

    pub fn gravity_vec(&self) -> Vec3 {
        Vec3::from(self.gravity)
    }
}

/// Rigid-body state: world pose and body twist.
#[derive(Debug, Clone, Copy)]
pub struct BodyState {
    pub pose: Pose,
    pub twist: Twist,
}

impl BodyState {
    pub fn at_rest(pose: Pose) -> Self {
        BodyState {
            pose,
            twist: Twist::zero(),
        }
    }
}

/// One recorded timestep.
#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub stamp: f64,
    pub pose: Pose,
    pub contacts: Vec<ContactObservation>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrajectoryMeta {
    pub seed: u64,
    pub noise_sigma2: f64,
    pub source: String,
}

/// A dataset of timed poses and per-timestep contact observations.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn timed_poses(&self) -> Vec<TimedPose> {
        self.samples
            .iter()
            .map(|s| TimedPose::new(s.pose, s.stamp))
            .collect()
    }
}

/// Exact per-sample kinematics exported by the integrator for oracle use:
/// instantaneous body-frame velocity, proper acceleration `a = vdot + w x v`,
/// angular acceleration, and body-frame gravity.
#[derive(Debug, Clone, Copy)]
pub struct SampleKinematics {
    pub omega: Vec3,
    pub linear_accel: Vec3,
    pub angular_accel: Vec3,
    pub g_body: Vec3,
}

/// Solve the instantaneous Newton-Euler system for proper acceleration and
/// angular acceleration given the applied net wrench.
fn forward_dynamics(
    params: &InertialParams,
    bh: &Mat3,
    omega: &Vec3,
    net_force: &Vec3,
    net_torque: &Vec3,
    g_body: &Vec3,
) -> Result<(Vec3, Vec3)> {
    let m = params.mass;
    let rc = params.com;
    let mut lhs = Matrix6::<f64>::zeros();
    lhs.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(m * Matrix3::identity()));
    lhs.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-m * hat(&rc)));
    lhs.fixed_view_mut::<3, 3>(3, 0).copy_from(&(m * hat(&rc)));
    lhs.fixed_view_mut::<3, 3>(3, 3).copy_from(bh);

    let rhs_f = net_force + m * g_body - m * omega.cross(&omega.cross(&rc));
    let rhs_t = net_torque + m * rc.cross(g_body) - omega.cross(&(bh * omega));
    let mut rhs = Vector6::<f64>::zeros();
    rhs.fixed_rows_mut::<3>(0).copy_from(&rhs_f);
    rhs.fixed_rows_mut::<3>(3).copy_from(&rhs_t);

    let sol = lhs.lu().solve(&rhs).ok_or(Error::SingularInertia)?;
    Ok((
        Vec3::new(sol[0], sol[1], sol[2]),
        Vec3::new(sol[3], sol[4], sol[5]),
    ))
}

/// Semi-implicit Euler step of the continuous dynamics under prescribed
/// body-frame forces at the attachment points. The position update uses the
/// velocity midpoint, and the gyroscopic update is solved implicitly so
/// torque-free angular momentum is conserved to iteration tolerance.
pub fn step(
    state: &BodyState,
    model: &RigidBodyModel,
    forces: &[Vec3],
    gravity_world: &Vec3,
    dt: f64,
) -> Result<BodyState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig("dt must be positive".into()));
    }
    let l = model.params.principal_moments;
    let near_zero = [l.x, l.y, l.z].iter().filter(|v| v.abs() < 1e-12).count();
    if near_zero >= 2 {
        return Err(Error::SingularInertia);
    }
    let bh = body_inertia(&model.params);
    let g_body = state.pose.rotation.inverse().rotate(gravity_world);

    let mut net_force = Vec3::zeros();
    let mut net_torque = Vec3::zeros();
    for (p, f) in model.attachments.iter().zip(forces.iter()) {
        net_force += f;
        net_torque += p.cross(f);
    }

    let omega = state.twist.angular;
    let v = state.twist.linear;
    let (a, _) = forward_dynamics(&model.params, &bh, &omega, &net_force, &net_torque, &g_body)?;

    // implicit angular update: bH w' = exp(-dt [w']) bH w + dt tau_eff,
    // fixed-point iterated. Paired with the rotation update R' = R exp(dt w')
    // this conserves world-frame angular momentum exactly when tau_eff = 0.
    let m = model.params.mass;
    let rc = model.params.com;
    let tau_eff = net_torque + m * rc.cross(&g_body) - m * rc.cross(&a);
    let l_body = bh * omega;
    let bh_inv = bh.try_inverse().ok_or(Error::SingularInertia)?;
    let mut omega_new = omega;
    for _ in 0..4 {
        let r_step = exp_rotation(&(-dt * omega_new)).to_matrix();
        omega_new = bh_inv * (r_step * l_body + dt * tau_eff);
    }

    let vdot = a - omega.cross(&v);
    let v_new = v + dt * vdot;

    // rotation advances with the updated rate; translation uses the velocity
    // midpoint, which is exact for constant acceleration
    let rotation = state.pose.rotation.compose(&exp_rotation(&(dt * omega_new)));
    let translation = state.pose.translation
        + state.pose.rotation.rotate(&(0.5 * dt * (v + v_new)));
    Ok(BodyState {
        pose: Pose::new(rotation, translation),
        twist: Twist::new(omega_new, v_new),
    })
}

/// Distribute a commanded net body-frame wrench over the attachment points by
/// minimum-norm least squares; the returned forces reproduce the wrench
/// exactly.
pub fn synthesize_grasp_forces(model: &RigidBodyModel, net_force: &Vec3, net_torque: &Vec3) -> Vec<Vec3> {
    let n = model.attachments.len();
    let mut g = DMatrix::<f64>::zeros(6, 3 * n);
    for (i, p) in model.attachments.iter().enumerate() {
        g.view_mut((0, 3 * i), (3, 3)).copy_from(&Mat3::identity());
        g.view_mut((3, 3 * i), (3, 3)).copy_from(&hat(p));
    }
    let w = DVector::from_iterator(6, net_force.iter().chain(net_torque.iter()).cloned());
    let gt = g.transpose();
    let ggt = &g * &gt;
    let sol = ggt
        .lu()
        .solve(&w)
        .expect("grasp matrix G G^T is invertible for non-collinear attachments");
    let f = gt * sol;
    (0..n)
        .map(|i| Vec3::new(f[3 * i], f[3 * i + 1], f[3 * i + 2]))
        .collect()
}

fn contacts_from_forces(model: &RigidBodyModel, forces: &[Vec3]) -> Vec<ContactObservation> {
    model
        .attachments
        .iter()
        .zip(forces.iter())
        .enumerate()
        .map(|(i, (p, f))| ContactObservation {
            contact_id: i as u32,
            point: *p,
            force: *f,
            force_sigma: NOISELESS_FORCE_SIGMA,
        })
        .collect()
}

/// Run the simulator and return the recorded trajectory.
pub fn run_sim(model: &RigidBodyModel, config: &SimConfig) -> Result<Trajectory> {
    Ok(run_sim_detailed(model, config)?.0)
}

/// As [`run_sim`], additionally returning the integrator's exact per-sample
/// kinematics for oracle use.
pub fn run_sim_detailed(
    model: &RigidBodyModel,
    config: &SimConfig,
) -> Result<(Trajectory, Vec<SampleKinematics>)> {
    config.validate()?;
    let n_samples = (config.duration / config.sample_period).round() as usize;
    if n_samples < 3 {
        return Err(Error::InvalidConfig(
            "duration must cover at least 3 samples".into(),
        ));
    }
    let dithers = draw_dithers(config, n_samples);
    match config.mode {
        SampleMode::Integrated => run_integrated(model, config, n_samples, &dithers),
        SampleMode::Exact => run_exact(model, config, n_samples, &dithers),
    }
}

/// Zero-order-hold dither per sample: i.i.d. Gaussian net force and torque,
/// held constant over the sample period. The impedance hold keeps the
/// resulting velocity random walk bounded.
fn draw_dithers(config: &SimConfig, n: usize) -> Vec<(Vec3, Vec3)> {
    let p = &config.profile;
    if p.force_dither == 0.0 && p.torque_dither == 0.0 {
        return vec![(Vec3::zeros(), Vec3::zeros()); n];
    }
    let mut rng = StdRng::seed_from_u64(config.seed.wrapping_add(0x9e3779b97f4a7c15));
    let nf = Normal::new(0.0, p.force_dither.max(f64::MIN_POSITIVE)).unwrap();
    let nt = Normal::new(0.0, p.torque_dither.max(f64::MIN_POSITIVE)).unwrap();
    (0..n)
        .map(|_| {
            let f = if p.force_dither > 0.0 {
                Vec3::new(nf.sample(&mut rng), nf.sample(&mut rng), nf.sample(&mut rng))
            } else {
                Vec3::zeros()
            };
            let t = if p.torque_dither > 0.0 {
                Vec3::new(nt.sample(&mut rng), nt.sample(&mut rng), nt.sample(&mut rng))
            } else {
                Vec3::zeros()
            };
            (f, t)
        })
        .collect()
}

fn run_integrated(
    model: &RigidBodyModel,
    config: &SimConfig,
    n_samples: usize,
    dithers: &[(Vec3, Vec3)],
) -> Result<(Trajectory, Vec<SampleKinematics>)> {
    let g_world = config.gravity_vec();
    let steps_per_sample = (config.sample_period / config.dt).round().max(1.0) as usize;
    let dt = config.sample_period / steps_per_sample as f64;
    let bh = body_inertia(&model.params);

    let mut state = BodyState::at_rest(Pose::identity());
    let mut samples = Vec::with_capacity(n_samples);
    let mut kin = Vec::with_capacity(n_samples);

    for k in 0..n_samples {
        let t = k as f64 * config.sample_period;
        let g_body = state.pose.rotation.inverse().rotate(&g_world);
        let (net_f, net_tau) = config.profile.net_wrench(
            &model.params,
            &state.pose,
            &state.twist,
            &g_body,
            t,
            Some(&dithers[k]),
        );
        let forces = synthesize_grasp_forces(model, &net_f, &net_tau);
        samples.push(TrajectorySample {
            stamp: t,
            pose: state.pose,
            contacts: contacts_from_forces(model, &forces),
        });
        let (a, wdot) = forward_dynamics(&model.params, &bh, &state.twist.angular, &net_f, &net_tau, &g_body)?;
        kin.push(SampleKinematics {
            omega: state.twist.angular,
            linear_accel: a,
            angular_accel: wdot,
            g_body,
        });

        // hold the sampled force constant across the sample interval
        for _ in 0..steps_per_sample {
            state = step(&state, model, &forces, &g_world, dt)?;
        }
    }
    Ok((
        Trajectory {
            samples,
            meta: TrajectoryMeta {
                seed: config.seed,
                noise_sigma2: 0.0,
                source: "sim".into(),
            },
        },
        kin,
    ))
}

/// Advance at the sample period with the discrete-time wrench balance whose
/// inverse is the estimator's finite-difference pipeline. Given the interval
/// twist `xi_k` (spanning `[k, k+1]`, frame `k`) and forces at sample `k`,
/// the balance is linear in `(a, wdot)`:
///
/// ```text
/// m a - (m [rc]x + m h [[w1]x rc]x) wdot = F + m g - m [w1]x [w1]x rc
/// m [rc]x a + (bH - h [bH w1]x) wdot     = tau + m [rc]x g - [w1]x bH w1
/// ```
///
/// after substituting `w2' = w1 + h wdot` into the Coriolis-like terms. The
/// next interval twist follows by un-transporting `xi_k + h (wdot, a)`.
fn run_exact(
    model: &RigidBodyModel,
    config: &SimConfig,
    n_samples: usize,
    dithers: &[(Vec3, Vec3)],
) -> Result<(Trajectory, Vec<SampleKinematics>)> {
    let g_world = config.gravity_vec();
    let h = config.sample_period;
    let bh = body_inertia(&model.params);
    let m = model.params.mass;
    let rc = model.params.com;

    let mut pose = Pose::identity();
    let mut xi = Twist::zero();
    let mut samples = Vec::with_capacity(n_samples);
    let mut kin = Vec::with_capacity(n_samples);

    for k in 0..n_samples {
        let t = k as f64 * h;
        let g_body = pose.rotation.inverse().rotate(&g_world);
        let (net_f, net_tau) = config.profile.net_wrench(
            &model.params,
            &pose,
            &xi,
            &g_body,
            t,
            Some(&dithers[k]),
        );
        let forces = synthesize_grasp_forces(model, &net_f, &net_tau);
        samples.push(TrajectorySample {
            stamp: t,
            pose,
            contacts: contacts_from_forces(model, &forces),
        });

        let w1 = xi.angular;
        let mut lhs = Matrix6::<f64>::zeros();
        lhs.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(m * Matrix3::identity()));
        lhs.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&(-m * hat(&rc) - m * h * hat(&w1.cross(&rc))));
        lhs.fixed_view_mut::<3, 3>(3, 0).copy_from(&(m * hat(&rc)));
        lhs.fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&(bh - h * hat(&(bh * w1))));
        let rhs_f = net_f + m * g_body - m * w1.cross(&w1.cross(&rc));
        let rhs_t = net_tau + m * rc.cross(&g_body) - w1.cross(&(bh * w1));
        let mut rhs = Vector6::<f64>::zeros();
        rhs.fixed_rows_mut::<3>(0).copy_from(&rhs_f);
        rhs.fixed_rows_mut::<3>(3).copy_from(&rhs_t);
        let sol = lhs.lu().solve(&rhs).ok_or(Error::SingularInertia)?;
        let a = Vec3::new(sol[0], sol[1], sol[2]);
        let wdot = Vec3::new(sol[3], sol[4], sol[5]);
        kin.push(SampleKinematics {
            omega: w1,
            linear_accel: a,
            angular_accel: wdot,
            g_body,
        });

        // transported next twist, then undo the transport exactly
        let xi2_base = Twist::new(w1 + h * wdot, xi.linear + h * a);
        let transport = Mat3::identity() + h * hat(&w1);
        let inv = transport
            .try_inverse()
            .expect("I + h [w]x is invertible for h |w| < 1");
        let xi2 = Twist::new(inv * xi2_base.angular, inv * xi2_base.linear);

        pose = pose.compose(&exp_pose(&xi.scale(h)));
        xi = xi2;
    }
    Ok((
        Trajectory {
            samples,
            meta: TrajectoryMeta {
                seed: config.seed,
                noise_sigma2: 0.0,
                source: "sim".into(),
            },
        },
        kin,
    ))
}

/// Add i.i.d. zero-mean Gaussian noise of variance `sigma2` to every force
/// axis; `force_sigma` becomes `sqrt(sigma2)`. Zero variance returns the
/// trajectory unchanged.
pub fn add_force_noise(traj: &Trajectory, sigma2: f64, seed: u64) -> Result<Trajectory> {
    if sigma2 < 0.0 {
        return Err(Error::InvalidConfig("sigma2 must be nonnegative".into()));
    }
    if sigma2 == 0.0 {
        return Ok(traj.clone());
    }
    let sigma = sigma2.sqrt();
    let mut rng = StdRng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut out = traj.clone();
    for s in &mut out.samples {
        for c in &mut s.contacts {
            for i in 0..3 {
                c.force[i] += normal.sample(&mut rng);
            }
            c.force_sigma = sigma;
        }
    }
    out.meta.noise_sigma2 = sigma2;
    out.meta.seed = seed;
    Ok(out)
}

/// Right-perturb every pose by `exp` of Gaussian local noise.
pub fn add_pose_noise(
    traj: &Trajectory,
    rot_sigma: f64,
    trans_sigma: f64,
    seed: u64,
) -> Result<Trajectory> {
    if rot_sigma < 0.0 || trans_sigma < 0.0 {
        return Err(Error::InvalidConfig("sigmas must be nonnegative".into()));
    }
    if rot_sigma == 0.0 && trans_sigma == 0.0 {
        return Ok(traj.clone());
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let rot = Normal::new(0.0, rot_sigma.max(f64::MIN_POSITIVE)).unwrap();
    let tr = Normal::new(0.0, trans_sigma.max(f64::MIN_POSITIVE)).unwrap();
    let mut out = traj.clone();
    for s in &mut out.samples {
        let dr = if rot_sigma > 0.0 {
            Vec3::new(rot.sample(&mut rng), rot.sample(&mut rng), rot.sample(&mut rng))
        } else {
            Vec3::zeros()
        };
        let dt = if trans_sigma > 0.0 {
            Vec3::new(tr.sample(&mut rng), tr.sample(&mut rng), tr.sample(&mut rng))
        } else {
            Vec3::zeros()
        };
        s.pose = s.pose.compose(&exp_pose(&Twist::new(dr, dt)));
    }
    Ok(out)
}

/// The reference simulated object: ground-truth parameters from the
/// simulation study, a box hull containing the center of mass, and four
/// attachment points.
pub fn reference_model() -> RigidBodyModel {
    let params = crate::inertia::reference_sim_params();
    let hull = ConvexHull::axis_aligned_box(Vec3::new(0.2, 0.5, 0.1), Vec3::new(0.45, 0.65, 0.45));
    let attachments = vec![
        Vec3::new(0.55, 0.9, 0.1),
        Vec3::new(-0.15, 0.9, 0.1),
        Vec3::new(0.2, 0.1, 0.4),
        Vec3::new(0.2, 0.1, -0.2),
    ];
    RigidBodyModel::new(params, hull, attachments).expect("reference model is consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{dynamics_residual, gravity_in_frame};
    use crate::se3::window_kinematics;
    use approx::assert_relative_eq;

    fn max_window_residual(traj: &Trajectory, params: &InertialParams, g_world: &Vec3) -> f64 {
        let poses = traj.timed_poses();
        let mut max = 0.0f64;
        for t in 0..poses.len() - 2 {
            let k = window_kinematics(&poses[t], &poses[t + 1], &poses[t + 2]).unwrap();
            let g_body = gravity_in_frame(g_world, &k.frame_pose);
            let r = dynamics_residual(params, &k, &traj.samples[t].contacts, &g_body);
            max = max.max(r.norm());
        }
        max
    }

    #[test]
    fn torque_free_principal_spin_conserves_rate() {
        let model = free_model();
        let g = Vec3::zeros();
        // spin about the body z principal axis
        let mut state = BodyState {
            pose: Pose::identity(),
            twist: Twist::new(Vec3::new(0.0, 0.0, 2.0), Vec3::zeros()),
        };
        let forces = vec![Vec3::zeros(); model.attachments.len()];
        for _ in 0..10_000 {
            state = step(&state, &model, &forces, &g, 1e-4).unwrap();
        }
        assert!((state.twist.angular.norm() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn projectile_com_follows_parabola() {
        let model = free_model();
        let g = Vec3::new(0.0, 0.0, -9.81);
        let mut state = BodyState::at_rest(Pose::identity());
        let forces = vec![Vec3::zeros(); model.attachments.len()];
        let dt = 1e-4;
        for _ in 0..10_000 {
            state = step(&state, &model, &forces, &g, dt).unwrap();
        }
        let t = 1.0;
        let com_world = state.pose.transform_point(&model.params.com);
        let expect = model.params.com + Vec3::new(0.0, 0.0, -0.5 * 9.81 * t * t);
        assert!(
            (com_world - expect).norm() < 1e-8,
            "com {:?} expect {:?}",
            com_world,
            expect
        );
        assert!(state.pose.rotation.angle_to(&crate::se3::Rotation::identity()) < 1e-12);
    }

    #[test]
    fn torque_free_asymmetric_spin_conserves_momentum() {
        let model = free_model();
        let g = Vec3::zeros();
        let bh = body_inertia(&model.params);
        let w0 = Vec3::new(1.5, 0.3, 0.8);
        let mut state = BodyState {
            pose: Pose::identity(),
            twist: Twist::new(w0, Vec3::zeros()),
        };
        let l0 = bh * w0; // world frame momentum at identity
        let forces = vec![Vec3::zeros(); model.attachments.len()];
        for _ in 0..10_000 {
            state = step(&state, &model, &forces, &g, 1e-4).unwrap();
        }
        let l1 = state.pose.rotation.rotate(&(bh * state.twist.angular));
        assert!(
            (l1 - l0).norm() < 1e-6,
            "momentum drift {:?}",
            (l1 - l0).norm()
        );
    }

    fn free_model() -> RigidBodyModel {
        // com at origin, distinct moments
        let params = InertialParams::new(
            1.0,
            Vec3::zeros(),
            Vec3::new(0.05, 0.1, 0.2),
            crate::se3::Rotation::identity(),
        );
        let hull = ConvexHull::axis_aligned_box(Vec3::zeros(), Vec3::new(0.5, 0.5, 0.5));
        let attachments = vec![
            Vec3::new(0.4, 0.0, 0.0),
            Vec3::new(-0.4, 0.0, 0.0),
            Vec3::new(0.0, 0.4, 0.0),
            Vec3::new(0.0, 0.0, 0.4),
        ];
        RigidBodyModel::new(params, hull, attachments).unwrap()
    }

    #[test]
    fn singular_inertia_rejected() {
        let params = InertialParams::new(
            1.0,
            Vec3::zeros(),
            Vec3::new(0.1, 0.0, 0.0),
            crate::se3::Rotation::identity(),
        );
        let hull = ConvexHull::axis_aligned_box(Vec3::zeros(), Vec3::new(0.5, 0.5, 0.5));
        let model = RigidBodyModel::new(params, hull, vec![Vec3::zeros()]).unwrap();
        let state = BodyState::at_rest(Pose::identity());
        assert!(matches!(
            step(&state, &model, &[Vec3::zeros()], &Vec3::zeros(), 1e-4),
            Err(Error::SingularInertia)
        ));
    }

    #[test]
    fn force_distribution_reproduces_wrench() {
        let model = reference_model();
        let f = Vec3::new(1.0, -2.0, 3.0);
        let tau = Vec3::new(0.2, 0.4, -0.1);
        let forces = synthesize_grasp_forces(&model, &f, &tau);
        let mut sf = Vec3::zeros();
        let mut st = Vec3::zeros();
        for (p, fi) in model.attachments.iter().zip(forces.iter()) {
            sf += fi;
            st += p.cross(fi);
        }
        assert!((sf - f).norm() < 1e-12);
        assert!((st - tau).norm() < 1e-12);
    }

    #[test]
    fn static_hold_is_stationary() {
        let model = reference_model();
        let config = SimConfig {
            duration: 0.5,
            profile: ForceProfile::static_hold(),
            ..Default::default()
        };
        let traj = run_sim(&model, &config).unwrap();
        for s in &traj.samples {
            assert!(s.pose.translation.norm() < 1e-9);
            assert!(s.pose.rotation.angle_to(&crate::se3::Rotation::identity()) < 1e-9);
        }
    }

    #[test]
    fn sample_count() {
        let model = reference_model();
        let config = SimConfig {
            duration: 1.0,
            ..Default::default()
        };
        let traj = run_sim(&model, &config).unwrap();
        assert_eq!(traj.samples.len(), 100);
    }

    #[test]
    fn determinism_same_seed() {
        let model = reference_model();
        let config = SimConfig {
            duration: 0.5,
            seed: 42,
            ..Default::default()
        };
        let a = run_sim(&model, &config).unwrap();
        let b = run_sim(&model, &config).unwrap();
        for (sa, sb) in a.samples.iter().zip(b.samples.iter()) {
            assert_eq!(sa.pose.rotation.wxyz(), sb.pose.rotation.wxyz());
            assert_eq!(sa.pose.translation, sb.pose.translation);
            for (ca, cb) in sa.contacts.iter().zip(sb.contacts.iter()) {
                assert_eq!(ca.force, cb.force);
            }
        }
    }

    #[test]
    fn exact_mode_master_oracle() {
        let model = reference_model();
        let config = SimConfig {
            duration: 2.0,
            mode: SampleMode::Exact,
            ..Default::default()
        };
        let traj = run_sim(&model, &config).unwrap();
        let max = max_window_residual(&traj, &model.params, &config.gravity_vec());
        assert!(max < 1e-6, "max window residual {max}");
    }

    #[test]
    fn exact_mode_smooth_profile_oracle() {
        let model = reference_model();
        let config = SimConfig {
            duration: 2.0,
            mode: SampleMode::Exact,
            profile: ForceProfile::default().smooth(),
            ..Default::default()
        };
        let traj = run_sim(&model, &config).unwrap();
        let max = max_window_residual(&traj, &model.params, &config.gravity_vec());
        assert!(max < 1e-6, "max window residual {max}");
    }

    #[test]
    fn integrated_mode_instantaneous_rows_exact() {
        // the exported per-sample kinematics satisfy the instantaneous
        // balance with the recorded forces
        let model = reference_model();
        let config = SimConfig {
            duration: 0.5,
            ..Default::default()
        };
        let (traj, kin) = run_sim_detailed(&model, &config).unwrap();
        let bh = body_inertia(&model.params);
        let m = model.params.mass;
        let rc = model.params.com;
        for (s, k) in traj.samples.iter().zip(kin.iter()) {
            let (f, tau) = crate::dynamics::net_contact_wrench(&s.contacts);
            let lhs_f = m * (k.linear_accel - k.g_body) - m * rc.cross(&k.angular_accel)
                + m * k.omega.cross(&k.omega.cross(&rc));
            let lhs_t = m * rc.cross(&(k.linear_accel - k.g_body))
                + bh * k.angular_accel
                + k.omega.cross(&(bh * k.omega));
            assert!((lhs_f - f).norm() < 1e-9);
            assert!((lhs_t - tau).norm() < 1e-9);
        }
    }

    #[test]
    fn force_noise_statistics() {
        let model = reference_model();
        let config = SimConfig {
            duration: 30.0,
            profile: ForceProfile::static_hold(),
            ..Default::default()
        };
        let traj = run_sim(&model, &config).unwrap();
        let noisy = add_force_noise(&traj, 1.0, 7).unwrap();
        let mut devs = Vec::new();
        for (s, n) in traj.samples.iter().zip(noisy.samples.iter()) {
            for (c0, c1) in s.contacts.iter().zip(n.contacts.iter()) {
                for i in 0..3 {
                    devs.push(c1.force[i] - c0.force[i]);
                }
            }
        }
        assert!(devs.len() >= 10_000);
        let n = devs.len() as f64;
        let mean = devs.iter().sum::<f64>() / n;
        let var = devs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.03, "noise mean {mean}");
        assert!((0.94..=1.06).contains(&var), "noise variance {var}");

        let clean = add_force_noise(&traj, 0.0, 7).unwrap();
        for (s, c) in traj.samples.iter().zip(clean.samples.iter()) {
            for (a, b) in s.contacts.iter().zip(c.contacts.iter()) {
                assert_eq!(a.force, b.force);
                assert_eq!(a.force_sigma, b.force_sigma);
            }
        }
    }

    #[test]
    fn pose_noise_statistics() {
        let model = reference_model();
        let config = SimConfig {
            duration: 10.0,
            profile: ForceProfile::static_hold(),
            ..Default::default()
        };
        let traj = run_sim(&model, &config).unwrap();
        let noisy = add_pose_noise(&traj, 1e-3, 1e-3, 3).unwrap();
        let mut trans_dev = Vec::new();
        for (s, n) in traj.samples.iter().zip(noisy.samples.iter()) {
            assert_relative_eq!(n.pose.rotation.norm(), 1.0, epsilon = 1e-12);
            let d = n.pose.translation - s.pose.translation;
            for i in 0..3 {
                trans_dev.push(d[i]);
            }
        }
        let n = trans_dev.len() as f64;
        let var = trans_dev.iter().map(|d| d * d).sum::<f64>() / n;
        let std = var.sqrt();
        assert!((std - 1e-3).abs() < 1e-4, "pose noise std {std}");

        let same = add_pose_noise(&traj, 0.0, 0.0, 3).unwrap();
        assert_eq!(same.samples[5].pose.translation, traj.samples[5].pose.translation);
    }
}
