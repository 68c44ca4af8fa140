//! Inertial estimation as sparse nonlinear least squares over a factor
//! graph.
//!
//! Variables are the object pose per timestep, the force and contact point
//! per fingertip per timestep, and one inertial-parameter block. Measurement
//! factors pin each variable to its observation; a dynamics factor per
//! consecutive pose triple enforces the Newton-Euler wrench balance; the
//! physical-consistency factor penalizes constraint violations (active only
//! when violated); the geodesic prior factor pulls the pseudo-inertia toward
//! a reference. Four variants mirror the comparison methods:
//!
//! * `baseline-fg`   - vector-space inertial parameters, no C or B factors
//! * `no-c-no-g`     - manifold parameterization, no C or B factors
//! * `c-no-g`        - manifold + consistency factor
//! * `c-plus-g`      - manifold + consistency + geodesic prior (needs a prior)

mod baseline;
mod factors;
mod linear;
mod lm;
mod values;

pub use baseline::{
    baseline_least_squares, baseline_with_exact_kinematics, BaselineReport, Smoothing,
};
pub use factors::{constraint_residual, numeric_jacobian, EvalContext, Factor, LocalVal};
pub use lm::total_cost;
pub use values::{
    retract_inertial, retract_inertial_state, retract_pose, InertialState, Values, VariableId,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hull::{ConvexHull, CONTAINMENT_TOL};
use crate::inertia::{
    consistency_violations, devectorize, InertialMatrixForm, InertialParams, ParallelAxis,
    PseudoInertia, VectorParams,
};
use crate::se3::{Rotation, Vec3};
use crate::sim::Trajectory;

/// Estimation variant; names follow the comparison-method labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    BaselineFg,
    NoCNoG,
    CNoG,
    CPlusG,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::BaselineFg => "baseline-fg",
            Variant::NoCNoG => "no-c-no-g",
            Variant::CNoG => "c-no-g",
            Variant::CPlusG => "c-plus-g",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "baseline-fg" => Ok(Variant::BaselineFg),
            "no-c-no-g" => Ok(Variant::NoCNoG),
            "c-no-g" => Ok(Variant::CNoG),
            "c-plus-g" => Ok(Variant::CPlusG),
            other => Err(Error::InvalidConfig(format!("unknown variant '{other}'"))),
        }
    }

    pub fn has_constraints(&self) -> bool {
        matches!(self, Variant::CNoG | Variant::CPlusG)
    }

    pub fn has_prior(&self) -> bool {
        matches!(self, Variant::CPlusG)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum JacobianMode {
    #[default]
    AnalyticWhereAvailable,
    Numeric,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    pub lambda_increase: f64,
    pub lambda_decrease: f64,
    pub max_lambda: f64,
    /// Marquardt damping `lambda (diag(H) + I)` instead of `lambda I`.
    pub scaled_damping: bool,
    pub relative_decrease_tol: f64,
    pub constraint_weight: f64,
    pub geodesic_weight: f64,
    pub variant: Variant,
    pub jacobian: JacobianMode,
    pub jacobian_step: f64,
    pub pose_rot_sigma: f64,
    pub pose_trans_sigma: f64,
    pub contact_sigma: f64,
    pub dynamics_force_sigma: f64,
    pub dynamics_torque_sigma: f64,
    pub gravity: [f64; 3],
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 200,
            initial_lambda: 1e-4,
            lambda_increase: 10.0,
            lambda_decrease: 10.0,
            max_lambda: 1e12,
            scaled_damping: true,
            relative_decrease_tol: 1e-9,
            constraint_weight: 1e4,
            geodesic_weight: 1.0,
            variant: Variant::CNoG,
            jacobian: JacobianMode::AnalyticWhereAvailable,
            jacobian_step: 1e-6,
            pose_rot_sigma: 1e-3,
            pose_trans_sigma: 1e-3,
            contact_sigma: 2e-3,
            dynamics_force_sigma: 1e-3,
            dynamics_torque_sigma: 1e-3,
            gravity: [0.0, 0.0, -9.81],
        }
    }
}

impl SolverConfig {
    pub fn gravity_vec(&self) -> Vec3 {
        Vec3::from(self.gravity)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.initial_lambda,
            self.lambda_increase,
            self.lambda_decrease,
            self.max_lambda,
            self.relative_decrease_tol,
            self.constraint_weight,
            self.geodesic_weight,
            self.jacobian_step,
            self.pose_rot_sigma,
            self.pose_trans_sigma,
            self.contact_sigma,
            self.dynamics_force_sigma,
            self.dynamics_torque_sigma,
        ];
        if self.max_iterations == 0 || positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidConfig(
                "solver parameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// The assembled estimation problem.
pub struct FactorGraph {
    pub stamps: Vec<f64>,
    pub factors: Vec<Factor>,
    pub initial: Values,
    pub hull: ConvexHull,
    pub contact_counts: Vec<usize>,
    pub variant: Variant,
}

impl FactorGraph {
    pub fn count_factors(&self) -> FactorCounts {
        let mut c = FactorCounts::default();
        for f in &self.factors {
            match f {
                Factor::PoseMeas { .. } => c.pose_meas += 1,
                Factor::ForceMeas { .. } => c.force_meas += 1,
                Factor::ContactMeas { .. } => c.contact_meas += 1,
                Factor::Dynamics { .. } => c.dynamics += 1,
                Factor::Consistency => c.consistency += 1,
                Factor::GeodesicPrior { .. } => c.geodesic += 1,
            }
        }
        c
    }
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct FactorCounts {
    pub pose_meas: usize,
    pub force_meas: usize,
    pub contact_meas: usize,
    pub dynamics: usize,
    pub consistency: usize,
    pub geodesic: usize,
}

/// Default inertial seed: a small positive mass at the hull centroid with
/// tiny uniform moments and identity principal axes.
pub fn default_seed(hull: &ConvexHull) -> InertialParams {
    InertialParams::new(
        0.1,
        hull.centroid(),
        Vec3::new(1e-4, 1e-4, 1e-4),
        Rotation::identity(),
    )
}

/// Starting point for the inertial variable.
#[derive(Debug, Clone, Copy)]
pub enum InertialSeed {
    Default,
    Manifold(InertialParams),
    Vector(VectorParams),
}

/// Build the graph for a dataset: one measurement factor per observation,
/// one dynamics factor per pose triple, and the variant's inertial factors.
pub fn build_graph(
    dataset: &Trajectory,
    hull: &ConvexHull,
    config: &SolverConfig,
    prior: Option<&InertialParams>,
) -> Result<FactorGraph> {
    config.validate()?;
    let n = dataset.samples.len();
    if n < 3 {
        return Err(Error::DatasetTooShort(n));
    }
    for w in dataset.samples.windows(2) {
        if w[1].stamp - w[0].stamp <= 1e-9 {
            return Err(Error::DegenerateTimestamp {
                earlier: w[0].stamp,
                later: w[1].stamp,
            });
        }
    }
    if config.variant.has_prior() && prior.is_none() {
        return Err(Error::InvalidConfig(
            "variant c-plus-g requires a prior".into(),
        ));
    }

    let mut factors = Vec::new();
    let mut contact_counts = Vec::with_capacity(n);
    let mut poses = Vec::with_capacity(n);
    let mut forces = Vec::with_capacity(n);
    let mut contacts = Vec::with_capacity(n);
    let mut stamps = Vec::with_capacity(n);

    for (t, s) in dataset.samples.iter().enumerate() {
        stamps.push(s.stamp);
        poses.push(s.pose);
        factors.push(Factor::PoseMeas {
            t,
            measured: s.pose,
        });
        let mut fs = Vec::with_capacity(s.contacts.len());
        let mut ps = Vec::with_capacity(s.contacts.len());
        for (c, obs) in s.contacts.iter().enumerate() {
            if !(obs.force_sigma > 0.0) {
                return Err(Error::BadData {
                    context: format!("timestep {t} contact {c}"),
                    message: "force_sigma must be positive".into(),
                });
            }
            factors.push(Factor::ForceMeas {
                t,
                contact: c,
                measured: obs.force,
                sigma: obs.force_sigma,
            });
            factors.push(Factor::ContactMeas {
                t,
                contact: c,
                measured: obs.point,
            });
            fs.push(obs.force);
            ps.push(obs.point);
        }
        contact_counts.push(s.contacts.len());
        forces.push(fs);
        contacts.push(ps);
    }
    for base in 0..n - 2 {
        factors.push(Factor::Dynamics { base });
    }
    if config.variant.has_constraints() {
        factors.push(Factor::Consistency);
    }
    if let Some(p) = prior.filter(|_| config.variant.has_prior()) {
        let prior_inverse = crate::inertia::project_pseudo(p)
            .try_inverse()
            .ok_or(Error::SingularPrior)?;
        factors.push(Factor::GeodesicPrior { prior_inverse });
    }

    let seed = default_seed(hull);
    let inertial = match config.variant {
        Variant::BaselineFg => InertialState::Vector(crate::inertia::vectorize(&seed)),
        _ => InertialState::Manifold(seed),
    };

    Ok(FactorGraph {
        stamps,
        factors,
        initial: Values {
            poses,
            forces,
            contacts,
            inertial,
        },
        hull: hull.clone(),
        contact_counts,
        variant: config.variant,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationReason {
    Converged,
    MaxIterations,
    StalledAtMaxDamping,
}

/// Serializable inertial estimate in both parameterizations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportedParams {
    pub mass: f64,
    pub com: [f64; 3],
    /// Present for manifold variants.
    pub principal_moments: Option<[f64; 3]>,
    pub principal_rotation_wxyz: Option<[f64; 4]>,
    /// `[xx, yy, zz, xy, xz, yz]` about the center of mass.
    pub inertia_cm: [f64; 6],
    /// Same components about the body origin.
    pub inertia_body: [f64; 6],
}

impl ReportedParams {
    pub fn from_matrix_form(m: &InertialMatrixForm) -> Self {
        ReportedParams {
            mass: m.mass,
            com: m.com.into(),
            principal_moments: None,
            principal_rotation_wxyz: None,
            inertia_cm: crate::inertia::components_from_sym3(&m.inertia_cm),
            inertia_body: crate::inertia::components_from_sym3(&m.inertia_body),
        }
    }

    pub fn from_params(p: &InertialParams) -> Self {
        let m = InertialMatrixForm::from_params(p, ParallelAxis::Standard);
        ReportedParams {
            principal_moments: Some(p.principal_moments.into()),
            principal_rotation_wxyz: Some(p.principal_rotation.wxyz()),
            ..ReportedParams::from_matrix_form(&m)
        }
    }

    /// Pseudo-inertia of the estimate, for the error metric.
    pub fn pseudo(&self) -> PseudoInertia {
        PseudoInertia::from_parts(
            self.mass,
            &Vec3::from(self.com),
            &crate::inertia::sym3_from_components(&self.inertia_body),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothedValues {
    /// `[qw, qx, qy, qz, tx, ty, tz]` per timestep.
    pub poses: Vec<[f64; 7]>,
    pub forces: Vec<Vec<[f64; 3]>>,
    pub contacts: Vec<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: String,
    pub params: ReportedParams,
    pub cost_trace: Vec<f64>,
    pub iterations: usize,
    pub termination: TerminationReason,
    pub wall_time_s: f64,
    /// For constrained variants: whether the returned parameters satisfy all
    /// consistency constraints.
    pub consistency_ok: Option<bool>,
    /// Set when a rank-deficient system was solved by minimum norm.
    pub rank_warning: Option<String>,
    pub smoothed: Option<SmoothedValues>,
}

fn smoothed_from_values(v: &Values) -> SmoothedValues {
    SmoothedValues {
        poses: v
            .poses
            .iter()
            .map(|p| {
                let q = p.rotation.wxyz();
                [
                    q[0],
                    q[1],
                    q[2],
                    q[3],
                    p.translation.x,
                    p.translation.y,
                    p.translation.z,
                ]
            })
            .collect(),
        forces: v
            .forces
            .iter()
            .map(|fs| fs.iter().map(|f| [f.x, f.y, f.z]).collect())
            .collect(),
        contacts: v
            .contacts
            .iter()
            .map(|ps| ps.iter().map(|p| [p.x, p.y, p.z]).collect())
            .collect(),
    }
}

/// Batch optimization. After convergence the constrained variants are
/// checked against the strict consistency constraints; a violated run is
/// re-solved once with the constraint weight escalated a hundredfold, and
/// residual violations within the hinge tolerance (1e-6) are snapped onto
/// the constraint boundary. Larger violations flag `consistency_ok = false`.
pub fn solve(graph: &FactorGraph, config: &SolverConfig, seed: InertialSeed) -> Result<SolveReport> {
    config.validate()?;
    let started = std::time::Instant::now();

    let mut init = graph.initial.clone();
    match seed {
        InertialSeed::Default => {}
        InertialSeed::Manifold(p) => init.inertial = InertialState::Manifold(p),
        InertialSeed::Vector(v) => init.inertial = InertialState::Vector(v),
    }
    if matches!(graph.variant, Variant::BaselineFg)
        != matches!(init.inertial, InertialState::Vector(_))
    {
        return Err(Error::InvalidConfig(
            "seed parameterization does not match the variant".into(),
        ));
    }

    let mut outcome = lm::run(graph, config, init, config.constraint_weight)?;
    let mut consistency_ok = None;

    if graph.variant.has_constraints() {
        let params = *outcome
            .values
            .inertial
            .as_manifold()
            .expect("constrained variants are manifold-parameterized");
        if !consistency_violations(&params, &graph.hull).is_empty() {
            // one escalation pass, warm-started
            let escalated = config.constraint_weight * 100.0;
            outcome = lm::run(graph, config, outcome.values, escalated)?;
        }
        let params = outcome
            .values
            .inertial
            .as_manifold()
            .copied()
            .expect("constrained variants are manifold-parameterized");
        let snapped = snap_within_tolerance(&params, &graph.hull, 1e-6);
        if let InertialState::Manifold(p) = &mut outcome.values.inertial {
            *p = snapped;
        }
        consistency_ok = Some(consistency_violations(&snapped, &graph.hull).is_empty());
    }

    let params = match &outcome.values.inertial {
        InertialState::Manifold(p) => ReportedParams::from_params(p),
        InertialState::Vector(v) => ReportedParams::from_matrix_form(&devectorize(v)?),
    };

    Ok(SolveReport {
        method: graph.variant.name().to_string(),
        params,
        cost_trace: outcome.cost_trace,
        iterations: outcome.accepted_steps,
        termination: outcome.termination,
        wall_time_s: started.elapsed().as_secs_f64(),
        consistency_ok,
        rank_warning: None,
        smoothed: Some(smoothed_from_values(&outcome.values)),
    })
}

/// Move parameters violating a constraint by no more than `tol` onto the
/// boundary; larger violations are left untouched for the caller to flag.
fn snap_within_tolerance(p: &InertialParams, hull: &ConvexHull, tol: f64) -> InertialParams {
    let mut out = *p;
    if out.mass <= CONTAINMENT_TOL && -out.mass <= tol {
        out.mass = 2.0 * CONTAINMENT_TOL;
    }
    for i in 0..3 {
        if out.principal_moments[i] < 0.0 && -out.principal_moments[i] <= tol {
            out.principal_moments[i] = 0.0;
        }
    }
    for _ in 0..4 {
        let margins = hull.face_margins(&out.com);
        let mut moved = false;
        for (i, m) in margins.iter().enumerate() {
            if *m > CONTAINMENT_TOL && *m <= tol {
                out.com -= (*m + CONTAINMENT_TOL) * hull.halfspaces()[i].n();
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    out
}
