//! Dataset serialization, parameter and model files, flat key-value configs,
//! and metric emission.
//!
//! Trajectories are JSONL: an optional metadata header line followed by one
//! record per timestep. Numbers use the shortest representation that parses
//! back to the identical float, so write-read-write roundtrips are
//! byte-identical.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::ContactObservation;
use crate::error::{Error, Result};
use crate::graph::{JacobianMode, ReportedParams, SolveReport, SolverConfig, Variant};
use crate::hull::{ConvexHull, Halfspace};
use crate::inertia::{
    params_from_matrix, sym3_from_components, InertialParams, ParallelAxis,
};
use crate::se3::{Pose, Rotation, Vec3};
use crate::sim::{
    ForceProfile, RigidBodyModel, SampleMode, SimConfig, Trajectory, TrajectoryMeta,
    TrajectorySample,
};

// ---------------------------------------------------------------------------
// trajectory JSONL

#[derive(Debug, Serialize, Deserialize)]
struct ContactRecord {
    id: u32,
    p: [f64; 3],
    f: [f64; 3],
    sigma: f64,
}

/// One JSONL line: `t`, `stamp` seconds, pose as
/// `[qw, qx, qy, qz, tx, ty, tz]`, and the contact list.
#[derive(Debug, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    t: usize,
    stamp: f64,
    pose: [f64; 7],
    contacts: Vec<ContactRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaLine {
    meta: TrajectoryMeta,
}

pub fn write_trajectory<W: Write>(mut w: W, traj: &Trajectory) -> Result<()> {
    let meta = serde_json::to_string(&MetaLine {
        meta: traj.meta.clone(),
    })
    .expect("meta serializes");
    writeln!(w, "{meta}")?;
    for (t, s) in traj.samples.iter().enumerate() {
        let q = s.pose.rotation.wxyz();
        let rec = TrajectoryRecord {
            t,
            stamp: s.stamp,
            pose: [
                q[0],
                q[1],
                q[2],
                q[3],
                s.pose.translation.x,
                s.pose.translation.y,
                s.pose.translation.z,
            ],
            contacts: s
                .contacts
                .iter()
                .map(|c| ContactRecord {
                    id: c.contact_id,
                    p: c.point.into(),
                    f: c.force.into(),
                    sigma: c.force_sigma,
                })
                .collect(),
        };
        writeln!(w, "{}", serde_json::to_string(&rec).expect("record serializes"))?;
    }
    Ok(())
}

pub fn save_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_trajectory(std::io::BufWriter::new(f), traj)
}

pub fn read_trajectory<R: BufRead>(r: R, context: &str) -> Result<Trajectory> {
    let mut samples: Vec<TrajectorySample> = Vec::new();
    let mut meta = TrajectoryMeta {
        seed: 0,
        noise_sigma2: 0.0,
        source: "unknown".into(),
    };
    let mut last_stamp = f64::NEG_INFINITY;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if lineno == 0 {
            if let Ok(m) = serde_json::from_str::<MetaLine>(&line) {
                meta = m.meta;
                continue;
            }
        }
        let rec: TrajectoryRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                context: format!("{context}:{}", lineno + 1),
                message: e.to_string(),
            })?;
        let qn = (rec.pose[0] * rec.pose[0]
            + rec.pose[1] * rec.pose[1]
            + rec.pose[2] * rec.pose[2]
            + rec.pose[3] * rec.pose[3])
            .sqrt();
        if (qn - 1.0).abs() > 1e-6 {
            return Err(Error::BadData {
                context: format!("{context}:{}", lineno + 1),
                message: format!("quaternion norm {qn} outside tolerance"),
            });
        }
        let rotation = if (qn - 1.0).abs() > 1e-9 {
            eprintln!(
                "warning: {context}:{}: renormalizing quaternion (norm {qn})",
                lineno + 1
            );
            Rotation::from_wxyz(rec.pose[0], rec.pose[1], rec.pose[2], rec.pose[3])
        } else {
            Rotation::from_wxyz_unit(rec.pose[0], rec.pose[1], rec.pose[2], rec.pose[3])
        };
        if rec.stamp <= last_stamp {
            return Err(Error::BadData {
                context: format!("{context}:{}", lineno + 1),
                message: format!(
                    "stamps must strictly increase ({last_stamp} then {})",
                    rec.stamp
                ),
            });
        }
        last_stamp = rec.stamp;
        samples.push(TrajectorySample {
            stamp: rec.stamp,
            pose: Pose::new(rotation, Vec3::new(rec.pose[4], rec.pose[5], rec.pose[6])),
            contacts: rec
                .contacts
                .iter()
                .map(|c| ContactObservation {
                    contact_id: c.id,
                    point: Vec3::from(c.p),
                    force: Vec3::from(c.f),
                    force_sigma: c.sigma,
                })
                .collect(),
        });
    }
    Ok(Trajectory { samples, meta })
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let f = std::fs::File::open(path)?;
    read_trajectory(std::io::BufReader::new(f), &path.display().to_string())
}

// ---------------------------------------------------------------------------
// parameter files

/// Inertial parameters on disk: either the manifold form or the matrix form
/// (`H_cm` as `[xx, yy, zz, xy, xz, yz]`), auto-detected.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamsFile {
    Manifold {
        mass: f64,
        com: [f64; 3],
        #[serde(rename = "L")]
        principal_moments: [f64; 3],
        principal_rotation_quaternion: [f64; 4],
    },
    Matrix {
        mass: f64,
        com: [f64; 3],
        #[serde(rename = "H_cm")]
        inertia_cm: [f64; 6],
    },
}

impl ParamsFile {
    pub fn to_params(&self) -> InertialParams {
        match self {
            ParamsFile::Manifold {
                mass,
                com,
                principal_moments,
                principal_rotation_quaternion: q,
            } => InertialParams::new(
                *mass,
                Vec3::from(*com),
                Vec3::from(*principal_moments),
                Rotation::from_wxyz(q[0], q[1], q[2], q[3]),
            ),
            ParamsFile::Matrix {
                mass,
                com,
                inertia_cm,
            } => params_from_matrix(
                *mass,
                Vec3::from(*com),
                sym3_from_components(inertia_cm),
                ParallelAxis::Standard,
            ),
        }
    }

    pub fn from_params(p: &InertialParams) -> Self {
        ParamsFile::Manifold {
            mass: p.mass,
            com: p.com.into(),
            principal_moments: p.principal_moments.into(),
            principal_rotation_quaternion: p.principal_rotation.wxyz(),
        }
    }
}

pub fn load_params(path: &Path) -> Result<InertialParams> {
    let text = std::fs::read_to_string(path)?;
    let file: ParamsFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(file.to_params())
}

pub fn save_params(path: &Path, p: &InertialParams) -> Result<()> {
    let text = serde_json::to_string_pretty(&ParamsFile::from_params(p)).expect("serializes");
    std::fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// hull and model files

/// Hull on disk: vertex list or halfspace list, meters, body frame.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HullFile {
    Vertices { vertices: Vec<[f64; 3]> },
    Halfspaces { halfspaces: Vec<HalfspaceRecord> },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HalfspaceRecord {
    pub n: [f64; 3],
    pub d: f64,
}

impl HullFile {
    pub fn to_hull(&self) -> Result<ConvexHull> {
        match self {
            HullFile::Vertices { vertices } => {
                let pts: Vec<Vec3> = vertices.iter().map(|v| Vec3::from(*v)).collect();
                ConvexHull::from_vertices(&pts)
            }
            HullFile::Halfspaces { halfspaces } => ConvexHull::from_halfspaces(
                halfspaces
                    .iter()
                    .map(|h| Halfspace {
                        normal: h.n,
                        offset: h.d,
                    })
                    .collect(),
            ),
        }
    }
}

pub fn load_hull(path: &Path) -> Result<ConvexHull> {
    let text = std::fs::read_to_string(path)?;
    let file: HullFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    file.to_hull()
}

/// Simulated object on disk: parameters, hull, and attachment points.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub params: ParamsFile,
    pub hull: HullFile,
    pub attachments: Vec<[f64; 3]>,
}

pub fn load_model(path: &Path) -> Result<RigidBodyModel> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    RigidBodyModel::new(
        file.params.to_params(),
        file.hull.to_hull()?,
        file.attachments.iter().map(|a| Vec3::from(*a)).collect(),
    )
}

pub fn save_model(path: &Path, model: &RigidBodyModel) -> Result<()> {
    let file = ModelFile {
        params: ParamsFile::from_params(&model.params),
        hull: HullFile::Vertices {
            vertices: model.hull.vertices().iter().map(|v| (*v).into()).collect(),
        },
        attachments: model.attachments.iter().map(|a| (*a).into()).collect(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file).expect("serializes"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// flat key-value config text

/// `key = value` lines; `#` starts a comment. Vector values are
/// comma-separated.
pub struct KeyValues {
    pairs: Vec<(String, String)>,
    context: String,
}

impl KeyValues {
    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    context: format!("{context}:{}", i + 1),
                    message: format!("expected 'key = value', got '{raw}'"),
                });
            };
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(KeyValues {
            pairs,
            context: context.to_string(),
        })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn parse_err(&self, key: &str, v: &str) -> Error {
        Error::Parse {
            context: self.context.clone(),
            message: format!("bad value '{v}' for key '{key}'"),
        }
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| self.parse_err(key, v)),
        }
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| self.parse_err(key, v)),
        }
    }

    pub fn u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| self.parse_err(key, v)),
        }
    }

    pub fn bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") | Some("on") | Some("1") => Ok(true),
            Some("false") | Some("off") | Some("0") => Ok(false),
            Some(v) => Err(self.parse_err(key, v)),
        }
    }

    pub fn vec3(&self, key: &str, default: [f64; 3]) -> Result<[f64; 3]> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(self.parse_err(key, v));
                }
                let mut out = [0.0; 3];
                for (i, p) in parts.iter().enumerate() {
                    out[i] = p.parse().map_err(|_| self.parse_err(key, v))?;
                }
                Ok(out)
            }
        }
    }

    pub fn string(&self, key: &str) -> Option<String> {
        self.get(key).map(|s| s.to_string())
    }

    /// Reject configs with keys none of the parsers consumed.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        for (k, _) in &self.pairs {
            if !known.contains(&k.as_str()) {
                return Err(Error::Parse {
                    context: self.context.clone(),
                    message: format!("unknown key '{k}'"),
                });
            }
        }
        Ok(())
    }
}

const SIM_KEYS: &[&str] = &[
    "dt",
    "sample_period",
    "duration",
    "gravity",
    "seed",
    "mode",
    "gravity_comp",
    "force_amp",
    "force_freq_hz",
    "force_phase",
    "torque_amp",
    "torque_freq_hz",
    "torque_phase",
    "force_dither",
    "torque_dither",
    "force_through_com",
    "hold_stiffness",
    "hold_damping",
    "hold_ang_stiffness",
    "hold_ang_damping",
];

pub fn parse_sim_config(text: &str, context: &str) -> Result<SimConfig> {
    let kv = KeyValues::parse(text, context)?;
    kv.check_known(SIM_KEYS)?;
    let d = SimConfig::default();
    let dp = ForceProfile::default();
    let mode = match kv.string("mode").as_deref() {
        None => d.mode,
        Some("integrated") => SampleMode::Integrated,
        Some("exact") => SampleMode::Exact,
        Some(v) => {
            return Err(Error::Parse {
                context: context.to_string(),
                message: format!("mode must be 'integrated' or 'exact', got '{v}'"),
            })
        }
    };
    let profile = ForceProfile {
        gravity_comp: kv.bool("gravity_comp", dp.gravity_comp)?,
        force_amp: kv.vec3("force_amp", dp.force_amp)?,
        force_freq_hz: kv.vec3("force_freq_hz", dp.force_freq_hz)?,
        force_phase: kv.vec3("force_phase", dp.force_phase)?,
        torque_amp: kv.vec3("torque_amp", dp.torque_amp)?,
        torque_freq_hz: kv.vec3("torque_freq_hz", dp.torque_freq_hz)?,
        torque_phase: kv.vec3("torque_phase", dp.torque_phase)?,
        force_dither: kv.f64("force_dither", dp.force_dither)?,
        torque_dither: kv.f64("torque_dither", dp.torque_dither)?,
        force_through_com: kv.bool("force_through_com", dp.force_through_com)?,
        hold_stiffness: kv.f64("hold_stiffness", dp.hold_stiffness)?,
        hold_damping: kv.f64("hold_damping", dp.hold_damping)?,
        hold_ang_stiffness: kv.f64("hold_ang_stiffness", dp.hold_ang_stiffness)?,
        hold_ang_damping: kv.f64("hold_ang_damping", dp.hold_ang_damping)?,
    };
    let config = SimConfig {
        dt: kv.f64("dt", d.dt)?,
        sample_period: kv.f64("sample_period", d.sample_period)?,
        duration: kv.f64("duration", d.duration)?,
        gravity: kv.vec3("gravity", d.gravity)?,
        profile,
        seed: kv.u64("seed", d.seed)?,
        mode,
    };
    config.validate()?;
    Ok(config)
}

const SOLVER_KEYS: &[&str] = &[
    "max_iterations",
    "initial_lambda",
    "lambda_increase",
    "lambda_decrease",
    "max_lambda",
    "scaled_damping",
    "relative_decrease_tol",
    "constraint_weight",
    "geodesic_weight",
    "variant",
    "jacobian",
    "jacobian_step",
    "pose_rot_sigma",
    "pose_trans_sigma",
    "contact_sigma",
    "dynamics_force_sigma",
    "dynamics_torque_sigma",
    "gravity",
];

pub fn parse_solver_config(text: &str, context: &str) -> Result<SolverConfig> {
    let kv = KeyValues::parse(text, context)?;
    kv.check_known(SOLVER_KEYS)?;
    let d = SolverConfig::default();
    let variant = match kv.string("variant") {
        None => d.variant,
        Some(v) => Variant::parse(&v)?,
    };
    let jacobian = match kv.string("jacobian").as_deref() {
        None => d.jacobian,
        Some("analytic") => JacobianMode::AnalyticWhereAvailable,
        Some("numeric") => JacobianMode::Numeric,
        Some(v) => {
            return Err(Error::Parse {
                context: context.to_string(),
                message: format!("jacobian must be 'analytic' or 'numeric', got '{v}'"),
            })
        }
    };
    let config = SolverConfig {
        max_iterations: kv.usize("max_iterations", d.max_iterations)?,
        initial_lambda: kv.f64("initial_lambda", d.initial_lambda)?,
        lambda_increase: kv.f64("lambda_increase", d.lambda_increase)?,
        lambda_decrease: kv.f64("lambda_decrease", d.lambda_decrease)?,
        max_lambda: kv.f64("max_lambda", d.max_lambda)?,
        scaled_damping: kv.bool("scaled_damping", d.scaled_damping)?,
        relative_decrease_tol: kv.f64("relative_decrease_tol", d.relative_decrease_tol)?,
        constraint_weight: kv.f64("constraint_weight", d.constraint_weight)?,
        geodesic_weight: kv.f64("geodesic_weight", d.geodesic_weight)?,
        variant,
        jacobian,
        jacobian_step: kv.f64("jacobian_step", d.jacobian_step)?,
        pose_rot_sigma: kv.f64("pose_rot_sigma", d.pose_rot_sigma)?,
        pose_trans_sigma: kv.f64("pose_trans_sigma", d.pose_trans_sigma)?,
        contact_sigma: kv.f64("contact_sigma", d.contact_sigma)?,
        dynamics_force_sigma: kv.f64("dynamics_force_sigma", d.dynamics_force_sigma)?,
        dynamics_torque_sigma: kv.f64("dynamics_torque_sigma", d.dynamics_torque_sigma)?,
        gravity: kv.vec3("gravity", d.gravity)?,
    };
    config.validate()?;
    Ok(config)
}

const SERVO_KEYS: &[&str] = &[
    "initial_normal",
    "tangent_force",
    "normal_decrement",
    "noise_sigma",
    "max_steps",
    "normal_floor",
    "warp_factor",
];

pub fn parse_servo_config(text: &str, context: &str) -> Result<(crate::friction::ServoConfig, Option<f64>)> {
    let kv = KeyValues::parse(text, context)?;
    kv.check_known(SERVO_KEYS)?;
    let d = crate::friction::ServoConfig::default();
    let cfg = crate::friction::ServoConfig {
        initial_normal: kv.f64("initial_normal", d.initial_normal)?,
        tangent_force: kv.f64("tangent_force", d.tangent_force)?,
        normal_decrement: kv.f64("normal_decrement", d.normal_decrement)?,
        noise_sigma: kv.f64("noise_sigma", d.noise_sigma)?,
        max_steps: kv.usize("max_steps", d.max_steps)?,
        normal_floor: kv.f64("normal_floor", d.normal_floor)?,
    };
    cfg.validate()?;
    let warp = match kv.string("warp_factor") {
        None => None,
        Some(v) => Some(v.parse().map_err(|_| Error::Parse {
            context: context.to_string(),
            message: format!("bad warp_factor '{v}'"),
        })?),
    };
    Ok((cfg, warp))
}

// ---------------------------------------------------------------------------
// reports and metrics

pub fn save_report(path: &Path, report: &SolveReport) -> Result<()> {
    std::fs::write(path, serde_json::to_string(report).expect("serializes"))?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<SolveReport> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })
}

/// One row of the method-comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub dataset: String,
    pub method: String,
    pub mass: f64,
    pub com: [f64; 3],
    pub inertia_cm: [f64; 6],
    pub inertial_error: f64,
    pub wall_time_s: f64,
}

impl MetricsRow {
    pub fn compute(dataset: &str, gt: &InertialParams, report: &SolveReport) -> Result<MetricsRow> {
        let gt_pseudo = crate::inertia::project_pseudo(gt);
        let err = crate::inertia::inertial_error_pseudo(&gt_pseudo, &report.params.pseudo())?;
        Ok(MetricsRow {
            dataset: dataset.to_string(),
            method: report.method.clone(),
            mass: report.params.mass,
            com: report.params.com,
            inertia_cm: report.params.inertia_cm,
            inertial_error: err,
            wall_time_s: report.wall_time_s,
        })
    }
}

pub fn write_metrics_csv<W: Write>(mut w: W, rows: &[MetricsRow]) -> Result<()> {
    writeln!(
        w,
        "dataset,method,mass,com_x,com_y,com_z,H_xx,H_yy,H_zz,H_xy,H_xz,H_yz,inertial_error,wall_time_s"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.dataset,
            r.method,
            r.mass,
            r.com[0],
            r.com[1],
            r.com[2],
            r.inertia_cm[0],
            r.inertia_cm[1],
            r.inertia_cm[2],
            r.inertia_cm[3],
            r.inertia_cm[4],
            r.inertia_cm[5],
            r.inertial_error,
            r.wall_time_s
        )?;
    }
    Ok(())
}

/// Per-trial friction results plus a median-absolute-error summary row.
pub fn write_friction_csv<W: Write>(
    mut w: W,
    object_id: &str,
    mu_true: f64,
    trials: &[(usize, f64, Vec3)],
) -> Result<()> {
    writeln!(w, "object,trial,mu_true,mu_est,f_slip_x,f_slip_y,f_slip_z")?;
    for (trial, mu_est, f_slip) in trials {
        writeln!(
            w,
            "{object_id},{trial},{mu_true},{mu_est},{},{},{}",
            f_slip.x, f_slip.y, f_slip.z
        )?;
    }
    let mut errs: Vec<f64> = trials.iter().map(|(_, mu, _)| (mu - mu_true).abs()).collect();
    errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if errs.is_empty() {
        f64::NAN
    } else if errs.len() % 2 == 1 {
        errs[errs.len() / 2]
    } else {
        0.5 * (errs[errs.len() / 2 - 1] + errs[errs.len() / 2])
    };
    writeln!(w, "{object_id},median_abs_error,{mu_true},{median},,,")?;
    Ok(())
}

/// Baseline results shaped like a solver report so `eval` can consume both.
pub fn report_from_baseline(
    baseline: &crate::graph::BaselineReport,
    wall_time_s: f64,
) -> SolveReport {
    SolveReport {
        method: "baseline".into(),
        params: ReportedParams::from_matrix_form(&baseline.matrix),
        cost_trace: Vec::new(),
        iterations: 0,
        termination: crate::graph::TerminationReason::Converged,
        wall_time_s,
        consistency_ok: None,
        rank_warning: if baseline.rank_deficient {
            Some(format!(
                "stacked system rank {} < 10; minimum-norm solution",
                baseline.rank
            ))
        } else {
            None
        },
        smoothed: None,
    }
}
