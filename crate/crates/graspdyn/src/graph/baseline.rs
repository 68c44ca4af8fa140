//! Least-squares baseline: stack the wrench balance over all windows and
//! solve for the vector inertial parameters directly, with no optimization
//! over the sensor measurements. Accelerations come from finite differences
//! of the measured poses; forces are optionally smoothed with a
//! Savitzky-Golay filter (cubic, window 51).

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{gravity_in_frame, net_contact_wrench, newton_euler_matrix};
use crate::error::{Error, Result};
use crate::filter::savitzky_golay;
use crate::inertia::{devectorize, InertialMatrixForm, VectorParams};
use crate::se3::{window_kinematics, KinematicWindow, Pose, Vec3};
use crate::sim::{SampleKinematics, Trajectory};

pub const SMOOTHING_WINDOW: usize = 51;
pub const SMOOTHING_ORDER: usize = 3;

/// Relative singular-value cutoff for rank decisions.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothing {
    On,
    Off,
}

#[derive(Debug, Clone)]
pub struct BaselineReport {
    pub vector: VectorParams,
    pub matrix: InertialMatrixForm,
    pub rank: usize,
    pub rank_deficient: bool,
}

/// Baseline estimate from finite-difference kinematics on the measured poses.
pub fn baseline_least_squares(
    traj: &Trajectory,
    smoothing: Smoothing,
    gravity: &Vec3,
) -> Result<BaselineReport> {
    let n = traj.samples.len();
    if n < 3 {
        return Err(Error::DatasetTooShort(n));
    }
    let forces = smoothed_forces(traj, smoothing)?;
    let poses = traj.timed_poses();

    let n_windows = n - 2;
    let mut a = DMatrix::<f64>::zeros(6 * n_windows, 10);
    let mut y = DVector::<f64>::zeros(6 * n_windows);
    for t in 0..n_windows {
        let window = window_kinematics(&poses[t], &poses[t + 1], &poses[t + 2])?;
        let g_body = gravity_in_frame(gravity, &window.frame_pose);
        fill_rows(&mut a, &mut y, t, &window, &g_body, &forces[t], traj, t);
    }
    solve_stacked(a, y)
}

/// The same linear solve with the simulator's exact per-sample kinematics
/// substituted for the finite differences; rows hold at every sample.
pub fn baseline_with_exact_kinematics(
    traj: &Trajectory,
    kinematics: &[SampleKinematics],
    smoothing: Smoothing,
) -> Result<BaselineReport> {
    let n = traj.samples.len();
    if n < 3 {
        return Err(Error::DatasetTooShort(n));
    }
    if kinematics.len() != n {
        return Err(Error::BadData {
            context: "exact kinematics".into(),
            message: format!("expected {n} entries, got {}", kinematics.len()),
        });
    }
    let forces = smoothed_forces(traj, smoothing)?;
    let mut a = DMatrix::<f64>::zeros(6 * n, 10);
    let mut y = DVector::<f64>::zeros(6 * n);
    for t in 0..n {
        let k = &kinematics[t];
        let window = KinematicWindow {
            omega_prev: k.omega,
            omega_curr: k.omega,
            linear_accel: k.linear_accel,
            angular_accel: k.angular_accel,
            frame_pose: Pose::identity(),
        };
        fill_rows(&mut a, &mut y, t, &window, &k.g_body, &forces[t], traj, t);
    }
    solve_stacked(a, y)
}

fn fill_rows(
    a: &mut DMatrix<f64>,
    y: &mut DVector<f64>,
    row_block: usize,
    window: &KinematicWindow,
    g_body: &Vec3,
    forces: &[Vec3],
    traj: &Trajectory,
    t: usize,
) {
    let phi = newton_euler_matrix(window, g_body);
    a.view_mut((6 * row_block, 0), (6, 10)).copy_from(&phi);
    let contacts: Vec<_> = traj.samples[t]
        .contacts
        .iter()
        .zip(forces.iter())
        .map(|(c, f)| crate::dynamics::ContactObservation {
            force: *f,
            ..*c
        })
        .collect();
    let (f, tau) = net_contact_wrench(&contacts);
    for i in 0..3 {
        y[6 * row_block + i] = f[i];
        y[6 * row_block + 3 + i] = tau[i];
    }
}

/// Per-timestep force list, smoothed per contact id and axis when requested.
fn smoothed_forces(traj: &Trajectory, smoothing: Smoothing) -> Result<Vec<Vec<Vec3>>> {
    let raw: Vec<Vec<Vec3>> = traj
        .samples
        .iter()
        .map(|s| s.contacts.iter().map(|c| c.force).collect())
        .collect();
    match smoothing {
        Smoothing::Off => Ok(raw),
        Smoothing::On => {
            let n = traj.samples.len();
            if n <= SMOOTHING_WINDOW {
                return Err(Error::BadFilterWindow {
                    window: SMOOTHING_WINDOW,
                    order: SMOOTHING_ORDER,
                    len: n,
                });
            }
            let n_contacts = raw[0].len();
            if raw.iter().any(|r| r.len() != n_contacts) {
                return Err(Error::BadData {
                    context: "baseline smoothing".into(),
                    message: "contact count varies across timesteps".into(),
                });
            }
            let mut out = raw.clone();
            for c in 0..n_contacts {
                for axis in 0..3 {
                    let series: Vec<f64> = raw.iter().map(|r| r[c][axis]).collect();
                    let sm = savitzky_golay(&series, SMOOTHING_WINDOW, SMOOTHING_ORDER)?;
                    for (t, v) in sm.into_iter().enumerate() {
                        out[t][c][axis] = v;
                    }
                }
            }
            Ok(out)
        }
    }
}

fn solve_stacked(a: DMatrix<f64>, y: DVector<f64>) -> Result<BaselineReport> {
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > RANK_TOL * max_sv)
        .count();
    let sol = svd
        .solve(&y, RANK_TOL * max_sv)
        .map_err(|e| Error::BadData {
            context: "baseline least squares".into(),
            message: e.to_string(),
        })?;
    let vector = VectorParams(nalgebra::SVector::<f64, 10>::from_column_slice(sol.as_slice()));
    let matrix = devectorize(&vector)?;
    Ok(BaselineReport {
        vector,
        matrix,
        rank,
        rank_deficient: rank < 10,
    })
}
