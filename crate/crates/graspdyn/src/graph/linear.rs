//! Structured solution of the damped normal equations.
//!
//! The graph's sparsity is fixed: forces and contact points at timestep `t`
//! touch only their measurement factors and the single dynamics factor based
//! at `t`; poses couple to at most the two following poses (through shared
//! windows) and to the inertial variable; the inertial variable couples to
//! everything. Variables are eliminated in that order — per-window
//! force/contact groups by dense Schur complements, then poses by a banded
//! block Cholesky with bandwidth two, then the inertial block — exactly the
//! smallest-fill ordering for this topology, with no dynamic pivoting.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::values::VariableId;

const POSE_DIM: usize = 6;
const INERTIAL_DIM: usize = 10;

/// Gathered normal equations `H delta = -b` in block form.
pub struct NormalEqs {
    n_poses: usize,
    contact_counts: Vec<usize>,
    /// Per-timestep force/contact group; dim 6 * contact_count.
    group_diag: Vec<DMatrix<f64>>,
    /// Coupling of the group at base `t` to `[pose t, t+1, t+2, inertial]`.
    /// Present only for window bases (t <= n_poses - 3).
    group_sep: Vec<DMatrix<f64>>,
    group_rhs: Vec<DVector<f64>>,
    pose_diag: Vec<DMatrix<f64>>,
    pose_off1: Vec<DMatrix<f64>>,
    pose_off2: Vec<DMatrix<f64>>,
    pose_inertial: Vec<DMatrix<f64>>,
    pose_rhs: Vec<DVector<f64>>,
    inertial_diag: DMatrix<f64>,
    inertial_rhs: DVector<f64>,
}

/// Local column offset of a variable inside its elimination block.
fn group_offset(contact_counts: &[usize], id: &VariableId) -> (usize, usize) {
    match id {
        VariableId::Force { t, contact } => (*t, 3 * contact),
        VariableId::Contact { t, contact } => (*t, 3 * (contact_counts[*t] + contact)),
        _ => unreachable!("not a group variable"),
    }
}

/// Column offset inside the separator `[pose b, pose b+1, pose b+2, w]`.
fn sep_offset(base: usize, id: &VariableId) -> usize {
    match id {
        VariableId::Pose { t } => POSE_DIM * (t - base),
        VariableId::Inertial => 3 * POSE_DIM,
        _ => unreachable!("not a separator variable"),
    }
}

impl NormalEqs {
    pub fn new(n_poses: usize, contact_counts: &[usize]) -> Self {
        let n_windows = n_poses.saturating_sub(2);
        NormalEqs {
            n_poses,
            contact_counts: contact_counts.to_vec(),
            group_diag: contact_counts
                .iter()
                .map(|&c| DMatrix::zeros(6 * c, 6 * c))
                .collect(),
            group_sep: (0..n_poses)
                .map(|t| {
                    let cols = if t < n_windows { 3 * POSE_DIM + INERTIAL_DIM } else { 0 };
                    DMatrix::zeros(6 * contact_counts[t], cols)
                })
                .collect(),
            group_rhs: contact_counts
                .iter()
                .map(|&c| DVector::zeros(6 * c))
                .collect(),
            pose_diag: vec![DMatrix::zeros(POSE_DIM, POSE_DIM); n_poses],
            pose_off1: vec![DMatrix::zeros(POSE_DIM, POSE_DIM); n_poses.saturating_sub(1)],
            pose_off2: vec![DMatrix::zeros(POSE_DIM, POSE_DIM); n_poses.saturating_sub(2)],
            pose_inertial: vec![DMatrix::zeros(POSE_DIM, INERTIAL_DIM); n_poses],
            pose_rhs: vec![DVector::zeros(POSE_DIM); n_poses],
            inertial_diag: DMatrix::zeros(INERTIAL_DIM, INERTIAL_DIM),
            inertial_rhs: DVector::zeros(INERTIAL_DIM),
        }
    }

    /// Accumulate one factor's contribution `J^T J` and `J^T r`.
    pub fn add_factor(
        &mut self,
        vars: &[VariableId],
        jacobians: &[DMatrix<f64>],
        residual: &DVector<f64>,
    ) {
        for (i, vi) in vars.iter().enumerate() {
            let jti = jacobians[i].transpose();
            self.add_rhs(vi, &(&jti * residual));
            for (j, vj) in vars.iter().enumerate().skip(i) {
                let block = &jti * &jacobians[j];
                self.add_block(vi, vj, &block);
            }
        }
    }

    fn add_rhs(&mut self, id: &VariableId, v: &DVector<f64>) {
        match id {
            VariableId::Pose { t } => self.pose_rhs[*t] += v,
            VariableId::Inertial => self.inertial_rhs += v,
            _ => {
                let (t, off) = group_offset(&self.contact_counts, id);
                self.group_rhs[t].rows_mut(off, 3).add_assign_slice(v);
            }
        }
    }

    /// `vi` comes before or equal to `vj` in factor variable order; store
    /// into the upper-triangular structured blocks.
    fn add_block(&mut self, vi: &VariableId, vj: &VariableId, block: &DMatrix<f64>) {
        use VariableId::*;
        match (vi, vj) {
            (Pose { t: a }, Pose { t: b }) => {
                let (lo, hi, blk) = if a <= b {
                    (*a, *b, block.clone())
                } else {
                    (*b, *a, block.transpose())
                };
                match hi - lo {
                    0 => {
                        if a == b {
                            self.pose_diag[lo] += blk;
                        } else {
                            self.pose_diag[lo] += &blk + blk.transpose();
                        }
                    }
                    1 => self.pose_off1[lo] += blk,
                    2 => self.pose_off2[lo] += blk,
                    _ => unreachable!("poses separated by more than a window"),
                }
            }
            (Pose { t }, Inertial) => self.pose_inertial[*t] += block,
            (Inertial, Pose { t }) => self.pose_inertial[*t] += block.transpose(),
            (Inertial, Inertial) => self.inertial_diag += block,
            (Force { .. } | Contact { .. }, Force { .. } | Contact { .. }) => {
                let (t, oi) = group_offset(&self.contact_counts, vi);
                let (t2, oj) = group_offset(&self.contact_counts, vj);
                debug_assert_eq!(t, t2, "cross-window force/contact coupling");
                self.group_diag[t]
                    .view_mut((oi, oj), (3, 3))
                    .add_assign_matrix(block);
                if oi != oj {
                    self.group_diag[t]
                        .view_mut((oj, oi), (3, 3))
                        .add_assign_matrix(&block.transpose());
                }
            }
            (Force { .. } | Contact { .. }, Pose { .. } | Inertial) => {
                let (t, oi) = group_offset(&self.contact_counts, vi);
                let col = sep_offset(t, vj);
                self.group_sep[t]
                    .view_mut((oi, col), (3, block.ncols()))
                    .add_assign_matrix(block);
            }
            (Pose { .. } | Inertial, Force { .. } | Contact { .. }) => {
                let (t, oj) = group_offset(&self.contact_counts, vj);
                let col = sep_offset(t, vi);
                let bt = block.transpose();
                self.group_sep[t]
                    .view_mut((oj, col), (3, bt.ncols()))
                    .add_assign_matrix(&bt);
            }
        }
    }

    /// Solve the damped system; returns `None` if a pivot block is not
    /// positive definite even with damping. `scaled` selects Marquardt
    /// damping `lambda (diag(H) + I)` instead of plain `lambda I`, which
    /// keeps steps sane when variable scales differ by orders of magnitude.
    pub fn solve(&self, lambda: f64, scaled: bool) -> Option<Solution> {
        let n = self.n_poses;
        let n_windows = n.saturating_sub(2);
        let damp = |m: &DMatrix<f64>| -> DMatrix<f64> {
            let mut out = m.clone();
            for i in 0..m.nrows() {
                out[(i, i)] += if scaled { lambda * (m[(i, i)] + 1.0) } else { lambda };
            }
            out
        };

        // damped copies of the separator blocks
        let mut pose_diag: Vec<DMatrix<f64>> = self.pose_diag.iter().map(&damp).collect();
        let mut pose_off1 = self.pose_off1.clone();
        let mut pose_off2 = self.pose_off2.clone();
        let mut pose_inertial = self.pose_inertial.clone();
        let mut pose_rhs: Vec<DVector<f64>> = self.pose_rhs.iter().map(|v| -v).collect();
        let mut w_diag = damp(&self.inertial_diag);
        let mut w_rhs = -&self.inertial_rhs;

        // eliminate per-window force/contact groups
        let mut group_elims: Vec<Option<GroupElim>> = Vec::with_capacity(n);
        for t in 0..n {
            let dim = self.group_diag[t].nrows();
            if dim == 0 {
                group_elims.push(None);
                continue;
            }
            let chol = Cholesky::new(damp(&self.group_diag[t]))?;
            let rhs = -&self.group_rhs[t];
            let rhs_half = chol.l_dirty().solve_lower_triangular(&rhs)?;
            if t < n_windows {
                let s = chol.l_dirty().solve_lower_triangular(&self.group_sep[t])?;
                // scatter S^T S into the separator blocks
                let sts = s.transpose() * &s;
                let str_ = s.transpose() * &rhs_half;
                for bi in 0..3 {
                    for bj in bi..3 {
                        let blk = sts.view((POSE_DIM * bi, POSE_DIM * bj), (POSE_DIM, POSE_DIM));
                        match bj - bi {
                            0 => pose_diag[t + bi].sub_assign_view(&blk),
                            1 => pose_off1[t + bi].sub_assign_view(&blk),
                            2 => pose_off2[t + bi].sub_assign_view(&blk),
                            _ => unreachable!(),
                        }
                    }
                    pose_inertial[t + bi].sub_assign_view(&sts.view(
                        (POSE_DIM * bi, 3 * POSE_DIM),
                        (POSE_DIM, INERTIAL_DIM),
                    ));
                    for r in 0..POSE_DIM {
                        pose_rhs[t + bi][r] -= str_[POSE_DIM * bi + r];
                    }
                }
                w_diag.sub_assign_view(&sts.view(
                    (3 * POSE_DIM, 3 * POSE_DIM),
                    (INERTIAL_DIM, INERTIAL_DIM),
                ));
                for r in 0..INERTIAL_DIM {
                    w_rhs[r] -= str_[3 * POSE_DIM + r];
                }
                group_elims.push(Some(GroupElim {
                    chol,
                    sep: Some(s),
                    rhs_half,
                }));
            } else {
                group_elims.push(Some(GroupElim {
                    chol,
                    sep: None,
                    rhs_half,
                }));
            }
        }

        // banded pose elimination with the inertial arrow
        let mut pose_elims: Vec<PoseElim> = Vec::with_capacity(n);
        for t in 0..n {
            let chol = Cholesky::new(pose_diag[t].clone())?;
            let l = chol.l_dirty();
            let s1 = if t + 1 < n {
                Some(l.solve_lower_triangular(&pose_off1[t])?)
            } else {
                None
            };
            let s2 = if t + 2 < n {
                Some(l.solve_lower_triangular(&pose_off2[t])?)
            } else {
                None
            };
            let sw = l.solve_lower_triangular(&pose_inertial[t])?;
            let r = l.solve_lower_triangular(&pose_rhs[t])?;

            if let Some(s1) = &s1 {
                pose_diag[t + 1] -= s1.transpose() * s1;
                if let Some(s2) = &s2 {
                    pose_off1[t + 1] -= s1.transpose() * s2;
                }
                pose_inertial[t + 1] -= s1.transpose() * &sw;
                let upd = s1.transpose() * &r;
                pose_rhs[t + 1] -= upd;
            }
            if let Some(s2) = &s2 {
                pose_diag[t + 2] -= s2.transpose() * s2;
                pose_inertial[t + 2] -= s2.transpose() * &sw;
                let upd = s2.transpose() * &r;
                pose_rhs[t + 2] -= upd;
            }
            w_diag -= sw.transpose() * &sw;
            w_rhs -= sw.transpose() * &r;
            pose_elims.push(PoseElim { chol, s1, s2, sw, r });
        }

        // inertial block
        let w_chol = Cholesky::new(w_diag)?;
        let delta_w = w_chol.solve(&w_rhs);

        // back-substitute poses in reverse order
        let mut delta_poses = vec![DVector::<f64>::zeros(POSE_DIM); n];
        for t in (0..n).rev() {
            let e = &pose_elims[t];
            let mut rhs = e.r.clone();
            if let Some(s1) = &e.s1 {
                rhs -= s1 * &delta_poses[t + 1];
            }
            if let Some(s2) = &e.s2 {
                rhs -= s2 * &delta_poses[t + 2];
            }
            rhs -= &e.sw * &delta_w;
            delta_poses[t] = e
                .chol
                .l_dirty()
                .transpose()
                .solve_upper_triangular(&rhs)?;
        }

        // back-substitute force/contact groups
        let mut delta_groups: Vec<DVector<f64>> = Vec::with_capacity(n);
        for t in 0..n {
            match &group_elims[t] {
                None => delta_groups.push(DVector::zeros(0)),
                Some(e) => {
                    let mut rhs = e.rhs_half.clone();
                    if let Some(s) = &e.sep {
                        let mut sep = DVector::zeros(3 * POSE_DIM + INERTIAL_DIM);
                        for bi in 0..3 {
                            sep.rows_mut(POSE_DIM * bi, POSE_DIM)
                                .copy_from(&delta_poses[t + bi]);
                        }
                        sep.rows_mut(3 * POSE_DIM, INERTIAL_DIM).copy_from(&delta_w);
                        rhs -= s * sep;
                    }
                    let delta = e
                        .chol
                        .l_dirty()
                        .transpose()
                        .solve_upper_triangular(&rhs)?;
                    delta_groups.push(delta);
                }
            }
        }

        Some(Solution {
            delta_poses,
            delta_groups,
            delta_inertial: delta_w,
        })
    }
}

struct GroupElim {
    chol: Cholesky<f64, Dyn>,
    sep: Option<DMatrix<f64>>,
    rhs_half: DVector<f64>,
}

struct PoseElim {
    chol: Cholesky<f64, Dyn>,
    s1: Option<DMatrix<f64>>,
    s2: Option<DMatrix<f64>>,
    sw: DMatrix<f64>,
    r: DVector<f64>,
}

/// Local-coordinate update for every variable.
pub struct Solution {
    pub delta_poses: Vec<DVector<f64>>,
    /// Per timestep: `[f_0 (3), ..., f_{C-1}, p_0 (3), ..., p_{C-1}]`.
    pub delta_groups: Vec<DVector<f64>>,
    pub delta_inertial: DVector<f64>,
}

// Small helpers: nalgebra views lack operator sugar for mixed storage.
trait AddAssignSlice {
    fn add_assign_slice(&mut self, v: &DVector<f64>);
}

impl AddAssignSlice for nalgebra::DVectorViewMut<'_, f64> {
    fn add_assign_slice(&mut self, v: &DVector<f64>) {
        for i in 0..v.len() {
            self[i] += v[i];
        }
    }
}

trait AddAssignMatrix {
    fn add_assign_matrix(&mut self, m: &DMatrix<f64>);
}

impl AddAssignMatrix for nalgebra::DMatrixViewMut<'_, f64> {
    fn add_assign_matrix(&mut self, m: &DMatrix<f64>) {
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                self[(i, j)] += m[(i, j)];
            }
        }
    }
}

trait SubAssignView {
    fn sub_assign_view(&mut self, m: &nalgebra::DMatrixView<'_, f64>);
}

impl SubAssignView for DMatrix<f64> {
    fn sub_assign_view(&mut self, m: &nalgebra::DMatrixView<'_, f64>) {
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                self[(i, j)] -= m[(i, j)];
            }
        }
    }
}
