//! Snapshot compression: POD, POD-Greedy, supremizer enrichment and the
//! Galerkin projection of all operators onto the reduced bases.
//!
//! Velocity modes are orthonormal in the H1-seminorm inner product `x_u`,
//! pressure modes in the L2 inner product `x_p`. Supremizer modes are
//! orthogonalized against the velocity modes and appended, so truncating to
//! the first `N` columns of each block keeps the bases nested.

use crate::assemble::{convection_term, Theta};
use crate::fom::{FomProblem, ProblemKind, SnapshotSet, StabKind};
use crate::sparse::{self, SpMat};
use crate::stab::assemble_franca_hughes;
use crate::{Error, Params};
use faer::prelude::*;
use faer::Side;

/// X-orthonormal POD modes with their singular values.
#[derive(Debug, Clone)]
pub struct Pod {
    pub modes: Mat<f64>,
    pub singular_values: Vec<f64>,
}

/// X-weighted norm of a vector.
pub fn x_norm(x: &SpMat, v: &Col<f64>) -> f64 {
    sparse::quad_form(v, x, v).max(0.0).sqrt()
}

/// Modified Gram-Schmidt in the X inner product against the columns of
/// `basis`, in place. Returns the remaining X-norm of `v`.
fn x_orthogonalize(x: &SpMat, basis: MatRef<f64>, v: &mut Col<f64>) -> f64 {
    for _ in 0..2 {
        for j in 0..basis.ncols() {
            let zj = basis.col(j).to_owned();
            let xv = sparse::spmv(x, v);
            let mut coef = 0.0;
            for i in 0..v.nrows() {
                coef += zj[i] * xv[i];
            }
            for i in 0..v.nrows() {
                v[i] -= coef * zj[i];
            }
        }
    }
    x_norm(x, v)
}

/// Proper orthogonal decomposition by the method of snapshots. Keeps at most
/// `n_max` modes and drops modes whose singular value falls below
/// `tol` relative to the largest one.
pub fn pod(snapshots: MatRef<f64>, x: &SpMat, n_max: usize, tol: f64) -> Result<Pod, Error> {
    let n = snapshots.nrows();
    let ns = snapshots.ncols();
    if x.nrows() != n || x.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "inner product is {}x{}, snapshots have {} rows",
            x.nrows(),
            x.ncols(),
            n
        )));
    }
    if ns == 0 || n_max == 0 {
        return Ok(Pod { modes: Mat::zeros(n, 0), singular_values: Vec::new() });
    }
    let xs = sparse::spmm(x, snapshots);
    let gram = snapshots.transpose() * &xs;
    let eig = gram.selfadjoint_eigendecomposition(Side::Lower);
    let lam = eig.s().column_vector();
    let vecs = eig.u();
    let mut order: Vec<usize> = (0..ns).collect();
    order.sort_by(|&a, &b| lam[b].partial_cmp(&lam[a]).unwrap());
    let lam_max = lam[order[0]].max(0.0);
    if lam_max <= 0.0 {
        return Ok(Pod { modes: Mat::zeros(n, 0), singular_values: Vec::new() });
    }

    let mut modes = Mat::zeros(n, 0);
    let mut singular_values = Vec::new();
    for &idx in order.iter().take(n_max) {
        let l = lam[idx];
        // The Gram-matrix route loses half the digits; eigenvalues at the
        // round-off floor carry no usable mode.
        if l <= 0.0 || (l / lam_max).sqrt() <= tol || l / lam_max <= 1e-14 {
            break;
        }
        let sigma = l.sqrt();
        let mut mode = Col::zeros(n);
        for j in 0..ns {
            let c = vecs[(j, idx)] / sigma;
            for i in 0..n {
                mode[i] += c * snapshots[(i, j)];
            }
        }
        // Re-orthonormalize against accepted modes for numerical safety.
        let norm = x_orthogonalize(x, modes.as_ref(), &mut mode);
        if norm <= 1e-12 {
            continue;
        }
        let inv = 1.0 / norm;
        let ncols = modes.ncols();
        modes.resize_with(n, ncols + 1, |i, _| mode[i] * inv);
        singular_values.push(sigma);
    }
    Ok(Pod { modes, singular_values })
}

/// POD-Greedy settings.
#[derive(Debug, Clone)]
pub struct GreedyConfig {
    /// Cap on greedy iterations.
    pub n_iter_max: usize,
    /// Target velocity basis size.
    pub n_u_max: usize,
    /// Target pressure basis size.
    pub n_p_max: usize,
    /// Modes added per field and iteration.
    pub modes_per_iter: usize,
    /// Stop when the worst relative projection error drops below this.
    pub tol: f64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig { n_iter_max: 25, n_u_max: 30, n_p_max: 30, modes_per_iter: 2, tol: 1e-10 }
    }
}

/// POD-Greedy output: nested velocity and pressure bases with the selection
/// history.
#[derive(Debug, Clone)]
pub struct GreedyResult {
    pub z_u: Mat<f64>,
    pub z_p: Mat<f64>,
    /// Training-set index chosen at each iteration.
    pub selected: Vec<usize>,
    /// Worst relative projection error before each iteration.
    pub history: Vec<f64>,
}

/// Relative squared X-projection error of a trajectory onto `z`, together
/// with the residual trajectory.
fn projection_residual(traj: MatRef<f64>, z: MatRef<f64>, x: &SpMat) -> (Mat<f64>, f64, f64) {
    let xt = sparse::spmm(x, traj);
    let coef = z.transpose() * &xt;
    let resid = traj.to_owned() - z * &coef;
    let mut err = 0.0;
    let mut tot = 0.0;
    let x_resid = sparse::spmm(x, resid.as_ref());
    for k in 0..traj.ncols() {
        for i in 0..traj.nrows() {
            err += resid[(i, k)] * x_resid[(i, k)];
            tot += traj[(i, k)] * xt[(i, k)];
        }
    }
    (resid, err.max(0.0), tot.max(0.0))
}

/// Haasdonk-style POD-Greedy over full-order trajectories: the parameter with
/// the worst relative projection error is selected and a few POD modes of its
/// projection residual are appended, for velocity and pressure separately.
pub fn pod_greedy(
    set: &SnapshotSet,
    x_u: &SpMat,
    x_p: &SpMat,
    cfg: &GreedyConfig,
) -> Result<GreedyResult, Error> {
    if set.params.is_empty() {
        return Err(Error::InvalidParameter("empty training set".into()));
    }
    let n_steps = set.solutions[0].velocity.ncols() - 1;
    // Trajectories without the zero initial column.
    let vel_traj: Vec<MatRef<f64>> = set
        .solutions
        .iter()
        .map(|s| s.velocity.as_ref().submatrix(0, 1, s.velocity.nrows(), n_steps))
        .collect();
    let pres_traj: Vec<MatRef<f64>> = set
        .solutions
        .iter()
        .map(|s| s.pressure.as_ref().submatrix(0, 1, s.pressure.nrows(), n_steps))
        .collect();

    let n_u = vel_traj[0].nrows();
    let n_p = pres_traj[0].nrows();
    let mut z_u: Mat<f64> = Mat::zeros(n_u, 0);
    let mut z_p: Mat<f64> = Mat::zeros(n_p, 0);
    let mut selected = Vec::new();
    let mut history = Vec::new();

    for _ in 0..cfg.n_iter_max {
        if z_u.ncols() >= cfg.n_u_max && z_p.ncols() >= cfg.n_p_max {
            break;
        }
        let mut worst = (0usize, -1.0f64);
        let mut residuals: Option<(Mat<f64>, Mat<f64>)> = None;
        for i in 0..set.params.len() {
            let (ru, eu, tu) = projection_residual(vel_traj[i], z_u.as_ref(), x_u);
            let (rp, ep, tp) = projection_residual(pres_traj[i], z_p.as_ref(), x_p);
            let rel_u = if tu > 0.0 { eu / tu } else { 0.0 };
            let rel_p = if tp > 0.0 { ep / tp } else { 0.0 };
            let eta = (rel_u + rel_p).sqrt();
            if eta > worst.1 {
                worst = (i, eta);
                residuals = Some((ru, rp));
            }
        }
        history.push(worst.1);
        if worst.1 < cfg.tol {
            break;
        }
        let (ru, rp) = residuals.unwrap();
        selected.push(worst.0);

        let mut grew = false;
        let room_u = cfg.n_u_max.saturating_sub(z_u.ncols());
        if room_u > 0 {
            let new = pod(ru.as_ref(), x_u, cfg.modes_per_iter.min(room_u), 1e-10)?;
            grew |= append_orthonormal(&mut z_u, new.modes.as_ref(), x_u);
        }
        let room_p = cfg.n_p_max.saturating_sub(z_p.ncols());
        if room_p > 0 {
            let new = pod(rp.as_ref(), x_p, cfg.modes_per_iter.min(room_p), 1e-10)?;
            grew |= append_orthonormal(&mut z_p, new.modes.as_ref(), x_p);
        }
        if !grew {
            break;
        }
    }
    Ok(GreedyResult { z_u, z_p, selected, history })
}

/// Appends the columns of `new` to `basis` after X-orthogonalization,
/// dropping near-dependent ones. Returns whether anything was added.
fn append_orthonormal(basis: &mut Mat<f64>, new: MatRef<f64>, x: &SpMat) -> bool {
    let n = basis.nrows();
    let mut added = false;
    for j in 0..new.ncols() {
        let mut v = new.col(j).to_owned();
        let norm = x_orthogonalize(x, basis.as_ref(), &mut v);
        if norm <= 1e-12 {
            continue;
        }
        let inv = 1.0 / norm;
        let ncols = basis.ncols();
        basis.resize_with(n, ncols + 1, |i, _| v[i] * inv);
        added = true;
    }
    added
}

/// Solves the supremizer equation `X_u t = B(mu)^T q` with homogeneous
/// Dirichlet conditions on the velocity boundary. The inner-product factor
/// is parameter independent and computed once.
pub struct SupremizerSolver {
    interior: Vec<usize>,
    chol: faer::sparse::linalg::solvers::Cholesky<usize, f64>,
    bt_terms: Vec<(Theta, SpMat)>,
    n_vel: usize,
}

impl SupremizerSolver {
    pub fn new(prob: &FomProblem) -> Result<Self, Error> {
        let interior = prob.vel.interior_dofs();
        let xi = sparse::submatrix(&prob.x_u, &interior, &interior);
        let chol = xi
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::EigenFailure(format!("inner product factorization: {e:?}")))?;
        let bt_terms = prob
            .divergence
            .terms
            .iter()
            .map(|(t, m)| (*t, sparse::transpose(m)))
            .collect();
        Ok(SupremizerSolver { interior, chol, bt_terms, n_vel: prob.n_vel() })
    }

    pub fn apply(&self, p: &Params, q: &Col<f64>) -> Col<f64> {
        let mut rhs_full: Col<f64> = Col::zeros(self.n_vel);
        for (t, bt) in &self.bt_terms {
            let theta = t.eval(p);
            let v = sparse::spmv(bt, q);
            for i in 0..self.n_vel {
                rhs_full[i] += theta * v[i];
            }
        }
        let rhs = Col::from_fn(self.interior.len(), |k| rhs_full[self.interior[k]]);
        let sol = self.chol.solve(&rhs);
        let mut out = Col::zeros(self.n_vel);
        for (k, &i) in self.interior.iter().enumerate() {
            out[i] = sol[k];
        }
        out
    }
}

/// Supremizer basis: the supremizers of all training pressure snapshots (each
/// at its own parameter) are projected X-orthogonal to `z_u` and compressed
/// with POD to at most `n_s_max` modes.
pub fn supremizer_modes(
    prob: &FomProblem,
    set: &SnapshotSet,
    z_u: MatRef<f64>,
    n_s_max: usize,
    tol: f64,
) -> Result<Mat<f64>, Error> {
    let solver = SupremizerSolver::new(prob)?;
    let n_steps = set.solutions[0].pressure.ncols() - 1;
    let total = set.params.len() * n_steps;
    let mut t_mat = Mat::zeros(prob.n_vel(), total);
    let mut c = 0;
    for (i, sol) in set.solutions.iter().enumerate() {
        for k in 1..=n_steps {
            let q = sol.pressure.col(k).to_owned();
            let t = solver.apply(&set.params[i], &q);
            for r in 0..prob.n_vel() {
                t_mat[(r, c)] = t[r];
            }
            c += 1;
        }
    }
    // Remove the part already spanned by the velocity basis.
    let xt = sparse::spmm(&prob.x_u, t_mat.as_ref());
    let coef = z_u.transpose() * &xt;
    t_mat = t_mat - z_u * &coef;
    let p = pod(t_mat.as_ref(), &prob.x_u, n_s_max, tol)?;
    // One more sweep against z_u to clean up round-off.
    let mut z_s = Mat::zeros(prob.n_vel(), 0);
    let mut joint = z_u.to_owned();
    for j in 0..p.modes.ncols() {
        let mut v = p.modes.col(j).to_owned();
        let norm = x_orthogonalize(&prob.x_u, joint.as_ref(), &mut v);
        if norm <= 1e-12 {
            continue;
        }
        let inv = 1.0 / norm;
        let jc = joint.ncols();
        joint.resize_with(prob.n_vel(), jc + 1, |i, _| v[i] * inv);
        let sc = z_s.ncols();
        z_s.resize_with(prob.n_vel(), sc + 1, |i, _| v[i] * inv);
    }
    Ok(z_s)
}

/// Dense affine operator `sum_q theta_q(mu) M_q` in reduced coordinates.
#[derive(Debug, Clone)]
pub struct ReducedAffine {
    pub terms: Vec<(Theta, Mat<f64>)>,
}

impl ReducedAffine {
    pub fn assemble(&self, p: &Params) -> Mat<f64> {
        let (r, c) = (self.terms[0].1.nrows(), self.terms[0].1.ncols());
        let mut out = Mat::zeros(r, c);
        for (t, m) in &self.terms {
            let theta = t.eval(p);
            for j in 0..c {
                for i in 0..r {
                    out[(i, j)] += theta * m[(i, j)];
                }
            }
        }
        out
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> ReducedAffine {
        ReducedAffine {
            terms: self
                .terms
                .iter()
                .map(|(t, m)| {
                    (*t, Mat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])]))
                })
                .collect(),
        }
    }
}

/// Dense affine vector in reduced coordinates.
#[derive(Debug, Clone)]
pub struct ReducedVec {
    pub terms: Vec<(Theta, Col<f64>)>,
}

impl ReducedVec {
    pub fn assemble(&self, p: &Params) -> Col<f64> {
        let n = self.terms[0].1.nrows();
        let mut out = Col::zeros(n);
        for (t, v) in &self.terms {
            let theta = t.eval(p);
            for i in 0..n {
                out[i] += theta * v[i];
            }
        }
        out
    }

    pub fn select(&self, rows: &[usize]) -> ReducedVec {
        ReducedVec {
            terms: self
                .terms
                .iter()
                .map(|(t, v)| (*t, Col::from_fn(rows.len(), |i| v[rows[i]])))
                .collect(),
        }
    }
}

/// Reduced trilinear convection data over the extended velocity basis
/// `[z_u | z_s | lifting]`. `terms[q].1[m]` holds the matrix with entries
/// `c_q(zeta_m, zeta_j, zeta_i)`, test index `i` over the plain reduced
/// basis, trial `j` and transport `m` over the extended one.
#[derive(Debug, Clone)]
pub struct ReducedConvection {
    pub terms: Vec<(Theta, Vec<Mat<f64>>)>,
}

/// Everything the online phase needs: reduced operators, bases and the
/// problem description to rebuild the mesh deterministically.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub problem: ProblemKind,
    pub pair: crate::fom::Pair,
    pub stab: StabKind,
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub delta: f64,
    pub n_u: usize,
    pub n_s: usize,
    pub n_p: usize,
    pub mass: ReducedAffine,
    pub diffusion: ReducedAffine,
    pub divergence: ReducedAffine,
    pub rhs_f: ReducedVec,
    pub rhs_g: ReducedVec,
    /// Trial side of `stab_m_tilde` and `stab_b_extra` runs over the
    /// extended basis `[z_u | z_s | lifting]` (one extra column).
    pub stab_m_tilde: Option<Mat<f64>>,
    pub stab_b_extra: Option<ReducedAffine>,
    pub stab_s: Option<Mat<f64>>,
    pub conv: Option<ReducedConvection>,
    pub z_u: Mat<f64>,
    pub z_s: Mat<f64>,
    pub z_p: Mat<f64>,
    pub lifting: Col<f64>,
    pub greedy_history: Vec<f64>,
}

impl ReducedModel {
    /// Column indices into `[z_u | z_s]` for a truncated basis of size `n`
    /// per block.
    pub fn velocity_indices(&self, n: usize, with_sup: bool) -> Vec<usize> {
        let n = n.min(self.n_u);
        let mut idx: Vec<usize> = (0..n).collect();
        if with_sup {
            let ns = n.min(self.n_s);
            idx.extend(self.n_u..self.n_u + ns);
        }
        idx
    }

    /// The stacked velocity basis `[z_u | z_s]`.
    pub fn z_us(&self) -> Mat<f64> {
        hstack(self.z_u.as_ref(), self.z_s.as_ref())
    }
}

pub fn hstack(a: MatRef<f64>, b: MatRef<f64>) -> Mat<f64> {
    if a.ncols() == 0 {
        return b.to_owned();
    }
    if b.ncols() == 0 {
        return a.to_owned();
    }
    assert_eq!(a.nrows(), b.nrows());
    Mat::from_fn(a.nrows(), a.ncols() + b.ncols(), |i, j| {
        if j < a.ncols() {
            a[(i, j)]
        } else {
            b[(i, j - a.ncols())]
        }
    })
}

/// Galerkin projection of all full-order operators onto the reduced bases.
pub fn project_operators(
    prob: &FomProblem,
    z_u: Mat<f64>,
    z_s: Mat<f64>,
    z_p: Mat<f64>,
    greedy_history: Vec<f64>,
) -> Result<ReducedModel, Error> {
    if z_u.nrows() != prob.n_vel() || z_p.nrows() != prob.n_pres() {
        return Err(Error::DimensionMismatch("basis rows do not match the spaces".into()));
    }
    if z_s.ncols() > 0 && z_s.nrows() != prob.n_vel() {
        return Err(Error::DimensionMismatch("supremizer rows do not match".into()));
    }
    let z_us = hstack(z_u.as_ref(), z_s.as_ref());
    let project_op = |op: &crate::assemble::AffineOperator,
                      zl: MatRef<f64>,
                      zr: MatRef<f64>| ReducedAffine {
        terms: op.terms.iter().map(|(t, m)| (*t, sparse::project(zl, m, zr))).collect(),
    };
    let project_vec = |v: &crate::assemble::AffineVector, z: MatRef<f64>| ReducedVec {
        terms: v.terms.iter().map(|(t, c)| (*t, z.transpose() * c)).collect(),
    };

    let mass = project_op(&prob.mass, z_us.as_ref(), z_us.as_ref());
    let diffusion = project_op(&prob.diffusion, z_us.as_ref(), z_us.as_ref());
    let divergence = project_op(&prob.divergence, z_p.as_ref(), z_us.as_ref());
    let rhs_f = project_vec(&prob.rhs_f, z_us.as_ref());
    let rhs_g = project_vec(&prob.rhs_g, z_p.as_ref());

    // Trial-side basis extended by the lifting, so stabilization and
    // convection terms acting on the total velocity keep the lid part.
    let z_e = hstack(z_us.as_ref(), prob.lifting.coeffs.as_ref().as_2d());
    let (stab_m_tilde, stab_b_extra, stab_s) = match prob.stab {
        StabKind::EqualOrderPressure => {
            let unit = Params::new(1.0, 1.0)?;
            let fh = assemble_franca_hughes(&prob.vel, &prob.pres, &prob.mesh, &unit, prob.delta)?;
            (
                Some(sparse::project(z_p.as_ref(), &fh.m_tilde, z_e.as_ref())),
                Some(ReducedAffine {
                    terms: vec![(
                        Theta::Nu,
                        sparse::project(z_p.as_ref(), &fh.b_extra, z_e.as_ref()),
                    )],
                }),
                Some(sparse::project(z_p.as_ref(), &fh.s, z_p.as_ref())),
            )
        }
        StabKind::PressureJump => {
            let st = prob.stab_blocks(&Params::new(1.0, 1.0)?, None)?.unwrap();
            (None, None, Some(sparse::project(z_p.as_ref(), &st.s, z_p.as_ref())))
        }
        // Streamline terms depend on the transport field and are projected
        // online, step by step.
        StabKind::Supg | StabKind::None => (None, None, None),
    };

    let conv = match prob.problem {
        ProblemKind::Stokes => None,
        ProblemKind::NavierStokes => {
            let thetas = [Theta::One, Theta::Mu2];
            let mut terms = Vec::new();
            for (axis, theta) in thetas.iter().enumerate() {
                let mut mats = Vec::with_capacity(z_e.ncols());
                for m in 0..z_e.ncols() {
                    let w = z_e.col(m).to_owned();
                    let c = convection_term(&prob.vel, &prob.mesh, axis, &w);
                    mats.push(sparse::project(z_us.as_ref(), &c, z_e.as_ref()));
                }
                terms.push((*theta, mats));
            }
            Some(ReducedConvection { terms })
        }
    };

    Ok(ReducedModel {
        problem: prob.problem,
        pair: prob.pair,
        stab: prob.stab,
        nx: prob.nx,
        ny: prob.ny,
        dt: prob.dt,
        n_steps: prob.n_steps,
        delta: prob.delta,
        n_u: z_u.ncols(),
        n_s: z_s.ncols(),
        n_p: z_p.ncols(),
        mass,
        diffusion,
        divergence,
        rhs_f,
        rhs_g,
        stab_m_tilde,
        stab_b_extra,
        stab_s,
        conv,
        z_u,
        z_s,
        z_p,
        lifting: prob.lifting.coeffs.clone(),
        greedy_history,
    })
}
