//! Full-order implicit-Euler solvers for the unsteady Stokes and
//! Navier-Stokes cavity problem.
//!
//! Stokes is solved for the homogenized velocity (lid lifting subtracted), so
//! all velocity Dirichlet values are zero and the saddle matrix is fixed in
//! time: it is factorized once per parameter. Navier-Stokes is solved for the
//! total velocity with a Newton iteration per time step; snapshots are stored
//! homogenized in both cases. The pressure zero-mean condition is enforced
//! through a bordered Lagrange multiplier row.

use crate::assemble::{
    affine_diffusion, affine_divergence, affine_lifting_rhs_f, affine_lifting_rhs_g, affine_mass,
    assemble_convection, assemble_convection_grad, build_lifting, diffusion_matrix, mass_matrix,
    AffineOperator, AffineVector, LiftingFunction,
};
use crate::mesh::{build_structured_mesh, Mesh};
use crate::space::{FeSpace, SpaceKind};
use crate::sparse::{self, CooMat, SpMat};
use crate::stab::{assemble_franca_hughes, assemble_pressure_jump, assemble_supg, StabMatrices};
use crate::{Error, Params};
use faer::prelude::*;

/// Velocity/pressure pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Pair {
    P2P1,
    P1P1,
    P2P2,
    P1P0,
}

impl Pair {
    pub fn vel_kind(self) -> SpaceKind {
        match self {
            Pair::P2P1 | Pair::P2P2 => SpaceKind::VectorP2,
            Pair::P1P1 | Pair::P1P0 => SpaceKind::VectorP1,
        }
    }

    pub fn pres_kind(self) -> SpaceKind {
        match self {
            Pair::P2P1 => SpaceKind::ScalarP1,
            Pair::P1P1 => SpaceKind::ScalarP1,
            Pair::P2P2 => SpaceKind::ScalarP2,
            Pair::P1P0 => SpaceKind::ScalarP0,
        }
    }

    pub fn is_equal_order(self) -> bool {
        matches!(self, Pair::P1P1 | Pair::P2P2)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pair::P2P1 => "p2p1",
            Pair::P1P1 => "p1p1",
            Pair::P2P2 => "p2p2",
            Pair::P1P0 => "p1p0",
        }
    }

    pub fn parse(s: &str) -> Result<Self, Error> {
        match s {
            "p2p1" => Ok(Pair::P2P1),
            "p1p1" => Ok(Pair::P1P1),
            "p2p2" => Ok(Pair::P2P2),
            "p1p0" => Ok(Pair::P1P0),
            _ => Err(Error::Config(format!("unknown pair '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ProblemKind {
    Stokes,
    NavierStokes,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Stokes => "stokes",
            ProblemKind::NavierStokes => "navier-stokes",
        }
    }

    pub fn parse(s: &str) -> Result<Self, Error> {
        match s {
            "stokes" => Ok(ProblemKind::Stokes),
            "navier-stokes" | "ns" => Ok(ProblemKind::NavierStokes),
            _ => Err(Error::Config(format!("unknown problem '{s}'"))),
        }
    }
}

/// Offline stabilization applied in the full-order model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum StabKind {
    None,
    /// Pressure-gradient stabilization for equal-order pairs.
    EqualOrderPressure,
    /// Interior pressure jumps for P1/P0.
    PressureJump,
    /// Streamline-diffusion stabilization (Navier-Stokes).
    Supg,
}

impl StabKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StabKind::None => "none",
            StabKind::EqualOrderPressure => "equal-order",
            StabKind::PressureJump => "pressure-jump",
            StabKind::Supg => "supg",
        }
    }

    pub fn parse(s: &str) -> Result<Self, Error> {
        match s {
            "none" => Ok(StabKind::None),
            "equal-order" => Ok(StabKind::EqualOrderPressure),
            "pressure-jump" => Ok(StabKind::PressureJump),
            "supg" => Ok(StabKind::Supg),
            _ => Err(Error::Config(format!("unknown stabilization '{s}'"))),
        }
    }
}

/// Full-order problem: mesh, spaces, affine operators and time grid.
#[derive(Debug)]
pub struct FomProblem {
    pub nx: usize,
    pub ny: usize,
    pub pair: Pair,
    pub problem: ProblemKind,
    pub stab: StabKind,
    pub delta: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub mesh: Mesh,
    pub vel: FeSpace,
    pub pres: FeSpace,
    pub mass: AffineOperator,
    pub diffusion: AffineOperator,
    pub divergence: AffineOperator,
    pub rhs_f: AffineVector,
    pub rhs_g: AffineVector,
    pub lifting: LiftingFunction,
    /// Velocity inner product (H1 seminorm on the reference domain).
    pub x_u: SpMat,
    /// Pressure inner product (L2 on the reference domain).
    pub x_p: SpMat,
    dirichlet: Vec<bool>,
    /// Pressure-mean weights `w_k = int psi_k`.
    mean_w: Col<f64>,
}

/// One full-order trajectory. Velocity columns are homogenized (lifting
/// subtracted); column `k` is time `k * dt`, starting from rest.
#[derive(Debug, Clone)]
pub struct FomSolution {
    pub velocity: Mat<f64>,
    pub pressure: Mat<f64>,
    /// Newton iterations per time step (empty for Stokes).
    pub newton_iters: Vec<usize>,
}

/// Full-order trajectories at a list of training parameters.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub params: Vec<Params>,
    pub solutions: Vec<FomSolution>,
}

impl FomProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        nx: usize,
        ny: usize,
        pair: Pair,
        problem: ProblemKind,
        stab: StabKind,
        dt: f64,
        t_final: f64,
        delta: f64,
    ) -> Result<Self, Error> {
        if !(dt > 0.0) || !(t_final > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "time grid must be positive, got dt={dt}, t_final={t_final}"
            )));
        }
        let n_steps = (t_final / dt).round() as usize;
        if n_steps == 0 || (n_steps as f64 * dt - t_final).abs() > 1e-9 * t_final {
            return Err(Error::InvalidParameter(format!(
                "t_final={t_final} is not an integer multiple of dt={dt}"
            )));
        }
        match stab {
            StabKind::None => {}
            StabKind::EqualOrderPressure => {
                if !pair.is_equal_order() {
                    return Err(Error::SpaceMismatch(
                        "equal-order stabilization requires the P1/P1 or P2/P2 pair".into(),
                    ));
                }
            }
            StabKind::PressureJump => {
                if pair != Pair::P1P0 {
                    return Err(Error::SpaceMismatch(
                        "pressure-jump stabilization requires the P1/P0 pair".into(),
                    ));
                }
            }
            StabKind::Supg => {
                if !pair.is_equal_order() {
                    return Err(Error::SpaceMismatch(
                        "streamline stabilization requires an equal-order pair".into(),
                    ));
                }
                if problem != ProblemKind::NavierStokes {
                    return Err(Error::SpaceMismatch(
                        "streamline stabilization applies to the Navier-Stokes problem".into(),
                    ));
                }
            }
        }
        if stab != StabKind::None && !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "stabilization coefficient must be positive, got {delta}"
            )));
        }

        let mesh = build_structured_mesh(nx, ny);
        let vel = FeSpace::new(pair.vel_kind(), &mesh);
        let pres = FeSpace::new(pair.pres_kind(), &mesh);
        let mass = affine_mass(&vel, &mesh)?;
        let diffusion = affine_diffusion(&vel, &mesh)?;
        let divergence = affine_divergence(&vel, &pres, &mesh)?;
        let lifting = build_lifting(&mesh, &vel)?;
        let rhs_f = affine_lifting_rhs_f(&diffusion, &lifting);
        let rhs_g = affine_lifting_rhs_g(&divergence, &lifting);
        let x_u = diffusion_matrix(&vel, &mesh, [1.0, 1.0]);
        let x_p = mass_matrix(&pres, &mesh, 1.0);
        let mut dirichlet = vec![false; vel.dof_count];
        for (d, _) in vel.dirichlet_dofs() {
            dirichlet[d] = true;
        }
        let ones = Col::from_fn(pres.dof_count, |_| 1.0);
        let mean_w = sparse::spmv(&x_p, &ones);
        Ok(FomProblem {
            nx,
            ny,
            pair,
            problem,
            stab,
            delta,
            dt,
            n_steps,
            mesh,
            vel,
            pres,
            mass,
            diffusion,
            divergence,
            rhs_f,
            rhs_g,
            lifting,
            x_u,
            x_p,
            dirichlet,
            mean_w,
        })
    }

    pub fn n_vel(&self) -> usize {
        self.vel.dof_count
    }

    pub fn n_pres(&self) -> usize {
        self.pres.dof_count
    }

    /// Total saddle system size including the mean-pressure multiplier.
    fn n_sys(&self) -> usize {
        self.n_vel() + self.n_pres() + 1
    }

    /// Total velocity at time index `k`: homogenized solution plus lifting.
    pub fn total_velocity(&self, sol: &FomSolution, k: usize) -> Col<f64> {
        Col::from_fn(self.n_vel(), |i| sol.velocity[(i, k)] + self.lifting.coeffs[i])
    }

    /// Stabilization blocks at a parameter. For the streamline variant the
    /// blocks depend on the frozen transport field `w` (total velocity).
    pub fn stab_blocks(
        &self,
        p: &Params,
        w: Option<&Col<f64>>,
    ) -> Result<Option<StabMatrices>, Error> {
        match self.stab {
            StabKind::None => Ok(None),
            StabKind::EqualOrderPressure => Ok(Some(assemble_franca_hughes(
                &self.vel, &self.pres, &self.mesh, p, self.delta,
            )?)),
            StabKind::PressureJump => {
                let s = assemble_pressure_jump(&self.pres, &self.mesh, self.delta)?;
                let empty = CooMat::new(self.n_pres(), self.n_vel()).into_csc();
                Ok(Some(StabMatrices {
                    m_tilde: empty.clone(),
                    b_extra: empty,
                    s,
                    m_uv: None,
                    k_uv: None,
                    g_pv: None,
                }))
            }
            StabKind::Supg => {
                let zero;
                let w = match w {
                    Some(w) => w,
                    None => {
                        zero = Col::zeros(self.n_vel());
                        &zero
                    }
                };
                Ok(Some(assemble_supg(&self.vel, &self.pres, &self.mesh, p, self.delta, w)?))
            }
        }
    }

    /// Assembles the bordered saddle matrix from velocity-velocity,
    /// velocity-pressure, pressure-velocity and pressure-pressure
    /// contributions. Velocity Dirichlet rows are replaced by identity rows.
    fn build_system(
        &self,
        uu: &[(f64, &SpMat)],
        up: &[(f64, &SpMat)],
        pu: &[(f64, &SpMat)],
        pp: &[(f64, &SpMat)],
    ) -> SpMat {
        let (nu, np) = (self.n_vel(), self.n_pres());
        let n = self.n_sys();
        let mut coo = CooMat::new(n, n);
        let mut add = |terms: &[(f64, &SpMat)], ro: usize, co: usize, skip_dir_rows: bool| {
            for &(scale, m) in terms {
                for col in 0..m.ncols() {
                    for (idx, &row) in m.row_indices_of_col_raw(col).iter().enumerate() {
                        if skip_dir_rows && self.dirichlet[row] {
                            continue;
                        }
                        coo.push(ro + row, co + col, scale * m.values_of_col(col)[idx]);
                    }
                }
            }
        };
        add(uu, 0, 0, true);
        add(up, 0, nu, true);
        add(pu, nu, 0, false);
        add(pp, nu, nu, false);
        for (d, dir) in self.dirichlet.iter().enumerate() {
            if *dir {
                coo.push(d, d, 1.0);
            }
        }
        for k in 0..np {
            coo.push(nu + k, n - 1, self.mean_w[k]);
            coo.push(n - 1, nu + k, self.mean_w[k]);
        }
        coo.into_csc()
    }

    /// Runs the solver matching the configured problem kind.
    pub fn solve(&self, p: &Params) -> Result<FomSolution, Error> {
        match self.problem {
            ProblemKind::Stokes => self.solve_stokes(p),
            ProblemKind::NavierStokes => self.solve_navier_stokes(p),
        }
    }

    /// Implicit-Euler time stepping for the homogenized Stokes problem. The
    /// saddle matrix is time independent and factorized once.
    pub fn solve_stokes(&self, p: &Params) -> Result<FomSolution, Error> {
        if self.problem != ProblemKind::Stokes {
            return Err(Error::Config("problem is not configured as Stokes".into()));
        }
        let (nu, np) = (self.n_vel(), self.n_pres());
        let n = self.n_sys();
        let idt = 1.0 / self.dt;
        let m = self.mass.assemble(p);
        let a = self.diffusion.assemble(p);
        let b = self.divergence.assemble(p);
        let bt = sparse::transpose(&b);
        let f = self.rhs_f.assemble(p);
        let g = self.rhs_g.assemble(p);
        let st = self.stab_blocks(p, None)?;

        let uu: Vec<(f64, &SpMat)> = vec![(idt, &m), (1.0, &a)];
        let up: Vec<(f64, &SpMat)> = vec![(1.0, &bt)];
        let mut pu: Vec<(f64, &SpMat)> = vec![(1.0, &b)];
        let mut pp: Vec<(f64, &SpMat)> = Vec::new();
        if let Some(st) = &st {
            pu.push((-idt, &st.m_tilde));
            pu.push((-1.0, &st.b_extra));
            pp.push((-1.0, &st.s));
            debug_assert!(st.m_uv.is_none());
        }
        let k_sys = self.build_system(&uu, &up, &pu, &pp);
        let lu = k_sys
            .sp_lu()
            .map_err(|e| Error::SolverFailure { time_index: 0, detail: format!("{e:?}") })?;

        let mut velocity = Mat::zeros(nu, self.n_steps + 1);
        let mut pressure = Mat::zeros(np, self.n_steps + 1);
        let mut u_prev: Col<f64> = Col::zeros(nu);
        for k in 1..=self.n_steps {
            let m_uprev = sparse::spmv(&m, &u_prev);
            let mut rhs: Col<f64> = Col::zeros(n);
            for i in 0..nu {
                if !self.dirichlet[i] {
                    rhs[i] = f[i] + idt * m_uprev[i];
                }
            }
            let mut g_row = g.clone();
            if let Some(st) = &st {
                let mt_uprev = sparse::spmv(&st.m_tilde, &u_prev);
                for j in 0..np {
                    g_row[j] -= idt * mt_uprev[j];
                }
            }
            for j in 0..np {
                rhs[nu + j] = g_row[j];
            }
            let x = lu.solve(&rhs);
            let res = check_residual(&k_sys, &x, &rhs);
            if res > 1e-10 {
                return Err(Error::SolverFailure {
                    time_index: k,
                    detail: format!("relative residual {res:.3e} exceeds 1e-10"),
                });
            }
            for i in 0..nu {
                velocity[(i, k)] = x[i];
            }
            for j in 0..np {
                pressure[(j, k)] = x[nu + j];
            }
            u_prev = Col::from_fn(nu, |i| x[i]);
        }
        Ok(FomSolution { velocity, pressure, newton_iters: Vec::new() })
    }

    /// Implicit-Euler time stepping for Navier-Stokes in total-velocity form
    /// with a Newton iteration per step. Streamline stabilization blocks are
    /// frozen at the current iterate (Picard treatment of their transport
    /// field), the Galerkin convection is linearized exactly.
    pub fn solve_navier_stokes(&self, p: &Params) -> Result<FomSolution, Error> {
        if self.problem != ProblemKind::NavierStokes {
            return Err(Error::Config("problem is not configured as Navier-Stokes".into()));
        }
        let (nu, np) = (self.n_vel(), self.n_pres());
        let n = self.n_sys();
        let idt = 1.0 / self.dt;
        let m = self.mass.assemble(p);
        let a = self.diffusion.assemble(p);
        let b = self.divergence.assemble(p);
        let bt = sparse::transpose(&b);
        let l = &self.lifting.coeffs;
        // Parameter-only stabilization can be assembled once.
        let fixed_st = match self.stab {
            StabKind::Supg => None,
            _ => self.stab_blocks(p, None)?,
        };

        let mut velocity = Mat::zeros(nu, self.n_steps + 1);
        let mut pressure = Mat::zeros(np, self.n_steps + 1);
        let mut newton_iters = Vec::with_capacity(self.n_steps);
        // Total velocity starts at the lifting (lid already moving).
        let mut u_prev: Col<f64> = l.clone();
        let mut u = u_prev.clone();
        let mut pr: Col<f64> = Col::zeros(np);
        let mut lam = 0.0;

        for k in 1..=self.n_steps {
            let mut r0_norm = f64::NAN;
            let mut converged = false;
            let mut iters = 0;
            for it in 0..25 {
                iters = it + 1;
                let st_storage;
                let st: Option<&StabMatrices> = match self.stab {
                    StabKind::Supg => {
                        st_storage = self.stab_blocks(p, Some(&u))?;
                        st_storage.as_ref()
                    }
                    _ => fixed_st.as_ref(),
                };
                let r = self.ns_residual(p, &m, &a, &b, &bt, st, &u, &u_prev, &pr, lam, idt)?;
                let r_norm = r.norm_l2();
                if it == 0 {
                    r0_norm = r_norm;
                }
                if r_norm <= 1e-8 || r_norm <= 1e-10 * r0_norm {
                    converged = true;
                    break;
                }
                let c1 = assemble_convection(&self.vel, &self.mesh, p, &u)?;
                let c2 = assemble_convection_grad(&self.vel, &self.mesh, p, &u)?;
                let mut uu: Vec<(f64, &SpMat)> =
                    vec![(idt, &m), (1.0, &a), (1.0, &c1), (1.0, &c2)];
                let mut up: Vec<(f64, &SpMat)> = vec![(1.0, &bt)];
                let mut pu: Vec<(f64, &SpMat)> = vec![(1.0, &b)];
                let mut pp: Vec<(f64, &SpMat)> = Vec::new();
                if let Some(st) = st {
                    pu.push((-idt, &st.m_tilde));
                    pu.push((-1.0, &st.b_extra));
                    pp.push((-1.0, &st.s));
                    if let Some(m_uv) = &st.m_uv {
                        uu.push((idt, m_uv));
                    }
                    if let Some(k_uv) = &st.k_uv {
                        uu.push((1.0, k_uv));
                    }
                    if let Some(g_pv) = &st.g_pv {
                        up.push((1.0, g_pv));
                    }
                }
                let jac = self.build_system(&uu, &up, &pu, &pp);
                let lu = jac.sp_lu().map_err(|e| Error::SolverFailure {
                    time_index: k,
                    detail: format!("{e:?}"),
                })?;
                let neg_r = Col::from_fn(n, |i| -r[i]);
                let delta = lu.solve(&neg_r);

                // Backtracking on the residual norm, at most 5 halvings.
                let mut alpha = 1.0;
                let mut accepted = false;
                for _ in 0..=5 {
                    let u_try = Col::from_fn(nu, |i| u[i] + alpha * delta[i]);
                    let p_try = Col::from_fn(np, |j| pr[j] + alpha * delta[nu + j]);
                    let lam_try = lam + alpha * delta[n - 1];
                    let st_try_storage;
                    let st_try: Option<&StabMatrices> = match self.stab {
                        StabKind::Supg => {
                            st_try_storage = self.stab_blocks(p, Some(&u_try))?;
                            st_try_storage.as_ref()
                        }
                        _ => fixed_st.as_ref(),
                    };
                    let r_try = self.ns_residual(
                        p, &m, &a, &b, &bt, st_try, &u_try, &u_prev, &p_try, lam_try, idt,
                    )?;
                    if r_try.norm_l2() < r_norm || alpha <= 1.0 / 32.0 {
                        u = u_try;
                        pr = p_try;
                        lam = lam_try;
                        accepted = true;
                        break;
                    }
                    alpha /= 2.0;
                }
                debug_assert!(accepted);
            }
            if !converged {
                let r = {
                    let st_storage;
                    let st: Option<&StabMatrices> = match self.stab {
                        StabKind::Supg => {
                            st_storage = self.stab_blocks(p, Some(&u))?;
                            st_storage.as_ref()
                        }
                        _ => fixed_st.as_ref(),
                    };
                    self.ns_residual(p, &m, &a, &b, &bt, st, &u, &u_prev, &pr, lam, idt)?
                };
                return Err(Error::NewtonDivergence {
                    step: k,
                    residual: r.norm_l2(),
                    iters,
                });
            }
            newton_iters.push(iters - 1);
            for i in 0..nu {
                velocity[(i, k)] = u[i] - l[i];
            }
            for j in 0..np {
                pressure[(j, k)] = pr[j];
            }
            u_prev = u.clone();
        }
        Ok(FomSolution { velocity, pressure, newton_iters })
    }

    /// Nonlinear residual of one implicit-Euler step in total-velocity form.
    #[allow(clippy::too_many_arguments)]
    fn ns_residual(
        &self,
        p: &Params,
        m: &SpMat,
        a: &SpMat,
        b: &SpMat,
        bt: &SpMat,
        st: Option<&StabMatrices>,
        u: &Col<f64>,
        u_prev: &Col<f64>,
        pr: &Col<f64>,
        lam: f64,
        idt: f64,
    ) -> Result<Col<f64>, Error> {
        let (nu, np) = (self.n_vel(), self.n_pres());
        let n = self.n_sys();
        let du = Col::from_fn(nu, |i| u[i] - u_prev[i]);
        let mut r = Col::zeros(n);
        let m_du = sparse::spmv(m, &du);
        let a_u = sparse::spmv(a, u);
        let bt_p = sparse::spmv(bt, pr);
        for i in 0..nu {
            r[i] = idt * m_du[i] + a_u[i] + bt_p[i];
        }
        let c1 = assemble_convection(&self.vel, &self.mesh, p, u)?;
        let c_u = sparse::spmv(&c1, u);
        for i in 0..nu {
            r[i] += c_u[i];
        }
        let b_u = sparse::spmv(b, u);
        for j in 0..np {
            r[nu + j] = b_u[j] + lam * self.mean_w[j];
        }
        if let Some(st) = st {
            let mt_du = sparse::spmv(&st.m_tilde, &du);
            let be_u = sparse::spmv(&st.b_extra, u);
            let s_p = sparse::spmv(&st.s, pr);
            for j in 0..np {
                r[nu + j] -= idt * mt_du[j] + be_u[j] + s_p[j];
            }
            if let Some(m_uv) = &st.m_uv {
                let v = sparse::spmv(m_uv, &du);
                for i in 0..nu {
                    r[i] += idt * v[i];
                }
            }
            if let Some(k_uv) = &st.k_uv {
                let v = sparse::spmv(k_uv, u);
                for i in 0..nu {
                    r[i] += v[i];
                }
            }
            if let Some(g_pv) = &st.g_pv {
                let v = sparse::spmv(g_pv, pr);
                for i in 0..nu {
                    r[i] += v[i];
                }
            }
        }
        // Dirichlet rows pin the total velocity to the lifting values.
        for i in 0..nu {
            if self.dirichlet[i] {
                r[i] = u[i] - self.lifting.coeffs[i];
            }
        }
        let mut mean = 0.0;
        for j in 0..np {
            mean += self.mean_w[j] * pr[j];
        }
        r[n - 1] = mean;
        Ok(r)
    }

    /// Full-order trajectories at each training parameter.
    pub fn compute_snapshots(&self, params: &[Params]) -> Result<SnapshotSet, Error> {
        let mut solutions = Vec::with_capacity(params.len());
        for p in params {
            solutions.push(self.solve(p)?);
        }
        Ok(SnapshotSet { params: params.to_vec(), solutions })
    }
}

/// Relative residual of a linear solve.
fn check_residual(k: &SpMat, x: &Col<f64>, rhs: &Col<f64>) -> f64 {
    let kx = sparse::spmv(k, x);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..rhs.nrows() {
        num += (kx[i] - rhs[i]).powi(2);
        den += rhs[i].powi(2);
    }
    (num / den.max(1e-300)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stokes_decays_to_steady_state() {
        let prob = FomProblem::new(
            8, 8, Pair::P2P1, ProblemKind::Stokes, StabKind::None, 0.1, 3.0, 0.0,
        )
        .unwrap();
        let p = Params::new(1.0, 1.5).unwrap();
        let sol = prob.solve(&p).unwrap();

        // Dense steady saddle solve as an oracle for the long-time limit.
        let (nu, np) = (prob.n_vel(), prob.n_pres());
        let n = nu + np + 1;
        let a = sparse::to_dense(&prob.diffusion.assemble(&p));
        let b = sparse::to_dense(&prob.divergence.assemble(&p));
        let f = prob.rhs_f.assemble(&p);
        let g = prob.rhs_g.assemble(&p);
        let ones = Col::from_fn(np, |_| 1.0);
        let w = sparse::spmv(&prob.x_p, &ones);
        let mut dir = vec![false; nu];
        for (d, _) in prob.vel.dirichlet_dofs() {
            dir[d] = true;
        }
        let mut k = Mat::zeros(n, n);
        let mut rhs = Col::zeros(n);
        for i in 0..nu {
            if dir[i] {
                k[(i, i)] = 1.0;
            } else {
                for j in 0..nu {
                    k[(i, j)] = a[(i, j)];
                }
                for j in 0..np {
                    k[(i, nu + j)] = b[(j, i)];
                }
                rhs[i] = f[i];
            }
        }
        for j in 0..np {
            for i in 0..nu {
                k[(nu + j, i)] = b[(j, i)];
            }
            k[(nu + j, n - 1)] = w[j];
            k[(n - 1, nu + j)] = w[j];
            rhs[nu + j] = g[j];
        }
        let x = k.partial_piv_lu().solve(&rhs);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..nu {
            num += (sol.velocity[(i, prob.n_steps)] - x[i]).powi(2);
            den += x[i].powi(2);
        }
        let rel = (num / den).sqrt();
        assert!(rel < 1e-8, "steady-state gap {rel:.3e}");
    }

    #[test]
    fn stokes_stabilized_boundary_and_mean() {
        let prob = FomProblem::new(
            16, 16, Pair::P1P1, ProblemKind::Stokes, StabKind::EqualOrderPressure,
            0.02, 0.2, 0.05,
        )
        .unwrap();
        let p = Params::new(0.57, 1.78).unwrap();
        let sol = prob.solve(&p).unwrap();
        let ones = Col::from_fn(prob.n_pres(), |_| 1.0);
        let w = sparse::spmv(&prob.x_p, &ones);
        for k in 0..=prob.n_steps {
            for (d, _) in prob.vel.dirichlet_dofs() {
                assert_eq!(sol.velocity[(d, k)], 0.0);
            }
            let mut mean = 0.0;
            let mut pnorm: f64 = 0.0;
            for j in 0..prob.n_pres() {
                mean += w[j] * sol.pressure[(j, k)];
                pnorm = pnorm.max(sol.pressure[(j, k)].abs());
            }
            assert!(mean.abs() < 1e-9 * pnorm.max(1.0), "step {k}: mean {mean:.3e}");
            assert!(sol.velocity.col(k).iter().all(|v| v.is_finite()));
        }
        // Flow actually develops.
        assert!(sol.velocity.col(prob.n_steps).norm_l2() > 1e-3);
    }

    #[test]
    fn stokes_pressure_jump_pair_runs() {
        let prob = FomProblem::new(
            8, 8, Pair::P1P0, ProblemKind::Stokes, StabKind::PressureJump, 0.02, 0.1, 0.05,
        )
        .unwrap();
        let p = Params::new(0.5, 1.2).unwrap();
        let sol = prob.solve(&p).unwrap();
        assert!(sol.velocity.col(prob.n_steps).norm_l2() > 1e-4);
        assert!(sol.pressure.col(prob.n_steps).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn navier_stokes_matches_stokes_at_high_viscosity() {
        let ns = FomProblem::new(
            8, 8, Pair::P2P1, ProblemKind::NavierStokes, StabKind::None, 0.05, 0.25, 0.0,
        )
        .unwrap();
        let st = FomProblem::new(
            8, 8, Pair::P2P1, ProblemKind::Stokes, StabKind::None, 0.05, 0.25, 0.0,
        )
        .unwrap();
        let p = Params::new(50.0, 1.0).unwrap();
        let sol_ns = ns.solve(&p).unwrap();
        let sol_st = st.solve(&p).unwrap();
        let k = ns.n_steps;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..ns.n_vel() {
            num += (sol_ns.velocity[(i, k)] - sol_st.velocity[(i, k)]).powi(2);
            den += sol_st.velocity[(i, k)].powi(2);
        }
        let rel = (num / den).sqrt();
        assert!(rel < 1e-3, "NS vs Stokes gap at nu=50: {rel:.3e}");
    }

    #[test]
    fn navier_stokes_supg_converges() {
        let prob = FomProblem::new(
            8, 8, Pair::P1P1, ProblemKind::NavierStokes, StabKind::Supg, 0.02, 0.06, 0.05,
        )
        .unwrap();
        let p = Params::from_reynolds(100.0, 1.0).unwrap();
        let sol = prob.solve(&p).unwrap();
        assert_eq!(sol.newton_iters.len(), 3);
        for &it in &sol.newton_iters {
            assert!(it <= 12, "newton took {it} iterations");
        }
        // Homogenized velocity vanishes on the whole boundary.
        for (d, _) in prob.vel.dirichlet_dofs() {
            for k in 0..=prob.n_steps {
                assert!(sol.velocity[(d, k)].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_invalid_configurations() {
        let e = FomProblem::new(
            4, 4, Pair::P2P1, ProblemKind::Stokes, StabKind::EqualOrderPressure, 0.02, 0.1, 0.05,
        );
        assert!(e.is_err());
        let e = FomProblem::new(
            4, 4, Pair::P1P1, ProblemKind::Stokes, StabKind::Supg, 0.02, 0.1, 0.05,
        );
        assert!(e.is_err());
        let e = FomProblem::new(
            4, 4, Pair::P1P1, ProblemKind::Stokes, StabKind::PressureJump, 0.02, 0.1, 0.05,
        );
        assert!(e.is_err());
        let e = FomProblem::new(
            4, 4, Pair::P1P1, ProblemKind::Stokes, StabKind::EqualOrderPressure, 0.02, 0.1, 0.0,
        );
        assert!(e.is_err());
        let e = FomProblem::new(
            4, 4, Pair::P1P1, ProblemKind::Stokes, StabKind::EqualOrderPressure, 0.03, 0.1, 0.05,
        );
        assert!(e.is_err(), "t_final must be a multiple of dt");
    }

    #[test]
    fn snapshot_set_shape() {
        let prob = FomProblem::new(
            4, 4, Pair::P1P1, ProblemKind::Stokes, StabKind::EqualOrderPressure, 0.02, 0.1, 0.05,
        )
        .unwrap();
        let params = vec![
            Params::new(0.25, 1.0).unwrap(),
            Params::new(0.75, 2.0).unwrap(),
        ];
        let set = prob.compute_snapshots(&params).unwrap();
        assert_eq!(set.solutions.len(), 2);
        for sol in &set.solutions {
            assert_eq!(sol.velocity.ncols(), prob.n_steps + 1);
            assert_eq!(sol.pressure.nrows(), prob.n_pres());
            // Starts from rest in homogenized variables.
            assert_eq!(sol.velocity.col(0).norm_l2(), 0.0);
        }
    }
}
