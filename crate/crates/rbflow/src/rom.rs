//! Online reduced-order solvers.
//!
//! Three strategies are compared: offline-online stabilization with
//! supremizer enrichment, offline-online stabilization without enrichment,
//! and offline-only stabilization (stabilized snapshots, plain Galerkin
//! online) with enrichment. Truncation to `N` keeps the first `N` velocity,
//! supremizer and pressure modes, so results for different `N` come from
//! nested bases.

use crate::assemble::{assemble_convection, assemble_convection_grad};
use crate::fom::{FomProblem, ProblemKind, StabKind};
use crate::reduction::{hstack, ReducedModel};
use crate::sparse;
use crate::{Error, Params};
use faer::prelude::*;

/// Online stabilization strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Strategy {
    OfflineOnlineWithSup,
    OfflineOnlineNoSup,
    OfflineOnlyWithSup,
}

impl Strategy {
    pub fn all() -> [Strategy; 3] {
        [
            Strategy::OfflineOnlineWithSup,
            Strategy::OfflineOnlineNoSup,
            Strategy::OfflineOnlyWithSup,
        ]
    }

    pub fn with_supremizers(self) -> bool {
        !matches!(self, Strategy::OfflineOnlineNoSup)
    }

    pub fn online_stabilization(self) -> bool {
        !matches!(self, Strategy::OfflineOnlyWithSup)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::OfflineOnlineWithSup => "offline-online-sup",
            Strategy::OfflineOnlineNoSup => "offline-online-nosup",
            Strategy::OfflineOnlyWithSup => "offline-only-sup",
        }
    }

    pub fn parse(s: &str) -> Result<Self, Error> {
        match s {
            "offline-online-sup" => Ok(Strategy::OfflineOnlineWithSup),
            "offline-online-nosup" => Ok(Strategy::OfflineOnlineNoSup),
            "offline-only-sup" => Ok(Strategy::OfflineOnlyWithSup),
            _ => Err(Error::Config(format!("unknown strategy '{s}'"))),
        }
    }
}

/// How the reduced Navier-Stokes convection term is evaluated online.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum ConvMode {
    /// Precomputed third-order coefficient tensor.
    #[default]
    Tensor,
    /// Full-order assembly at the reconstructed field, projected each step.
    ProjectEachStep,
}

impl ConvMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ConvMode::Tensor => "tensor",
            ConvMode::ProjectEachStep => "project-each-step",
        }
    }

    pub fn parse(s: &str) -> Result<Self, Error> {
        match s {
            "tensor" => Ok(ConvMode::Tensor),
            "project-each-step" => Ok(ConvMode::ProjectEachStep),
            _ => Err(Error::Config(format!("unknown convection mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RomOptions {
    pub strategy: Strategy,
    /// Modes per block; the velocity space gets `n` POD modes plus `n`
    /// supremizers when the strategy enriches.
    pub n: usize,
    pub conv_mode: ConvMode,
}

/// Reduced trajectory in basis coordinates.
#[derive(Debug, Clone)]
pub struct RomSolution {
    pub coeff_u: Mat<f64>,
    pub coeff_p: Mat<f64>,
    /// Columns of `[z_u | z_s]` the velocity coefficients refer to.
    pub indices: Vec<usize>,
    pub n_p_used: usize,
    pub newton_iters: Vec<usize>,
}

/// Homogenized full-order velocity trajectory of a reduced solution.
pub fn reconstruct_velocity(model: &ReducedModel, sol: &RomSolution) -> Mat<f64> {
    let z_us = model.z_us();
    let z_sel = Mat::from_fn(z_us.nrows(), sol.indices.len(), |i, j| z_us[(i, sol.indices[j])]);
    &z_sel * &sol.coeff_u
}

/// Full-order pressure trajectory of a reduced solution.
pub fn reconstruct_pressure(model: &ReducedModel, sol: &RomSolution) -> Mat<f64> {
    let z_sel =
        Mat::from_fn(model.z_p.nrows(), sol.n_p_used, |i, j| model.z_p[(i, j)]);
    &z_sel * &sol.coeff_p
}

fn sel_mat(m: &Mat<f64>, rows: &[usize], cols: &[usize]) -> Mat<f64> {
    Mat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Stabilization blocks in reduced coordinates. Trial-side velocity index
/// runs over the truncated basis plus the lifting (one extra column).
struct StabRed {
    mt: Mat<f64>,
    be: Mat<f64>,
    s: Mat<f64>,
    m_uv: Option<Mat<f64>>,
    k_uv: Option<Mat<f64>>,
    g_pv: Option<Mat<f64>>,
}

pub fn solve_rom(model: &ReducedModel, p: &Params, opts: &RomOptions) -> Result<RomSolution, Error> {
    if opts.n == 0 {
        return Err(Error::InvalidParameter("reduced size must be at least 1".into()));
    }
    if model.n_u == 0 {
        return Err(Error::InvalidParameter("model has an empty velocity basis".into()));
    }
    let idx = model.velocity_indices(opts.n, opts.strategy.with_supremizers());
    let pidx: Vec<usize> = (0..opts.n.min(model.n_p)).collect();
    match model.problem {
        ProblemKind::Stokes => rom_stokes(model, p, opts, &idx, &pidx),
        ProblemKind::NavierStokes => rom_navier_stokes(model, p, opts, &idx, &pidx),
    }
}

/// Positions in the extended trial basis `[z_u | z_s | lifting]` matching the
/// truncated indices, with the lifting column last.
fn extended_positions(model: &ReducedModel, idx: &[usize]) -> Vec<usize> {
    let mut ext = idx.to_vec();
    ext.push(model.n_u + model.n_s);
    ext
}

/// Parameter-affine stabilization blocks in reduced coordinates, or `None`
/// when the strategy or the model carries none.
fn fixed_stab_red(
    model: &ReducedModel,
    p: &Params,
    idx: &[usize],
    pidx: &[usize],
) -> Option<StabRed> {
    if model.stab == StabKind::None || model.stab == StabKind::Supg {
        return None;
    }
    let np = pidx.len();
    let nve = idx.len() + 1;
    let ext = extended_positions(model, idx);
    let mt = match &model.stab_m_tilde {
        Some(m) => sel_mat(m, pidx, &ext),
        None => Mat::zeros(np, nve),
    };
    let be = match &model.stab_b_extra {
        Some(b) => b.select(pidx, &ext).assemble(p),
        None => Mat::zeros(np, nve),
    };
    let s = match &model.stab_s {
        Some(s) => sel_mat(s, pidx, pidx),
        None => Mat::zeros(np, np),
    };
    Some(StabRed { mt, be, s, m_uv: None, k_uv: None, g_pv: None })
}

fn rom_stokes(
    model: &ReducedModel,
    p: &Params,
    opts: &RomOptions,
    idx: &[usize],
    pidx: &[usize],
) -> Result<RomSolution, Error> {
    let (nv, np) = (idx.len(), pidx.len());
    let n = nv + np;
    let idt = 1.0 / model.dt;
    let m = model.mass.select(idx, idx).assemble(p);
    let a = model.diffusion.select(idx, idx).assemble(p);
    let b = model.divergence.select(pidx, idx).assemble(p);
    let f = model.rhs_f.select(idx).assemble(p);
    let g = model.rhs_g.select(pidx).assemble(p);
    let st = if opts.strategy.online_stabilization() {
        fixed_stab_red(model, p, idx, pidx)
    } else {
        None
    };

    let mut k = Mat::zeros(n, n);
    for i in 0..nv {
        for j in 0..nv {
            k[(i, j)] = idt * m[(i, j)] + a[(i, j)];
        }
        for q in 0..np {
            k[(i, nv + q)] = b[(q, i)];
            k[(nv + q, i)] = b[(q, i)];
        }
    }
    if let Some(st) = &st {
        // The homogenized Stokes unknown carries no lifting part, so the
        // extended trial column (last) stays unused.
        for q in 0..np {
            for j in 0..nv {
                k[(nv + q, j)] -= idt * st.mt[(q, j)] + st.be[(q, j)];
            }
            for r in 0..np {
                k[(nv + q, nv + r)] -= st.s[(q, r)];
            }
        }
    }
    let lu = k.partial_piv_lu();

    let mut coeff_u = Mat::zeros(nv, model.n_steps + 1);
    let mut coeff_p = Mat::zeros(np, model.n_steps + 1);
    let mut c_prev: Col<f64> = Col::zeros(nv);
    for step in 1..=model.n_steps {
        let mut rhs = Col::zeros(n);
        let m_cp = &m * &c_prev;
        for i in 0..nv {
            rhs[i] = f[i] + idt * m_cp[i];
        }
        for q in 0..np {
            rhs[nv + q] = g[q];
        }
        if let Some(st) = &st {
            for q in 0..np {
                let mut acc = 0.0;
                for j in 0..nv {
                    acc += st.mt[(q, j)] * c_prev[j];
                }
                rhs[nv + q] -= idt * acc;
            }
        }
        let mut x = lu.solve(&rhs);
        // One step of iterative refinement; the reduced matrix can be badly
        // conditioned near full basis size.
        let resid = &rhs - &k * &x;
        x += lu.solve(&resid);
        for i in 0..x.nrows() {
            if !x[i].is_finite() {
                return Err(Error::SolverFailure {
                    time_index: step,
                    detail: "reduced solve produced a non-finite value".into(),
                });
            }
        }
        for i in 0..nv {
            coeff_u[(i, step)] = x[i];
        }
        for q in 0..np {
            coeff_p[(q, step)] = x[nv + q];
        }
        c_prev = Col::from_fn(nv, |i| x[i]);
    }
    Ok(RomSolution {
        coeff_u,
        coeff_p,
        indices: idx.to_vec(),
        n_p_used: np,
        newton_iters: Vec::new(),
    })
}

/// Convection data at the truncated basis: summed coefficient tensor (tensor
/// mode) or the machinery for per-step projection.
enum ConvEval<'a> {
    Tensor(Vec<Mat<f64>>),
    Project { fom: &'a FomProblem, z_sel: &'a Mat<f64>, z_e_sel: &'a Mat<f64> },
}

impl ConvEval<'_> {
    /// Convection residual `Z^T c(w, w, .)` and Jacobian w.r.t. the reduced
    /// coefficients, at the extended coefficient vector `chat`.
    fn eval(&self, p: &Params, chat: &Col<f64>) -> Result<(Col<f64>, Mat<f64>), Error> {
        let ne = chat.nrows();
        let nv = ne - 1;
        match self {
            ConvEval::Tensor(tens) => {
                let mut cmat: Mat<f64> = Mat::zeros(nv, ne);
                for (m, t) in tens.iter().enumerate() {
                    let cm = chat[m];
                    if cm == 0.0 {
                        continue;
                    }
                    for j in 0..ne {
                        for i in 0..nv {
                            cmat[(i, j)] += cm * t[(i, j)];
                        }
                    }
                }
                let r = &cmat * chat;
                let mut jac = Mat::zeros(nv, nv);
                for j in 0..nv {
                    let dj = &tens[j] * chat;
                    for i in 0..nv {
                        jac[(i, j)] = cmat[(i, j)] + dj[i];
                    }
                }
                Ok((r, jac))
            }
            ConvEval::Project { fom, z_sel, z_e_sel } => {
                let w = *z_e_sel * chat;
                let c1 = assemble_convection(&fom.vel, &fom.mesh, p, &w)?;
                let c2 = assemble_convection_grad(&fom.vel, &fom.mesh, p, &w)?;
                let c1w = sparse::spmv(&c1, &w);
                let r = z_sel.transpose() * &c1w;
                let jac = sparse::project(z_sel.as_ref(), &c1, z_sel.as_ref())
                    + sparse::project(z_sel.as_ref(), &c2, z_sel.as_ref());
                Ok((r, jac))
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn rom_navier_stokes(
    model: &ReducedModel,
    p: &Params,
    opts: &RomOptions,
    idx: &[usize],
    pidx: &[usize],
) -> Result<RomSolution, Error> {
    let (nv, np) = (idx.len(), pidx.len());
    let n = nv + np;
    let ne = nv + 1;
    let idt = 1.0 / model.dt;
    let m = model.mass.select(idx, idx).assemble(p);
    let a = model.diffusion.select(idx, idx).assemble(p);
    let b = model.divergence.select(pidx, idx).assemble(p);
    let f = model.rhs_f.select(idx).assemble(p);
    let g = model.rhs_g.select(pidx).assemble(p);

    let online_supg = opts.strategy.online_stabilization() && model.stab == StabKind::Supg;
    let need_fom = online_supg || opts.conv_mode == ConvMode::ProjectEachStep;
    let fom = if need_fom {
        Some(FomProblem::new(
            model.nx,
            model.ny,
            model.pair,
            model.problem,
            model.stab,
            model.dt,
            model.dt * model.n_steps as f64,
            model.delta,
        )?)
    } else {
        None
    };

    // Truncated bases in full-order coordinates.
    let z_us = model.z_us();
    let z_sel = Mat::from_fn(z_us.nrows(), nv, |i, j| z_us[(i, idx[j])]);
    let z_e_sel = hstack(z_sel.as_ref(), model.lifting.as_ref().as_2d());
    let zp_sel = Mat::from_fn(model.z_p.nrows(), np, |i, j| model.z_p[(i, pidx[j])]);

    let conv = match opts.conv_mode {
        ConvMode::Tensor => {
            let data = model.conv.as_ref().ok_or_else(|| {
                Error::Config("model carries no convection tensor".into())
            })?;
            let ext = extended_positions(model, idx);
            let mut tens: Vec<Mat<f64>> = vec![Mat::zeros(nv, ne); ne];
            for (t, mats) in &data.terms {
                let theta = t.eval(p);
                for (ml, &mg) in ext.iter().enumerate() {
                    let msel = sel_mat(&mats[mg], idx, &ext);
                    for j in 0..ne {
                        for i in 0..nv {
                            tens[ml][(i, j)] += theta * msel[(i, j)];
                        }
                    }
                }
            }
            ConvEval::Tensor(tens)
        }
        ConvMode::ProjectEachStep => ConvEval::Project {
            fom: fom.as_ref().unwrap(),
            z_sel: &z_sel,
            z_e_sel: &z_e_sel,
        },
    };

    // Parameter-affine stabilization blocks (non-streamline variants).
    let fixed_st = if opts.strategy.online_stabilization() && !online_supg {
        fixed_stab_red(model, p, idx, pidx)
    } else {
        None
    };
    let supg_red = |chat: &Col<f64>| -> Result<StabRed, Error> {
        let fom = fom.as_ref().unwrap();
        let w = &z_e_sel * chat;
        let st = fom.stab_blocks(p, Some(&w))?.unwrap();
        Ok(StabRed {
            mt: sparse::project(zp_sel.as_ref(), &st.m_tilde, z_e_sel.as_ref()),
            be: sparse::project(zp_sel.as_ref(), &st.b_extra, z_e_sel.as_ref()),
            s: sparse::project(zp_sel.as_ref(), &st.s, zp_sel.as_ref()),
            m_uv: st
                .m_uv
                .as_ref()
                .map(|m| sparse::project(z_sel.as_ref(), m, z_e_sel.as_ref())),
            k_uv: st
                .k_uv
                .as_ref()
                .map(|m| sparse::project(z_sel.as_ref(), m, z_e_sel.as_ref())),
            g_pv: st
                .g_pv
                .as_ref()
                .map(|m| sparse::project(z_sel.as_ref(), m, zp_sel.as_ref())),
        })
    };

    // Residual and convection/stabilization data at one candidate state.
    struct Point {
        r: Col<f64>,
        conv_jac: Mat<f64>,
        st: Option<StabRed>,
    }
    let eval = |c: &Col<f64>, d: &Col<f64>, c_prev: &Col<f64>| -> Result<Point, Error> {
        let chat = Col::from_fn(ne, |i| if i < nv { c[i] } else { 1.0 });
        let (conv_r, conv_jac) = conv.eval(p, &chat)?;
        let st = if online_supg {
            Some(supg_red(&chat)?)
        } else {
            fixed_st.as_ref().map(|s| StabRed {
                mt: s.mt.clone(),
                be: s.be.clone(),
                s: s.s.clone(),
                m_uv: None,
                k_uv: None,
                g_pv: None,
            })
        };
        let mut r = Col::zeros(n);
        let dc = Col::from_fn(nv, |i| c[i] - c_prev[i]);
        let m_dc = &m * &dc;
        let a_c = &a * c;
        for i in 0..nv {
            r[i] = idt * m_dc[i] + a_c[i] - f[i] + conv_r[i];
            for q in 0..np {
                r[i] += b[(q, i)] * d[q];
            }
        }
        let b_c = &b * c;
        for q in 0..np {
            r[nv + q] = b_c[q] - g[q];
        }
        if let Some(st) = &st {
            let dchat = Col::from_fn(ne, |i| if i < nv { dc[i] } else { 0.0 });
            let mt_dc = &st.mt * &dchat;
            let be_c = &st.be * &chat;
            let s_d = &st.s * d;
            for q in 0..np {
                r[nv + q] -= idt * mt_dc[q] + be_c[q] + s_d[q];
            }
            if let Some(m_uv) = &st.m_uv {
                let v = m_uv * &dchat;
                for i in 0..nv {
                    r[i] += idt * v[i];
                }
            }
            if let Some(k_uv) = &st.k_uv {
                let v = k_uv * &chat;
                for i in 0..nv {
                    r[i] += v[i];
                }
            }
            if let Some(g_pv) = &st.g_pv {
                let v = g_pv * d;
                for i in 0..nv {
                    r[i] += v[i];
                }
            }
        }
        Ok(Point { r, conv_jac, st })
    };

    let mut coeff_u = Mat::zeros(nv, model.n_steps + 1);
    let mut coeff_p = Mat::zeros(np, model.n_steps + 1);
    let mut newton_iters = Vec::with_capacity(model.n_steps);
    let mut c: Col<f64> = Col::zeros(nv);
    let mut d: Col<f64> = Col::zeros(np);
    for step in 1..=model.n_steps {
        let c_prev = c.clone();
        let mut r0_norm = f64::NAN;
        let mut converged = false;
        let mut iters = 0;
        for it in 0..25 {
            iters = it + 1;
            let point = eval(&c, &d, &c_prev)?;
            let r_norm = point.r.norm_l2();
            if !r_norm.is_finite() {
                return Err(Error::SolverFailure {
                    time_index: step,
                    detail: "reduced residual is not finite".into(),
                });
            }
            if it == 0 {
                r0_norm = r_norm;
            }
            if r_norm <= 1e-8 || r_norm <= 1e-10 * r0_norm {
                converged = true;
                break;
            }
            // Jacobian at the current point; streamline blocks stay frozen.
            let mut jac = Mat::zeros(n, n);
            for i in 0..nv {
                for j in 0..nv {
                    jac[(i, j)] = idt * m[(i, j)] + a[(i, j)] + point.conv_jac[(i, j)];
                }
                for q in 0..np {
                    jac[(i, nv + q)] = b[(q, i)];
                    jac[(nv + q, i)] = b[(q, i)];
                }
            }
            if let Some(st) = &point.st {
                for q in 0..np {
                    for j in 0..nv {
                        jac[(nv + q, j)] -= idt * st.mt[(q, j)] + st.be[(q, j)];
                    }
                    for rr in 0..np {
                        jac[(nv + q, nv + rr)] -= st.s[(q, rr)];
                    }
                }
                if let Some(m_uv) = &st.m_uv {
                    for i in 0..nv {
                        for j in 0..nv {
                            jac[(i, j)] += idt * m_uv[(i, j)];
                        }
                    }
                }
                if let Some(k_uv) = &st.k_uv {
                    for i in 0..nv {
                        for j in 0..nv {
                            jac[(i, j)] += k_uv[(i, j)];
                        }
                    }
                }
                if let Some(g_pv) = &st.g_pv {
                    for i in 0..nv {
                        for q in 0..np {
                            jac[(i, nv + q)] += g_pv[(i, q)];
                        }
                    }
                }
            }
            let neg_r = Col::from_fn(n, |i| -point.r[i]);
            let delta = jac.partial_piv_lu().solve(&neg_r);

            let mut alpha = 1.0;
            for _ in 0..=5 {
                let c_try = Col::from_fn(nv, |i| c[i] + alpha * delta[i]);
                let d_try = Col::from_fn(np, |q| d[q] + alpha * delta[nv + q]);
                let r_try = eval(&c_try, &d_try, &c_prev)?.r.norm_l2();
                if r_try < r_norm || alpha <= 1.0 / 32.0 {
                    c = c_try;
                    d = d_try;
                    break;
                }
                alpha /= 2.0;
            }
        }
        if !converged {
            let r = eval(&c, &d, &c_prev)?.r.norm_l2();
            return Err(Error::NewtonDivergence { step, residual: r, iters });
        }
        newton_iters.push(iters - 1);
        for i in 0..nv {
            coeff_u[(i, step)] = c[i];
        }
        for q in 0..np {
            coeff_p[(q, step)] = d[q];
        }
    }
    Ok(RomSolution {
        coeff_u,
        coeff_p,
        indices: idx.to_vec(),
        n_p_used: np,
        newton_iters,
    })
}
