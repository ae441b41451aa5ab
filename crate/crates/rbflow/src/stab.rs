//! Residual-based and jump stabilization terms.
//!
//! All terms carry the per-element weight `delta * h_K^2` (or `delta * h_e`
//! per edge for the pressure jump) and use plain physical gradients on the
//! reference domain, with the physical viscosity multiplying the Laplacian.

use crate::assemble::field_value;
use crate::mesh::Mesh;
use crate::quad::triangle_rule;
use crate::space::{basis_ref_grads, basis_ref_hessians, basis_values, ElemGeom, FeSpace};
use crate::sparse::{CooMat, SpMat};
use crate::{Error, Params};
use faer::Col;

/// Stabilization blocks added to the time-stepping system.
///
/// Shapes: `m_tilde` and `b_extra` are pressure x velocity, `s` is pressure x
/// pressure. The velocity-test blocks are present only for the streamline
/// (SUPG) variant: `m_uv` and `k_uv` are velocity x velocity, `g_pv` is
/// velocity x pressure.
#[derive(Debug, Clone)]
pub struct StabMatrices {
    /// `(u, grad q)` weighted terms, multiplies `du/dt`.
    pub m_tilde: SpMat,
    /// `(-nu lap u [+ w . grad u], grad q)` weighted terms.
    pub b_extra: SpMat,
    /// `(grad p, grad q)` weighted terms.
    pub s: SpMat,
    pub m_uv: Option<SpMat>,
    pub k_uv: Option<SpMat>,
    pub g_pv: Option<SpMat>,
}

fn require_equal_order(vel: &FeSpace, pres: &FeSpace, what: &str) -> Result<(), Error> {
    if !vel.kind.is_vector() || pres.kind.is_vector() {
        return Err(Error::SpaceMismatch(format!(
            "{what} takes a velocity space and a pressure space"
        )));
    }
    if vel.kind.order() != pres.kind.order() {
        return Err(Error::SpaceMismatch(format!(
            "{what} requires an equal-order velocity/pressure pair"
        )));
    }
    Ok(())
}

/// Pressure-gradient stabilization for equal-order pairs.
///
/// Blocks per element `K`, each weighted by `delta * h_K^2`:
/// `m_tilde = int (u, grad q)`, `b_extra = int (-nu lap u, grad q)` and
/// `s = int (grad p, grad q)`. The `b_extra` block vanishes identically for
/// a P1 velocity.
pub fn assemble_franca_hughes(
    vel: &FeSpace,
    pres: &FeSpace,
    mesh: &Mesh,
    p: &Params,
    delta: f64,
) -> Result<StabMatrices, Error> {
    require_equal_order(vel, pres, "assemble_franca_hughes")?;
    if delta <= 0.0 {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let k = vel.kind.order();
    let rule = triangle_rule(2 * k + 1);
    let nu = p.nu;
    let mut m_tilde = CooMat::new(pres.dof_count, vel.dof_count);
    let mut b_extra = CooMat::new(pres.dof_count, vel.dof_count);
    let mut s = CooMat::new(pres.dof_count, pres.dof_count);
    for t in 0..mesh.n_triangles() {
        let geom = ElemGeom::new(mesh, t);
        let weight = delta * mesh.h_k[t] * mesh.h_k[t];
        let vdofs = vel.scalar_dofs(t);
        let pdofs = pres.scalar_dofs(t);
        // Physical Laplacians of the velocity basis, constant per element.
        let laps: Vec<f64> = basis_ref_hessians(k)
            .into_iter()
            .map(|h| {
                let ph = geom.push_hessian(h);
                ph[0][0] + ph[1][1]
            })
            .collect();
        for &(qp, wq) in &rule {
            let vals = basis_values(k, qp);
            let grads: Vec<[f64; 2]> = basis_ref_grads(k, qp)
                .into_iter()
                .map(|g| geom.push_grad(g))
                .collect();
            let scale = weight * geom.det.abs() * wq;
            for (kk, &pk) in pdofs.iter().enumerate() {
                let gq = grads[kk];
                for (jj, &vj) in vdofs.iter().enumerate() {
                    for c in 0..2 {
                        m_tilde.push(pk, vel.dof(vj, c), scale * vals[jj] * gq[c]);
                        b_extra.push(pk, vel.dof(vj, c), scale * (-nu * laps[jj]) * gq[c]);
                    }
                }
                for (ll, &pl) in pdofs.iter().enumerate() {
                    s.push(pk, pl, scale * (grads[ll][0] * gq[0] + grads[ll][1] * gq[1]));
                }
            }
        }
    }
    Ok(StabMatrices {
        m_tilde: m_tilde.into_csc(),
        b_extra: b_extra.into_csc(),
        s: s.into_csc(),
        m_uv: None,
        k_uv: None,
        g_pv: None,
    })
}

/// Interior pressure-jump stabilization for the P1/P0 pair:
/// `S_kl = delta * sum_e h_e int_e [p][q]`, which reduces to
/// `delta * h_e^2 [[1, -1], [-1, 1]]` per interior edge.
pub fn assemble_pressure_jump(pres: &FeSpace, mesh: &Mesh, delta: f64) -> Result<SpMat, Error> {
    if pres.kind.order() != 0 || pres.kind.is_vector() {
        return Err(Error::SpaceMismatch(
            "assemble_pressure_jump requires a P0 pressure space".into(),
        ));
    }
    if delta <= 0.0 {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let mut s = CooMat::new(pres.dof_count, pres.dof_count);
    for e in &mesh.edges {
        let Some(tr) = e.tri_right else { continue };
        let tl = e.tri_left;
        let [a, b] = e.vertices;
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        let h_e = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
        let w = delta * h_e * h_e;
        s.push(tl, tl, w);
        s.push(tr, tr, w);
        s.push(tl, tr, -w);
        s.push(tr, tl, -w);
    }
    Ok(s.into_csc())
}

/// Streamline-diffusion stabilization around a frozen transport field `w`.
///
/// In addition to the pressure-test blocks of the equal-order variant (with
/// the convective residual `w . grad u` added to `b_extra`), this produces
/// velocity-test blocks against `w . grad v`:
/// `m_uv = int (u, w . grad v)`, `k_uv = int (-nu lap u + w . grad u,
/// w . grad v)` and `g_pv = int (grad p, w . grad v)`, each weighted by
/// `delta * h_K^2`.
pub fn assemble_supg(
    vel: &FeSpace,
    pres: &FeSpace,
    mesh: &Mesh,
    p: &Params,
    delta: f64,
    w: &Col<f64>,
) -> Result<StabMatrices, Error> {
    require_equal_order(vel, pres, "assemble_supg")?;
    if delta <= 0.0 {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    if w.nrows() != vel.dof_count {
        return Err(Error::DimensionMismatch(format!(
            "transport field has {} entries, expected {}",
            w.nrows(),
            vel.dof_count
        )));
    }
    let k = vel.kind.order();
    let rule = triangle_rule(4 * k.max(1));
    let nu = p.nu;
    let mut m_tilde = CooMat::new(pres.dof_count, vel.dof_count);
    let mut b_extra = CooMat::new(pres.dof_count, vel.dof_count);
    let mut s = CooMat::new(pres.dof_count, pres.dof_count);
    let mut m_uv = CooMat::new(vel.dof_count, vel.dof_count);
    let mut k_uv = CooMat::new(vel.dof_count, vel.dof_count);
    let mut g_pv = CooMat::new(vel.dof_count, pres.dof_count);
    for t in 0..mesh.n_triangles() {
        let geom = ElemGeom::new(mesh, t);
        let weight = delta * mesh.h_k[t] * mesh.h_k[t];
        let vdofs = vel.scalar_dofs(t);
        let pdofs = pres.scalar_dofs(t);
        let nl = vdofs.len();
        let laps: Vec<f64> = basis_ref_hessians(k)
            .into_iter()
            .map(|h| {
                let ph = geom.push_hessian(h);
                ph[0][0] + ph[1][1]
            })
            .collect();
        for &(qp, wq) in &rule {
            let vals = basis_values(k, qp);
            let grads: Vec<[f64; 2]> = basis_ref_grads(k, qp)
                .into_iter()
                .map(|g| geom.push_grad(g))
                .collect();
            let wv = field_value(vel, vdofs, w, &vals);
            let scale = weight * geom.det.abs() * wq;
            // Streamline derivative of each scalar basis function.
            let sd: Vec<f64> = grads.iter().map(|g| wv[0] * g[0] + wv[1] * g[1]).collect();
            // Momentum residual factor of each trial scalar basis function.
            let res: Vec<f64> = (0..nl).map(|j| -nu * laps[j] + sd[j]).collect();
            for (kk, &pk) in pdofs.iter().enumerate() {
                let gq = grads[kk];
                for (jj, &vj) in vdofs.iter().enumerate() {
                    for c in 0..2 {
                        m_tilde.push(pk, vel.dof(vj, c), scale * vals[jj] * gq[c]);
                        b_extra.push(pk, vel.dof(vj, c), scale * res[jj] * gq[c]);
                    }
                }
                for (ll, &pl) in pdofs.iter().enumerate() {
                    s.push(pk, pl, scale * (grads[ll][0] * gq[0] + grads[ll][1] * gq[1]));
                }
            }
            for i in 0..nl {
                if sd[i] == 0.0 {
                    continue;
                }
                for j in 0..nl {
                    for c in 0..2 {
                        m_uv.push(vel.dof(vdofs[i], c), vel.dof(vdofs[j], c), scale * vals[j] * sd[i]);
                        k_uv.push(vel.dof(vdofs[i], c), vel.dof(vdofs[j], c), scale * res[j] * sd[i]);
                    }
                }
                for (kk, &pk) in pdofs.iter().enumerate() {
                    for c in 0..2 {
                        g_pv.push(vel.dof(vdofs[i], c), pk, scale * grads[kk][c] * sd[i]);
                    }
                }
            }
        }
    }
    Ok(StabMatrices {
        m_tilde: m_tilde.into_csc(),
        b_extra: b_extra.into_csc(),
        s: s.into_csc(),
        m_uv: Some(m_uv.into_csc()),
        k_uv: Some(k_uv.into_csc()),
        g_pv: Some(g_pv.into_csc()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assemble::diffusion_matrix;
    use crate::mesh::build_structured_mesh;
    use crate::space::SpaceKind;
    use crate::sparse::{self, to_dense};

    #[test]
    fn fh_pressure_block_is_scaled_stiffness() {
        // Uniform mesh: all h_K equal, so s = delta * h_K^2 * stiffness.
        let mesh = build_structured_mesh(3, 3);
        let vel = FeSpace::new(SpaceKind::VectorP1, &mesh);
        let pres = FeSpace::new(SpaceKind::ScalarP1, &mesh);
        let p = Params::new(1.0, 1.0).unwrap();
        let st = assemble_franca_hughes(&vel, &pres, &mesh, &p, 0.05).unwrap();
        let stiff = diffusion_matrix(&pres, &mesh, [1.0, 1.0]);
        let scaled = sparse::linear_combination(&[(0.05 * mesh.h * mesh.h, &stiff)]);
        assert!(sparse::rel_frobenius_gap(&st.s, &scaled) < 1e-13);
    }

    #[test]
    fn fh_laplacian_block_vanishes_for_p1() {
        let mesh = build_structured_mesh(3, 3);
        let vel = FeSpace::new(SpaceKind::VectorP1, &mesh);
        let pres = FeSpace::new(SpaceKind::ScalarP1, &mesh);
        let p = Params::new(0.3, 1.4).unwrap();
        let st = assemble_franca_hughes(&vel, &pres, &mesh, &p, 0.05).unwrap();
        assert!(to_dense(&st.b_extra).norm_max() < 1e-15);
        assert!(st.m_uv.is_none() && st.k_uv.is_none() && st.g_pv.is_none());
    }

    #[test]
    fn fh_laplacian_block_linear_in_nu_for_p2() {
        let mesh = build_structured_mesh(3, 3);
        let vel = FeSpace::new(SpaceKind::VectorP2, &mesh);
        let pres = FeSpace::new(SpaceKind::ScalarP2, &mesh);
        let p1 = Params::new(1.0, 1.3).unwrap();
        let p2 = Params::new(2.5, 1.3).unwrap();
        let s1 = assemble_franca_hughes(&vel, &pres, &mesh, &p1, 0.05).unwrap();
        let s2 = assemble_franca_hughes(&vel, &pres, &mesh, &p2, 0.05).unwrap();
        assert!(to_dense(&s1.b_extra).norm_max() > 0.0);
        let gap = sparse::rel_frobenius_gap(
            &s2.b_extra,
            &sparse::linear_combination(&[(2.5, &s1.b_extra)]),
        );
        assert!(gap < 1e-13);
        // m_tilde and s do not depend on the parameter.
        assert!(sparse::rel_frobenius_gap(&s1.m_tilde, &s2.m_tilde) < 1e-15);
        assert!(sparse::rel_frobenius_gap(&s1.s, &s2.s) < 1e-15);
    }

    #[test]
    fn fh_time_block_value() {
        // q = x, u = (x, 0): sum_K delta h_K^2 int x * dq/dx = delta h^2 / 2
        // on a uniform mesh.
        let mesh = build_structured_mesh(4, 4);
        let vel = FeSpace::new(SpaceKind::VectorP1, &mesh);
        let pres = FeSpace::new(SpaceKind::ScalarP1, &mesh);
        let p = Params::new(1.0, 1.0).unwrap();
        let st = assemble_franca_hughes(&vel, &pres, &mesh, &p, 0.05).unwrap();
        let mut u = Col::zeros(vel.dof_count);
        let mut q = Col::zeros(pres.dof_count);
        for (sd, &xy) in vel.dof_coords.iter().enumerate() {
            u[vel.dof(sd, 0)] = xy[0];
        }
        for (sd, &xy) in pres.dof_coords.iter().enumerate() {
            q[sd] = xy[0];
        }
        let val = sparse::quad_form(&q, &st.m_tilde, &u);
        let expect = 0.05 * mesh.h * mesh.h * 0.5;
        assert!((val - expect).abs() < 1e-14, "{val} vs {expect}");
    }

    #[test]
    fn fh_rejects_mixed_order_pair() {
        let mesh = build_structured_mesh(2, 2);
        let vel = FeSpace::new(SpaceKind::VectorP2, &mesh);
        let pres = FeSpace::new(SpaceKind::ScalarP1, &mesh);
        let p = Params::new(1.0, 1.0).unwrap();
        assert!(assemble_franca_hughes(&vel, &pres, &mesh, &p, 0.05).is_err());
        let pres2 = FeSpace::new(SpaceKind::ScalarP2, &mesh);
        assert!(assemble_franca_hughes(&vel, &pres2, &mesh, &p, -0.05).is_err());
    }

    #[test]
    fn pressure_jump_single_interior_edge() {
        // 1x1 mesh has one interior (diagonal) edge of length sqrt(2):
        // delta * h_e^2 = 0.05 * 2 = 0.1.
        let mesh = build_structured_mesh(1, 1);
        let pres = FeSpace::new(SpaceKind::ScalarP0, &mesh);
        let s = assemble_pressure_jump(&pres, &mesh, 0.05).unwrap();
        let d = to_dense(&s);
        assert!((d[(0, 0)] - 0.1).abs() < 1e-15);
        assert!((d[(1, 1)] - 0.1).abs() < 1e-15);
        assert!((d[(0, 1)] + 0.1).abs() < 1e-15);
        assert!((d[(1, 0)] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn pressure_jump_kernel_is_constants() {
        let mesh = build_structured_mesh(4, 3);
        let pres = FeSpace::new(SpaceKind::ScalarP0, &mesh);
        let s = assemble_pressure_jump(&pres, &mesh, 0.05).unwrap();
        let ones = Col::from_fn(pres.dof_count, |_| 1.0);
        assert!(sparse::spmv(&s, &ones).norm_max() < 1e-14);
        // Symmetric positive semidefinite.
        let d = to_dense(&s);
        assert!((&d - d.transpose()).norm_max() < 1e-15);
    }

    #[test]
    fn pressure_jump_rejects_non_p0() {
        let mesh = build_structured_mesh(2, 2);
        let pres = FeSpace::new(SpaceKind::ScalarP1, &mesh);
        assert!(assemble_pressure_jump(&pres, &mesh, 0.05).is_err());
    }

    #[test]
    fn supg_zero_transport_matches_equal_order() {
        let mesh = build_structured_mesh(3, 3);
        let vel = FeSpace::new(SpaceKind::VectorP1, &mesh);
        let pres = FeSpace::new(SpaceKind::ScalarP1, &mesh);
        let p = Params::new(0.01, 1.5).unwrap();
        let w = Col::zeros(vel.dof_count);
        let su = assemble_supg(&vel, &pres, &mesh, &p, 0.05, &w).unwrap();
        let fh = assemble_franca_hughes(&vel, &pres, &mesh, &p, 0.05).unwrap();
        assert!(sparse::rel_frobenius_gap(&su.m_tilde, &fh.m_tilde) < 1e-13);
        assert!(sparse::rel_frobenius_gap(&su.s, &fh.s) < 1e-13);
        assert_eq!(su.b_extra.compute_nnz(), 0);
        assert_eq!(su.m_uv.unwrap().compute_nnz(), 0);
        assert_eq!(su.k_uv.unwrap().compute_nnz(), 0);
        assert_eq!(su.g_pv.unwrap().compute_nnz(), 0);
    }

    #[test]
    fn supg_velocity_block_value() {
        // Constant w = (1,0): m_uv entry against u = (x,0), v = (x,0) is
        // delta h^2 int x * d(x)/dx = delta h^2 / 2 on a uniform mesh.
        let mesh = build_structured_mesh(4, 4);
        let vel = FeSpace::new(SpaceKind::VectorP1, &mesh);
        let pres = FeSpace::new(SpaceKind::ScalarP1, &mesh);
        let p = Params::new(1.0, 1.0).unwrap();
        let mut w = Col::zeros(vel.dof_count);
        let mut u = Col::zeros(vel.dof_count);
        for (sd, &xy) in vel.dof_coords.iter().enumerate() {
            w[vel.dof(sd, 0)] = 1.0;
            u[vel.dof(sd, 0)] = xy[0];
        }
        let st = assemble_supg(&vel, &pres, &mesh, &p, 0.05, &w).unwrap();
        let m_uv = st.m_uv.unwrap();
        let val = sparse::quad_form(&u, &m_uv, &u);
        let expect = 0.05 * mesh.h * mesh.h * 0.5;
        assert!((val - expect).abs() < 1e-14, "{val} vs {expect}");
        // b_extra for P1 velocity reduces to the convective part
        // (w . grad u, grad q), same entries as k_uv replaced test: check
        // against m_tilde structure by value on the same fields.
        let mut q = Col::zeros(pres.dof_count);
        for (sd, &xy) in pres.dof_coords.iter().enumerate() {
            q[sd] = xy[0];
        }
        // (w . grad u, grad q) with w=(1,0), u=(x,0), q=x: integrand 1.
        let val = sparse::quad_form(&q, &st.b_extra, &u);
        let expect = 0.05 * mesh.h * mesh.h * 1.0;
        assert!((val - expect).abs() < 1e-14, "{val} vs {expect}");
    }
}
