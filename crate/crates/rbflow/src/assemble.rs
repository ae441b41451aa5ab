//! Assembly of the parameter-dependent forms on the reference domain.
//!
//! All integrals are taken over the reference square; the geometry enters
//! through the diagonal tensors `kappa`, `chi` and the scalar `pi` of
//! [`crate::mesh::param_tensors`]. Quadrature is exact for each polynomial
//! integrand with one extra degree of slack.

use crate::mesh::{BoundaryTag, Mesh};
use crate::quad::triangle_rule;
use crate::space::{basis_ref_grads, basis_values, ElemGeom, FeSpace};
use crate::sparse::{self, CooMat, SpMat};
use crate::{Error, Params};
use faer::Col;

/// Parameter coefficient of one affine term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Theta {
    One,
    Mu2,
    Nu,
    NuOverMu2,
    NuMu2,
}

impl Theta {
    pub fn eval(self, p: &Params) -> f64 {
        match self {
            Theta::One => 1.0,
            Theta::Mu2 => p.mu2,
            Theta::Nu => p.nu,
            Theta::NuOverMu2 => p.nu / p.mu2,
            Theta::NuMu2 => p.nu * p.mu2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Theta::One => "1",
            Theta::Mu2 => "mu2",
            Theta::Nu => "nu",
            Theta::NuOverMu2 => "nu/mu2",
            Theta::NuMu2 => "nu*mu2",
        }
    }

    pub fn parse(s: &str) -> Result<Self, Error> {
        match s {
            "1" => Ok(Theta::One),
            "mu2" => Ok(Theta::Mu2),
            "nu" => Ok(Theta::Nu),
            "nu/mu2" => Ok(Theta::NuOverMu2),
            "nu*mu2" => Ok(Theta::NuMu2),
            other => Err(Error::Archive(format!("unknown coefficient tag '{other}'"))),
        }
    }
}

/// Affine-in-parameter operator `sum_q theta_q(mu) * M_q`.
#[derive(Debug, Clone)]
pub struct AffineOperator {
    pub terms: Vec<(Theta, SpMat)>,
}

impl AffineOperator {
    pub fn assemble(&self, p: &Params) -> SpMat {
        let terms: Vec<(f64, &SpMat)> =
            self.terms.iter().map(|(t, m)| (t.eval(p), m)).collect();
        sparse::linear_combination(&terms)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.terms[0].1.nrows(), self.terms[0].1.ncols())
    }
}

/// Affine-in-parameter vector `sum_q theta_q(mu) * v_q`.
#[derive(Debug, Clone)]
pub struct AffineVector {
    pub terms: Vec<(Theta, Col<f64>)>,
}

impl AffineVector {
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
}

fn require_vector(space: &FeSpace, what: &str) -> Result<(), Error> {
    if !space.kind.is_vector() {
        return Err(Error::SpaceMismatch(format!("{what} requires a vector (velocity) space")));
    }
    Ok(())
}

fn require_scalar(space: &FeSpace, what: &str) -> Result<(), Error> {
    if space.kind.is_vector() {
        return Err(Error::SpaceMismatch(format!("{what} requires a scalar (pressure) space")));
    }
    Ok(())
}

/// Weighted L2 mass matrix for any space kind: `weight * int u v` per
/// component.
pub fn mass_matrix(space: &FeSpace, mesh: &Mesh, weight: f64) -> SpMat {
    let k = space.kind.order();
    let rule = triangle_rule(2 * k + 1);
    let comps = if space.kind.is_vector() { 2 } else { 1 };
    let mut coo = CooMat::new(space.dof_count, space.dof_count);
    for t in 0..mesh.n_triangles() {
        let geom = ElemGeom::new(mesh, t);
        let dofs = space.scalar_dofs(t);
        let nl = dofs.len();
        let mut local = vec![0.0; nl * nl];
        for &(p, wq) in &rule {
            let vals = basis_values(k, p);
            let scale = weight * geom.det.abs() * wq;
            for i in 0..nl {
                for j in 0..nl {
                    local[i * nl + j] += scale * vals[i] * vals[j];
                }
            }
        }
        for i in 0..nl {
            for j in 0..nl {
                for c in 0..comps {
                    coo.push(space.dof(dofs[i], c), space.dof(dofs[j], c), local[i * nl + j]);
                }
            }
        }
    }
    coo.into_csc()
}

/// Diffusion (stiffness) matrix with a diagonal coefficient tensor.
pub fn diffusion_matrix(space: &FeSpace, mesh: &Mesh, kappa: [f64; 2]) -> SpMat {
    let k = space.kind.order();
    let rule = triangle_rule((2 * k).saturating_sub(2) + 1);
    let comps = if space.kind.is_vector() { 2 } else { 1 };
    let mut coo = CooMat::new(space.dof_count, space.dof_count);
    for t in 0..mesh.n_triangles() {
        let geom = ElemGeom::new(mesh, t);
        let dofs = space.scalar_dofs(t);
        let nl = dofs.len();
        let mut local = vec![0.0; nl * nl];
        for &(p, wq) in &rule {
            let grads: Vec<[f64; 2]> = basis_ref_grads(k, p)
                .into_iter()
                .map(|g| geom.push_grad(g))
                .collect();
            let scale = geom.det.abs() * wq;
            for i in 0..nl {
                for j in 0..nl {
                    local[i * nl + j] += scale
                        * (kappa[0] * grads[i][0] * grads[j][0]
                            + kappa[1] * grads[i][1] * grads[j][1]);
                }
            }
        }
        for i in 0..nl {
            for j in 0..nl {
                for c in 0..comps {
                    coo.push(space.dof(dofs[i], c), space.dof(dofs[j], c), local[i * nl + j]);
                }
            }
        }
    }
    coo.into_csc()
}

/// Velocity mass matrix `m(u, v; mu) = int pi u . v`.
pub fn assemble_mass(space: &FeSpace, mesh: &Mesh, p: &Params) -> Result<SpMat, Error> {
    require_vector(space, "assemble_mass")?;
    Ok(mass_matrix(space, mesh, p.mu2))
}

/// Velocity diffusion matrix `a(u, v; mu) = int du/dx_i kappa_ij dv/dx_j`.
pub fn assemble_diffusion(space: &FeSpace, mesh: &Mesh, p: &Params) -> Result<SpMat, Error> {
    require_vector(space, "assemble_diffusion")?;
    Ok(diffusion_matrix(space, mesh, [p.nu / p.mu2, p.nu * p.mu2]))
}

/// Divergence matrix `B` with `B_ki = b(phi_i, psi_k; mu)`,
/// `b(v, q; mu) = -int q chi_ij dv_j/dx_i`, shape pressure x velocity.
pub fn assemble_divergence(
    vel: &FeSpace,
    pres: &FeSpace,
    mesh: &Mesh,
    p: &Params,
) -> Result<SpMat, Error> {
    require_vector(vel, "assemble_divergence")?;
    require_scalar(pres, "assemble_divergence")?;
    let chi = [1.0, p.mu2];
    let mut terms: Vec<SpMat> = Vec::new();
    for axis in 0..2 {
        terms.push(divergence_term(vel, pres, mesh, axis));
    }
    Ok(sparse::linear_combination(&[(chi[0], &terms[0]), (chi[1], &terms[1])]))
}

/// One geometric factor of the divergence form: `-int q dv_axis/dx_axis`.
pub fn divergence_term(vel: &FeSpace, pres: &FeSpace, mesh: &Mesh, axis: usize) -> SpMat {
    let kv = vel.kind.order();
    let kp = pres.kind.order();
    let rule = triangle_rule(kp + kv.saturating_sub(1) + 1);
    let mut coo = CooMat::new(pres.dof_count, vel.dof_count);
    for t in 0..mesh.n_triangles() {
        let geom = ElemGeom::new(mesh, t);
        let vdofs = vel.scalar_dofs(t);
        let pdofs = pres.scalar_dofs(t);
        for &(p, wq) in &rule {
            let pvals = basis_values(kp, p);
            let vgrads: Vec<[f64; 2]> = basis_ref_grads(kv, p)
                .into_iter()
                .map(|g| geom.push_grad(g))
                .collect();
            let scale = geom.det.abs() * wq;
            for (kk, &pk) in pdofs.iter().enumerate() {
                for (jj, &vj) in vdofs.iter().enumerate() {
                    // Velocity component = axis (chi is diagonal).
                    coo.push(
                        pk,
                        vel.dof(vj, axis),
                        -scale * pvals[kk] * vgrads[jj][axis],
                    );
                }
            }
        }
    }
    coo.into_csc()
}

/// Interpolates a vector coefficient field at a reference point of one
/// triangle; returns the value.
pub fn field_value(
    space: &FeSpace,
    mesh_tri_dofs: &[usize],
    coeffs: &Col<f64>,
    vals: &[f64],
) -> [f64; 2] {
    let mut out = [0.0; 2];
    for (s, &sd) in mesh_tri_dofs.iter().enumerate() {
        for c in 0..2 {
            out[c] += coeffs[space.dof(sd, c)] * vals[s];
        }
    }
    out
}

/// Convection matrix `C(w)` with `C_ij = c(w, phi_j, phi_i; mu)`, linear in
/// the transport field `w`.
pub fn assemble_convection(
    vel: &FeSpace,
    mesh: &Mesh,
    p: &Params,
    w: &Col<f64>,
) -> Result<SpMat, Error> {
    require_vector(vel, "assemble_convection")?;
    if w.nrows() != vel.dof_count {
        return Err(Error::DimensionMismatch(format!(
            "transport field has {} entries, expected {}",
            w.nrows(),
            vel.dof_count
        )));
    }
    let t0 = convection_term(vel, mesh, 0, w);
    let t1 = convection_term(vel, mesh, 1, w);
    Ok(sparse::linear_combination(&[(1.0, &t0), (p.mu2, &t1)]))
}

/// One geometric factor of `C(w)`: `int w_axis dv_m/dx_axis u_m` (test u).
pub fn convection_term(vel: &FeSpace, mesh: &Mesh, axis: usize, w: &Col<f64>) -> SpMat {
    let k = vel.kind.order();
    let rule = triangle_rule(3 * k);
    let mut coo = CooMat::new(vel.dof_count, vel.dof_count);
    for t in 0..mesh.n_triangles() {
        let geom = ElemGeom::new(mesh, t);
        let dofs = vel.scalar_dofs(t);
        let nl = dofs.len();
        for &(p, wq) in &rule {
            let vals = basis_values(k, p);
            let grads: Vec<[f64; 2]> = basis_ref_grads(k, p)
                .into_iter()
                .map(|g| geom.push_grad(g))
                .collect();
            let wv = field_value(vel, dofs, w, &vals);
            let scale = geom.det.abs() * wq * wv[axis];
            if scale == 0.0 {
                continue;
            }
            for i in 0..nl {
                for j in 0..nl {
                    let v = scale * grads[j][axis] * vals[i];
                    for m in 0..2 {
                        coo.push(vel.dof(dofs[i], m), vel.dof(dofs[j], m), v);
                    }
                }
            }
        }
    }
    coo.into_csc()
}

/// Matrix of `c(phi_j, w, phi_i; mu)`: derivative of the convection residual
/// with respect to the transport slot, at the frozen field `w`.
pub fn assemble_convection_grad(
    vel: &FeSpace,
    mesh: &Mesh,
    p: &Params,
    w: &Col<f64>,
) -> Result<SpMat, Error> {
    require_vector(vel, "assemble_convection_grad")?;
    if w.nrows() != vel.dof_count {
        return Err(Error::DimensionMismatch("transport field length".into()));
    }
    let k = vel.kind.order();
    let rule = triangle_rule(3 * k);
    let chi = [1.0, p.mu2];
    let mut coo = CooMat::new(vel.dof_count, vel.dof_count);
    for t in 0..mesh.n_triangles() {
        let geom = ElemGeom::new(mesh, t);
        let dofs = vel.scalar_dofs(t);
        let nl = dofs.len();
        for &(p, wq) in &rule {
            let vals = basis_values(k, p);
            let grads: Vec<[f64; 2]> = basis_ref_grads(k, p)
                .into_iter()
                .map(|g| geom.push_grad(g))
                .collect();
            // grad_w[m][d] = dw_m / dx_d at the quadrature point
            let mut grad_w = [[0.0; 2]; 2];
            for (s, &sd) in dofs.iter().enumerate() {
                for m in 0..2 {
                    let coeff = w[vel.dof(sd, m)];
                    grad_w[m][0] += coeff * grads[s][0];
                    grad_w[m][1] += coeff * grads[s][1];
                }
            }
            let scale = geom.det.abs() * wq;
            for i in 0..nl {
                for j in 0..nl {
                    for m in 0..2 {
                        for d in 0..2 {
                            let v = scale * vals[j] * chi[d] * grad_w[m][d] * vals[i];
                            coo.push(vel.dof(dofs[i], m), vel.dof(dofs[j], d), v);
                        }
                    }
                }
            }
        }
    }
    Ok(coo.into_csc())
}

/// Discrete lifting: nodal interpolant of the lid velocity `(1, 0)` on Lid
/// dofs, zero elsewhere. Wall wins at corner dofs.
#[derive(Debug, Clone)]
pub struct LiftingFunction {
    pub coeffs: Col<f64>,
}

pub fn build_lifting(mesh: &Mesh, vel: &FeSpace) -> Result<LiftingFunction, Error> {
    require_vector(vel, "build_lifting")?;
    let has_lid = mesh.edges.iter().any(|e| e.boundary_tag == Some(BoundaryTag::Lid));
    if !has_lid {
        return Err(Error::SpaceMismatch("mesh has no lid edges".into()));
    }
    let mut coeffs = Col::zeros(vel.dof_count);
    for &(sd, tag) in &vel.boundary_scalar_dofs {
        if tag == BoundaryTag::Lid {
            coeffs[vel.dof(sd, 0)] = 1.0;
        }
    }
    Ok(LiftingFunction { coeffs })
}

/// Affine decomposition of the velocity mass form: one term, theta = mu2.
pub fn affine_mass(vel: &FeSpace, mesh: &Mesh) -> Result<AffineOperator, Error> {
    require_vector(vel, "affine_mass")?;
    Ok(AffineOperator { terms: vec![(Theta::Mu2, mass_matrix(vel, mesh, 1.0))] })
}

/// Affine decomposition of the diffusion form: thetas nu/mu2 and nu*mu2.
pub fn affine_diffusion(vel: &FeSpace, mesh: &Mesh) -> Result<AffineOperator, Error> {
    require_vector(vel, "affine_diffusion")?;
    Ok(AffineOperator {
        terms: vec![
            (Theta::NuOverMu2, diffusion_matrix(vel, mesh, [1.0, 0.0])),
            (Theta::NuMu2, diffusion_matrix(vel, mesh, [0.0, 1.0])),
        ],
    })
}

/// Affine decomposition of the divergence form: thetas 1 and mu2.
pub fn affine_divergence(
    vel: &FeSpace,
    pres: &FeSpace,
    mesh: &Mesh,
) -> Result<AffineOperator, Error> {
    require_vector(vel, "affine_divergence")?;
    require_scalar(pres, "affine_divergence")?;
    Ok(AffineOperator {
        terms: vec![
            (Theta::One, divergence_term(vel, pres, mesh, 0)),
            (Theta::Mu2, divergence_term(vel, pres, mesh, 1)),
        ],
    })
}

/// Affine momentum right-hand side `F = -a(l, .; mu)` from the lifting.
pub fn affine_lifting_rhs_f(
    diffusion: &AffineOperator,
    lifting: &LiftingFunction,
) -> AffineVector {
    AffineVector {
        terms: diffusion
            .terms
            .iter()
            .map(|(t, m)| {
                let v = sparse::spmv(m, &lifting.coeffs);
                (*t, faer::scale(-1.0) * &v)
            })
            .collect(),
    }
}

/// Affine continuity right-hand side `G = -b(l, .; mu)` from the lifting.
pub fn affine_lifting_rhs_g(
    divergence: &AffineOperator,
    lifting: &LiftingFunction,
) -> AffineVector {
    AffineVector {
        terms: divergence
            .terms
            .iter()
            .map(|(t, m)| {
                let v = sparse::spmv(m, &lifting.coeffs);
                (*t, faer::scale(-1.0) * &v)
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured_mesh;
    use crate::space::SpaceKind;
    use crate::sparse::{quad_form, to_dense};

    fn interpolate<F: Fn([f64; 2]) -> [f64; 2]>(space: &FeSpace, f: F) -> Col<f64> {
        let mut out = Col::zeros(space.dof_count);
        for (sd, &xy) in space.dof_coords.iter().enumerate() {
            let v = f(xy);
            out[space.dof(sd, 0)] = v[0];
            out[space.dof(sd, 1)] = v[1];
        }
        out
    }

    #[test]
    fn p1_element_mass_matrix() {
        // One unit right triangle: scalar P1 mass = (1/24) [[2,1,1],[1,2,1],[1,1,2]].
        let mut mesh = build_structured_mesh(1, 1);
        mesh.triangles.truncate(1);
        mesh.h_k.truncate(1);
        mesh.tri_edges.truncate(1);
        let space = FeSpace::new(SpaceKind::ScalarP1, &mesh);
        let m = to_dense(&mass_matrix(&space, &mesh, 1.0));
        let tri = mesh.triangles[0];
        for (i, &gi) in tri.iter().enumerate() {
            for (j, &gj) in tri.iter().enumerate() {
                let expect = if i == j { 2.0 / 24.0 } else { 1.0 / 24.0 };
                assert!((m[(gi, gj)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mass_scales_with_mu2() {
        let mesh = build_structured_mesh(3, 3);
        let vel = FeSpace::new(SpaceKind::VectorP1, &mesh);
        let m1 = assemble_mass(&vel, &mesh, &Params::new(1.0, 1.0).unwrap()).unwrap();
        let m2 = assemble_mass(&vel, &mesh, &Params::new(1.0, 2.0).unwrap()).unwrap();
        let gap = sparse::rel_frobenius_gap(&m2, &sparse::linear_combination(&[(2.0, &m1)]));
        assert!(gap < 1e-15);
    }

    #[test]
    fn mass_of_constant_field_is_area() {
        let mesh = build_structured_mesh(4, 4);
        let vel = FeSpace::new(SpaceKind::VectorP1, &mesh);
        let m = assemble_mass(&vel, &mesh, &Params::new(1.0, 1.0).unwrap()).unwrap();
        let u = interpolate(&vel, |_| [1.0, 0.0]);
        assert!((quad_form(&u, &m, &u) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn mass_rejects_pressure_space() {
        let mesh = build_structured_mesh(2, 2);
        let pres = FeSpace::new(SpaceKind::ScalarP1, &mesh);
        assert!(assemble_mass(&pres, &mesh, &Params::new(1.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn diffusion_of_linear_field() {
        let mesh = build_structured_mesh(4, 4);
        let vel = FeSpace::new(SpaceKind::VectorP1, &mesh);
        let a = assemble_diffusion(&vel, &mesh, &Params::new(1.0, 1.0).unwrap()).unwrap();
        let u = interpolate(&vel, |p| [p[0], 0.0]);
        assert!((quad_form(&u, &a, &u) - 1.0).abs() < 1e-13);
        // Constant field is in the kernel.
        let c = interpolate(&vel, |_| [3.0, -2.0]);
        let ac = sparse::spmv(&a, &c);
        assert!(ac.norm_max() < 1e-13);
        // Linearity in nu.
        let a2 = assemble_diffusion(&vel, &mesh, &Params::new(2.0, 1.0).unwrap()).unwrap();
        assert!(sparse::rel_frobenius_gap(&a2, &sparse::linear_combination(&[(2.0, &a)])) < 1e-15);
    }

    #[test]
    fn divergence_values() {
        let mesh = build_structured_mesh(4, 4);
        let vel = FeSpace::new(SpaceKind::VectorP2, &mesh);
        let pres = FeSpace::new(SpaceKind::ScalarP1, &mesh);
        let b = assemble_divergence(&vel, &pres, &mesh, &Params::new(1.0, 1.0).unwrap()).unwrap();
        assert_eq!((b.nrows(), b.ncols()), (pres.dof_count, vel.dof_count));
        let v = interpolate(&vel, |p| [p[0], 0.0]);
        let q = Col::from_fn(pres.dof_count, |_| 1.0);
        let bv = sparse::spmv(&b, &v);
        let mut qbv = 0.0;
        for i in 0..q.nrows() {
            qbv += q[i] * bv[i];
        }
        assert!((qbv - (-1.0)).abs() < 1e-13);
        // Divergence-free field maps to zero.
        let v = interpolate(&vel, |p| [p[1], 0.0]);
        assert!(sparse::spmv(&b, &v).norm_max() < 1e-13);
    }

    #[test]
    fn divergence_rejects_swapped_spaces() {
        let mesh = build_structured_mesh(2, 2);
        let vel = FeSpace::new(SpaceKind::VectorP1, &mesh);
        let pres = FeSpace::new(SpaceKind::ScalarP1, &mesh);
        let p = Params::new(1.0, 1.0).unwrap();
        assert!(assemble_divergence(&pres, &vel, &mesh, &p).is_err());
        assert!(assemble_divergence(&vel, &vel, &mesh, &p).is_err());
    }

    #[test]
    fn convection_zero_transport() {
        let mesh = build_structured_mesh(3, 3);
        let vel = FeSpace::new(SpaceKind::VectorP2, &mesh);
        let w = Col::zeros(vel.dof_count);
        let c = assemble_convection(&vel, &mesh, &Params::new(1.0, 1.0).unwrap(), &w).unwrap();
        assert_eq!(c.compute_nnz(), 0);
    }

    #[test]
    fn convection_constant_transport_value() {
        let mesh = build_structured_mesh(4, 4);
        let vel = FeSpace::new(SpaceKind::VectorP2, &mesh);
        let p = Params::new(1.0, 1.0).unwrap();
        let w = interpolate(&vel, |_| [1.0, 0.0]);
        let c = assemble_convection(&vel, &mesh, &p, &w).unwrap();
        // c((1,0), (x,0), (x,0)) = int 1 * d(x)/dx * x = 1/2.
        let v = interpolate(&vel, |q| [q[0], 0.0]);
        assert!((quad_form(&v, &c, &v) - 0.5).abs() < 1e-13);
    }

    #[test]
    fn convection_linear_in_transport() {
        let mesh = build_structured_mesh(3, 3);
        let vel = FeSpace::new(SpaceKind::VectorP2, &mesh);
        let p = Params::new(0.7, 1.3).unwrap();
        let w1 = interpolate(&vel, |q| [q[0] * q[1], q[1]]);
        let w2 = interpolate(&vel, |q| [q[1], q[0]]);
        let alpha = 1.7;
        let beta = -0.4;
        let combo = Col::from_fn(vel.dof_count, |i| alpha * w1[i] + beta * w2[i]);
        let c_combo = assemble_convection(&vel, &mesh, &p, &combo).unwrap();
        let c1 = assemble_convection(&vel, &mesh, &p, &w1).unwrap();
        let c2 = assemble_convection(&vel, &mesh, &p, &w2).unwrap();
        let lin = sparse::linear_combination(&[(alpha, &c1), (beta, &c2)]);
        assert!(sparse::rel_frobenius_gap(&c_combo, &lin) < 1e-13);
    }

    #[test]
    fn convection_skew_symmetry() {
        // For divergence-free w and zero-trace v, c(w, v, v) = 0.
        let mesh = build_structured_mesh(4, 4);
        let vel = FeSpace::new(SpaceKind::VectorP2, &mesh);
        let p = Params::new(1.0, 1.0).unwrap();
        let w = interpolate(&vel, |q| [q[1], 0.0]); // div w = 0 pointwise
        let c = assemble_convection(&vel, &mesh, &p, &w).unwrap();
        let mut v = interpolate(&vel, |q| [q[0] * q[1], -q[1] * q[0]]);
        for (d, _) in vel.dirichlet_dofs() {
            v[d] = 0.0;
        }
        let val = quad_form(&v, &c, &v);
        assert!(val.abs() < 1e-13, "c(w,v,v) = {val}");
    }

    #[test]
    fn convection_rejects_bad_transport_length() {
        let mesh = build_structured_mesh(2, 2);
        let vel = FeSpace::new(SpaceKind::VectorP1, &mesh);
        let w = Col::zeros(vel.dof_count + 1);
        assert!(assemble_convection(&vel, &mesh, &Params::new(1.0, 1.0).unwrap(), &w).is_err());
    }

    #[test]
    fn lifting_values() {
        let mesh = build_structured_mesh(2, 2);
        let vel = FeSpace::new(SpaceKind::VectorP2, &mesh);
        let l = build_lifting(&mesh, &vel).unwrap();
        for (sd, &xy) in vel.dof_coords.iter().enumerate() {
            let ux = l.coeffs[vel.dof(sd, 0)];
            let uy = l.coeffs[vel.dof(sd, 1)];
            assert_eq!(uy, 0.0);
            if xy[1] == 1.0 && xy[0] > 0.0 && xy[0] < 1.0 {
                assert_eq!(ux, 1.0, "lid dof at {xy:?}");
            } else {
                assert_eq!(ux, 0.0, "non-lid dof at {xy:?}");
            }
        }
    }

    #[test]
    fn affine_matches_direct_assembly() {
        let mesh = build_structured_mesh(3, 3);
        let vel = FeSpace::new(SpaceKind::VectorP2, &mesh);
        let pres = FeSpace::new(SpaceKind::ScalarP2, &mesh);
        let aff_a = affine_diffusion(&vel, &mesh).unwrap();
        let aff_b = affine_divergence(&vel, &pres, &mesh).unwrap();
        let aff_m = affine_mass(&vel, &mesh).unwrap();
        // Theta values at sample points.
        let p = Params::new(1.0, 1.0).unwrap();
        assert_eq!(aff_a.terms[0].0.eval(&p), 1.0);
        assert_eq!(aff_a.terms[1].0.eval(&p), 1.0);
        let p = Params::new(0.5, 2.0).unwrap();
        assert_eq!(aff_a.terms[0].0.eval(&p), 0.25);
        assert_eq!(aff_a.terms[1].0.eval(&p), 1.0);

        let mut x: u64 = 42;
        let mut next = move || {
            // xorshift, deterministic
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..20 {
            let p = Params::new(0.25 + 0.5 * next(), 1.0 + next()).unwrap();
            let gap_a = sparse::rel_frobenius_gap(
                &assemble_diffusion(&vel, &mesh, &p).unwrap(),
                &aff_a.assemble(&p),
            );
            let gap_b = sparse::rel_frobenius_gap(
                &assemble_divergence(&vel, &pres, &mesh, &p).unwrap(),
                &aff_b.assemble(&p),
            );
            let gap_m = sparse::rel_frobenius_gap(
                &assemble_mass(&vel, &mesh, &p).unwrap(),
                &aff_m.assemble(&p),
            );
            assert!(gap_a < 1e-12 && gap_b < 1e-12 && gap_m < 1e-12);
        }
    }

    #[test]
    fn symmetry_and_spd() {
        let mesh = build_structured_mesh(4, 4);
        let vel = FeSpace::new(SpaceKind::VectorP2, &mesh);
        let p = Params::new(0.4, 1.7).unwrap();
        let m = to_dense(&assemble_mass(&vel, &mesh, &p).unwrap());
        let a = to_dense(&assemble_diffusion(&vel, &mesh, &p).unwrap());
        let sym_gap_m = (&m - m.transpose()).norm_max();
        let sym_gap_a = (&a - a.transpose()).norm_max();
        assert!(sym_gap_m < 1e-14 && sym_gap_a < 1e-14);
        // Mass SPD: Cholesky succeeds.
        assert!(m.cholesky(faer::Side::Lower).is_ok());
    }
}
