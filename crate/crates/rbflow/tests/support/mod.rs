//! Independent dense assembly oracle for the integration tests.
//!
//! Everything here is recomputed from first principles: Gauss nodes come from
//! the Golub-Welsch eigenproblem (not the library's Newton iteration), the
//! triangle rule uses its own Duffy substitution with two extra degrees of
//! exactness, and basis values, gradients and Hessians are written out
//! directly from the barycentric formulas.

#![allow(dead_code)]

use faer::{Col, Mat, Side};
use rbflow::mesh::Mesh;
use rbflow::space::FeSpace;

/// Gauss-Legendre rule on [0, 1] via the symmetric tridiagonal Jacobi matrix.
pub fn gauss01(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut j = Mat::<f64>::zeros(n, n);
    for k in 1..n {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = j.selfadjoint_eigendecomposition(Side::Lower);
    let x = eig.s().column_vector();
    let u = eig.u();
    (0..n)
        .map(|i| {
            let w = 2.0 * u[(0, i)] * u[(0, i)];
            ((x[i] + 1.0) / 2.0, w / 2.0)
        })
        .collect()
}

/// Quadrature on the reference triangle, exact (with margin) for total
/// degree `degree + 2`: Duffy map `x = u`, `y = v (1 - u)`.
pub fn tri_rule(degree: usize) -> Vec<(f64, f64, f64)> {
    let n = degree + 2;
    let g = gauss01(n);
    let mut out = Vec::with_capacity(n * n);
    for &(u, wu) in &g {
        for &(v, wv) in &g {
            out.push((u, v * (1.0 - u), wu * wv * (1.0 - u)));
        }
    }
    out
}

/// Barycentric coordinates and their (constant) reference gradients.
fn lambdas(x: f64, y: f64) -> [f64; 3] {
    [1.0 - x - y, x, y]
}
const DL: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
const EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

pub fn val(order: usize, i: usize, x: f64, y: f64) -> f64 {
    let l = lambdas(x, y);
    match order {
        0 => 1.0,
        1 => l[i],
        2 => {
            if i < 3 {
                l[i] * (2.0 * l[i] - 1.0)
            } else {
                let (a, b) = EDGES[i - 3];
                4.0 * l[a] * l[b]
            }
        }
        _ => unreachable!(),
    }
}

pub fn grad_ref(order: usize, i: usize, x: f64, y: f64) -> [f64; 2] {
    let l = lambdas(x, y);
    match order {
        0 => [0.0, 0.0],
        1 => DL[i],
        2 => {
            if i < 3 {
                [(4.0 * l[i] - 1.0) * DL[i][0], (4.0 * l[i] - 1.0) * DL[i][1]]
            } else {
                let (a, b) = EDGES[i - 3];
                [
                    4.0 * (l[b] * DL[a][0] + l[a] * DL[b][0]),
                    4.0 * (l[b] * DL[a][1] + l[a] * DL[b][1]),
                ]
            }
        }
        _ => unreachable!(),
    }
}

/// Constant reference Hessian of one scalar basis function.
pub fn hess_ref(order: usize, i: usize) -> [[f64; 2]; 2] {
    if order < 2 {
        return [[0.0; 2]; 2];
    }
    let outer = |a: [f64; 2], b: [f64; 2]| {
        [[a[0] * b[0], a[0] * b[1]], [a[1] * b[0], a[1] * b[1]]]
    };
    if i < 3 {
        let o = outer(DL[i], DL[i]);
        [[4.0 * o[0][0], 4.0 * o[0][1]], [4.0 * o[1][0], 4.0 * o[1][1]]]
    } else {
        let (a, b) = EDGES[i - 3];
        let (p, q) = (outer(DL[a], DL[b]), outer(DL[b], DL[a]));
        [
            [4.0 * (p[0][0] + q[0][0]), 4.0 * (p[0][1] + q[0][1])],
            [4.0 * (p[1][0] + q[1][0]), 4.0 * (p[1][1] + q[1][1])],
        ]
    }
}

/// Affine element geometry, recomputed from the vertex coordinates.
pub struct Geo {
    pub jit: [[f64; 2]; 2],
    pub det: f64,
    pub h_k: f64,
}

pub fn geo(mesh: &Mesh, t: usize) -> Geo {
    let [a, b, c] = mesh.triangles[t];
    let (p0, p1, p2) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
    let j = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let jit = [
        [j[1][1] / det, -j[1][0] / det],
        [-j[0][1] / det, j[0][0] / det],
    ];
    let dist = |u: [f64; 2], v: [f64; 2]| ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2)).sqrt();
    let (la, lb, lc) = (dist(p1, p2), dist(p0, p2), dist(p0, p1));
    let h_k = la * lb * lc / det.abs();
    Geo { jit, det, h_k }
}

impl Geo {
    pub fn push(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.jit[0][0] * g[0] + self.jit[0][1] * g[1],
            self.jit[1][0] * g[0] + self.jit[1][1] * g[1],
        ]
    }

    /// Physical Laplacian of one scalar basis function (constant for P2).
    pub fn lap(&self, order: usize, i: usize) -> f64 {
        let h = hess_ref(order, i);
        let it = self.jit;
        let mut out = 0.0;
        for d in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    out += it[d][a] * h[a][b] * it[d][b];
                }
            }
        }
        out
    }
}

fn comps(space: &FeSpace) -> usize {
    if space.kind.is_vector() { 2 } else { 1 }
}

/// Transport field value at a reference point.
fn w_at(vel: &FeSpace, t: usize, w: &Col<f64>, x: f64, y: f64) -> [f64; 2] {
    let k = vel.kind.order();
    let mut out = [0.0; 2];
    for (s, &sd) in vel.scalar_dofs(t).iter().enumerate() {
        let v = val(k, s, x, y);
        out[0] += w[vel.dof(sd, 0)] * v;
        out[1] += w[vel.dof(sd, 1)] * v;
    }
    out
}

pub fn mass(space: &FeSpace, mesh: &Mesh, weight: f64) -> Mat<f64> {
    let k = space.kind.order();
    let rule = tri_rule(2 * k);
    let nc = comps(space);
    let mut out = Mat::zeros(space.dof_count, space.dof_count);
    for t in 0..mesh.n_triangles() {
        let g = geo(mesh, t);
        let dofs = space.scalar_dofs(t);
        for &(x, y, wq) in &rule {
            let scale = weight * g.det.abs() * wq;
            for (i, &di) in dofs.iter().enumerate() {
                for (j, &dj) in dofs.iter().enumerate() {
                    let v = scale * val(k, i, x, y) * val(k, j, x, y);
                    for c in 0..nc {
                        out[(space.dof(di, c), space.dof(dj, c))] += v;
                    }
                }
            }
        }
    }
    out
}

pub fn diffusion(space: &FeSpace, mesh: &Mesh, kappa: [f64; 2]) -> Mat<f64> {
    let k = space.kind.order();
    let rule = tri_rule(2 * k.saturating_sub(1));
    let nc = comps(space);
    let mut out = Mat::zeros(space.dof_count, space.dof_count);
    for t in 0..mesh.n_triangles() {
        let g = geo(mesh, t);
        let dofs = space.scalar_dofs(t);
        for &(x, y, wq) in &rule {
            let scale = g.det.abs() * wq;
            for (i, &di) in dofs.iter().enumerate() {
                let gi = g.push(grad_ref(k, i, x, y));
                for (j, &dj) in dofs.iter().enumerate() {
                    let gj = g.push(grad_ref(k, j, x, y));
                    let v = scale * (kappa[0] * gi[0] * gj[0] + kappa[1] * gi[1] * gj[1]);
                    for c in 0..nc {
                        out[(space.dof(di, c), space.dof(dj, c))] += v;
                    }
                }
            }
        }
    }
    out
}

/// `B_ki = -int q_k chi_d dv_d/dx_d` for basis velocity `v = phi_i e_d`.
pub fn divergence(vel: &FeSpace, pres: &FeSpace, mesh: &Mesh, chi: [f64; 2]) -> Mat<f64> {
    let kv = vel.kind.order();
    let kp = pres.kind.order();
    let rule = tri_rule(kp + kv.saturating_sub(1));
    let mut out = Mat::zeros(pres.dof_count, vel.dof_count);
    for t in 0..mesh.n_triangles() {
        let g = geo(mesh, t);
        let vdofs = vel.scalar_dofs(t);
        let pdofs = pres.scalar_dofs(t);
        for &(x, y, wq) in &rule {
            let scale = g.det.abs() * wq;
            for (kk, &pk) in pdofs.iter().enumerate() {
                let qv = val(kp, kk, x, y);
                for (jj, &vj) in vdofs.iter().enumerate() {
                    let gj = g.push(grad_ref(kv, jj, x, y));
                    for d in 0..2 {
                        out[(pk, vel.dof(vj, d))] -= scale * qv * chi[d] * gj[d];
                    }
                }
            }
        }
    }
    out
}

/// `C(w)_ij = sum_d chi_d int w_d du_j/dx_d v_i` (same component coupling).
pub fn convection(vel: &FeSpace, mesh: &Mesh, chi: [f64; 2], w: &Col<f64>) -> Mat<f64> {
    let k = vel.kind.order();
    let rule = tri_rule(3 * k.saturating_sub(1) + 1);
    let mut out = Mat::zeros(vel.dof_count, vel.dof_count);
    for t in 0..mesh.n_triangles() {
        let g = geo(mesh, t);
        let dofs = vel.scalar_dofs(t);
        for &(x, y, wq) in &rule {
            let wv = w_at(vel, t, w, x, y);
            let scale = g.det.abs() * wq;
            for (i, &di) in dofs.iter().enumerate() {
                let vi = val(k, i, x, y);
                for (j, &dj) in dofs.iter().enumerate() {
                    let gj = g.push(grad_ref(k, j, x, y));
                    let conv = chi[0] * wv[0] * gj[0] + chi[1] * wv[1] * gj[1];
                    for m in 0..2 {
                        out[(vel.dof(di, m), vel.dof(dj, m))] += scale * conv * vi;
                    }
                }
            }
        }
    }
    out
}

/// Derivative of the convection residual in the transport slot:
/// entries `c(phi_j e_d, w, phi_i e_m) = chi_d int phi_j dw_m/dx_d phi_i`.
pub fn convection_grad(vel: &FeSpace, mesh: &Mesh, chi: [f64; 2], w: &Col<f64>) -> Mat<f64> {
    let k = vel.kind.order();
    let rule = tri_rule(3 * k.saturating_sub(1) + 1);
    let mut out = Mat::zeros(vel.dof_count, vel.dof_count);
    for t in 0..mesh.n_triangles() {
        let g = geo(mesh, t);
        let dofs = vel.scalar_dofs(t);
        for &(x, y, wq) in &rule {
            let mut grad_w = [[0.0; 2]; 2];
            for (s, &sd) in dofs.iter().enumerate() {
                let gs = g.push(grad_ref(k, s, x, y));
                for m in 0..2 {
                    grad_w[m][0] += w[vel.dof(sd, m)] * gs[0];
                    grad_w[m][1] += w[vel.dof(sd, m)] * gs[1];
                }
            }
            let scale = g.det.abs() * wq;
            for (i, &di) in dofs.iter().enumerate() {
                let vi = val(k, i, x, y);
                for (j, &dj) in dofs.iter().enumerate() {
                    let vj = val(k, j, x, y);
                    for m in 0..2 {
                        for d in 0..2 {
                            out[(vel.dof(di, m), vel.dof(dj, d))] +=
                                scale * vj * chi[d] * grad_w[m][d] * vi;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Franca-Hughes blocks, each weighted by `delta h_K^2`:
/// `(m_tilde, b_extra, s)` with rows in the pressure space.
pub fn franca_hughes(
    vel: &FeSpace,
    pres: &FeSpace,
    mesh: &Mesh,
    nu: f64,
    delta: f64,
) -> (Mat<f64>, Mat<f64>, Mat<f64>) {
    let k = vel.kind.order();
    let rule = tri_rule(2 * k);
    let mut m_tilde = Mat::zeros(pres.dof_count, vel.dof_count);
    let mut b_extra = Mat::zeros(pres.dof_count, vel.dof_count);
    let mut s = Mat::zeros(pres.dof_count, pres.dof_count);
    for t in 0..mesh.n_triangles() {
        let g = geo(mesh, t);
        let weight = delta * g.h_k * g.h_k;
        let vdofs = vel.scalar_dofs(t);
        let pdofs = pres.scalar_dofs(t);
        for &(x, y, wq) in &rule {
            let scale = weight * g.det.abs() * wq;
            for (kk, &pk) in pdofs.iter().enumerate() {
                let gq = g.push(grad_ref(k, kk, x, y));
                for (jj, &vj) in vdofs.iter().enumerate() {
                    let vv = val(k, jj, x, y);
                    let lap = g.lap(k, jj);
                    for c in 0..2 {
                        m_tilde[(pk, vel.dof(vj, c))] += scale * vv * gq[c];
                        b_extra[(pk, vel.dof(vj, c))] += scale * (-nu * lap) * gq[c];
                    }
                }
                for (ll, &pl) in pdofs.iter().enumerate() {
                    let gl = g.push(grad_ref(k, ll, x, y));
                    s[(pk, pl)] += scale * (gl[0] * gq[0] + gl[1] * gq[1]);
                }
            }
        }
    }
    (m_tilde, b_extra, s)
}

/// Streamline (SUPG) blocks around a frozen transport field.
pub fn supg(
    vel: &FeSpace,
    pres: &FeSpace,
    mesh: &Mesh,
    nu: f64,
    delta: f64,
    w: &Col<f64>,
) -> (Mat<f64>, Mat<f64>, Mat<f64>, Mat<f64>, Mat<f64>, Mat<f64>) {
    let k = vel.kind.order();
    let rule = tri_rule(4 * k.max(1));
    let mut m_tilde = Mat::zeros(pres.dof_count, vel.dof_count);
    let mut b_extra = Mat::zeros(pres.dof_count, vel.dof_count);
    let mut s = Mat::zeros(pres.dof_count, pres.dof_count);
    let mut m_uv = Mat::zeros(vel.dof_count, vel.dof_count);
    let mut k_uv = Mat::zeros(vel.dof_count, vel.dof_count);
    let mut g_pv = Mat::zeros(vel.dof_count, pres.dof_count);
    for t in 0..mesh.n_triangles() {
        let g = geo(mesh, t);
        let weight = delta * g.h_k * g.h_k;
        let vdofs = vel.scalar_dofs(t);
        let pdofs = pres.scalar_dofs(t);
        let nl = vdofs.len();
        for &(x, y, wq) in &rule {
            let wv = w_at(vel, t, w, x, y);
            let scale = weight * g.det.abs() * wq;
            let grads: Vec<[f64; 2]> =
                (0..nl).map(|i| g.push(grad_ref(k, i, x, y))).collect();
            let sd: Vec<f64> = grads.iter().map(|gr| wv[0] * gr[0] + wv[1] * gr[1]).collect();
            let res: Vec<f64> = (0..nl).map(|j| -nu * g.lap(k, j) + sd[j]).collect();
            for (kk, &pk) in pdofs.iter().enumerate() {
                let gq = grads[kk];
                for (jj, &vj) in vdofs.iter().enumerate() {
                    let vv = val(k, jj, x, y);
                    for c in 0..2 {
                        m_tilde[(pk, vel.dof(vj, c))] += scale * vv * gq[c];
                        b_extra[(pk, vel.dof(vj, c))] += scale * res[jj] * gq[c];
                    }
                }
                for (ll, &pl) in pdofs.iter().enumerate() {
                    s[(pk, pl)] += scale * (grads[ll][0] * gq[0] + grads[ll][1] * gq[1]);
                }
            }
            for (i, &vi) in vdofs.iter().enumerate() {
                for (j, &vj) in vdofs.iter().enumerate() {
                    let vv = val(k, j, x, y);
                    for c in 0..2 {
                        m_uv[(vel.dof(vi, c), vel.dof(vj, c))] += scale * vv * sd[i];
                        k_uv[(vel.dof(vi, c), vel.dof(vj, c))] += scale * res[j] * sd[i];
                    }
                }
                for (kk, &pk) in pdofs.iter().enumerate() {
                    for c in 0..2 {
                        g_pv[(vel.dof(vi, c), pk)] += scale * grads[kk][c] * sd[i];
                    }
                }
            }
        }
    }
    (m_tilde, b_extra, s, m_uv, k_uv, g_pv)
}

/// Interior pressure-jump matrix via 1D quadrature along each edge.
pub fn pressure_jump(pres: &FeSpace, mesh: &Mesh, delta: f64) -> Mat<f64> {
    let mut out = Mat::zeros(pres.dof_count, pres.dof_count);
    let rule = gauss01(2);
    for e in &mesh.edges {
        let Some(tr) = e.tri_right else { continue };
        let tl = e.tri_left;
        let [a, b] = e.vertices;
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
        // [p] is constant across a P0 interface, so the quadrature just
        // reproduces delta * h_e * len; keep the loop to stay an integral.
        let mut line = 0.0;
        for &(_, w) in &rule {
            line += w * len;
        }
        let v = delta * len * line;
        out[(tl, tl)] += v;
        out[(tr, tr)] += v;
        out[(tl, tr)] -= v;
        out[(tr, tl)] -= v;
    }
    out
}

/// Relative Frobenius gap between a dense oracle matrix and a library result.
pub fn rel_gap(oracle: &Mat<f64>, lib: &Mat<f64>) -> f64 {
    let diff = oracle - lib;
    diff.norm_l2() / oracle.norm_l2().max(1e-300)
}
