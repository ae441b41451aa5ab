//! Lagrange finite-element spaces on the triangulation.
//!
//! Scalar dof layout: P1 dofs are vertices, P2 dofs are vertices followed by
//! edge midpoints, P0 dofs are triangles. Vector spaces interleave components,
//! `dof = 2 * scalar_dof + component`.

use crate::mesh::{BoundaryTag, Mesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    ScalarP0,
    ScalarP1,
    ScalarP2,
    VectorP1,
    VectorP2,
}

impl SpaceKind {
    pub fn order(self) -> usize {
        match self {
            SpaceKind::ScalarP0 => 0,
            SpaceKind::ScalarP1 | SpaceKind::VectorP1 => 1,
            SpaceKind::ScalarP2 | SpaceKind::VectorP2 => 2,
        }
    }

    pub fn is_vector(self) -> bool {
        matches!(self, SpaceKind::VectorP1 | SpaceKind::VectorP2)
    }
}

#[derive(Debug, Clone)]
pub struct FeSpace {
    pub kind: SpaceKind,
    /// Total dof count (vector spaces count both components).
    pub dof_count: usize,
    scalar_count: usize,
    /// Scalar dofs per triangle, in local basis order.
    dofmap: Vec<Vec<usize>>,
    /// Scalar boundary dofs with their tag; Wall wins at corners.
    pub boundary_scalar_dofs: Vec<(usize, BoundaryTag)>,
    /// Coordinates of scalar dofs (empty for P0).
    pub dof_coords: Vec<[f64; 2]>,
}

impl FeSpace {
    pub fn new(kind: SpaceKind, mesh: &Mesh) -> Self {
        let nv = mesh.n_vertices();
        let ne = mesh.edges.len();
        let nt = mesh.n_triangles();
        let (scalar_count, dofmap, dof_coords) = match kind.order() {
            0 => {
                let dofmap = (0..nt).map(|t| vec![t]).collect();
                (nt, dofmap, Vec::new())
            }
            1 => {
                let dofmap = mesh.triangles.iter().map(|t| t.to_vec()).collect();
                (nv, dofmap, mesh.vertices.clone())
            }
            2 => {
                let mut coords = mesh.vertices.clone();
                coords.extend(mesh.edges.iter().map(|e| {
                    let a = mesh.vertices[e.vertices[0]];
                    let b = mesh.vertices[e.vertices[1]];
                    [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]
                }));
                let dofmap = mesh
                    .triangles
                    .iter()
                    .zip(&mesh.tri_edges)
                    .map(|(t, e)| {
                        vec![t[0], t[1], t[2], nv + e[0], nv + e[1], nv + e[2]]
                    })
                    .collect();
                (nv + ne, dofmap, coords)
            }
            _ => unreachable!(),
        };

        // Boundary scalar dofs, Wall wins where Lid and Wall meet.
        let mut tag_of: std::collections::HashMap<usize, BoundaryTag> =
            std::collections::HashMap::new();
        if kind.order() >= 1 {
            for (eid, edge) in mesh.edges.iter().enumerate() {
                if let Some(tag) = edge.boundary_tag {
                    let mut dofs = vec![edge.vertices[0], edge.vertices[1]];
                    if kind.order() == 2 {
                        dofs.push(nv + eid);
                    }
                    for d in dofs {
                        let entry = tag_of.entry(d).or_insert(tag);
                        if tag == BoundaryTag::Wall {
                            *entry = BoundaryTag::Wall;
                        }
                    }
                }
            }
        }
        let mut boundary_scalar_dofs: Vec<(usize, BoundaryTag)> = tag_of.into_iter().collect();
        boundary_scalar_dofs.sort_by_key(|&(d, _)| d);

        let mult = if kind.is_vector() { 2 } else { 1 };
        FeSpace {
            kind,
            dof_count: mult * scalar_count,
            scalar_count,
            dofmap,
            boundary_scalar_dofs,
            dof_coords,
        }
    }

    pub fn scalar_count(&self) -> usize {
        self.scalar_count
    }

    pub fn scalar_dofs(&self, tri: usize) -> &[usize] {
        &self.dofmap[tri]
    }

    /// Full dof index of a scalar dof component.
    pub fn dof(&self, scalar_dof: usize, comp: usize) -> usize {
        if self.kind.is_vector() {
            2 * scalar_dof + comp
        } else {
            debug_assert_eq!(comp, 0);
            scalar_dof
        }
    }

    /// All Dirichlet dofs (both components for vector spaces) with tags.
    pub fn dirichlet_dofs(&self) -> Vec<(usize, BoundaryTag)> {
        let mut out = Vec::new();
        for &(sd, tag) in &self.boundary_scalar_dofs {
            if self.kind.is_vector() {
                out.push((2 * sd, tag));
                out.push((2 * sd + 1, tag));
            } else {
                out.push((sd, tag));
            }
        }
        out
    }

    /// Indices of dofs not constrained by Dirichlet conditions.
    pub fn interior_dofs(&self) -> Vec<usize> {
        let mut constrained = vec![false; self.dof_count];
        for (d, _) in self.dirichlet_dofs() {
            constrained[d] = true;
        }
        (0..self.dof_count).filter(|&d| !constrained[d]).collect()
    }
}

/// Number of scalar basis functions per element for a given order.
pub fn local_dim(order: usize) -> usize {
    match order {
        0 => 1,
        1 => 3,
        2 => 6,
        _ => unreachable!(),
    }
}

/// Scalar basis values at a reference point.
pub fn basis_values(order: usize, p: [f64; 2]) -> Vec<f64> {
    let [x, y] = p;
    let l = [1.0 - x - y, x, y];
    match order {
        0 => vec![1.0],
        1 => l.to_vec(),
        2 => vec![
            l[0] * (2.0 * l[0] - 1.0),
            l[1] * (2.0 * l[1] - 1.0),
            l[2] * (2.0 * l[2] - 1.0),
            4.0 * l[0] * l[1],
            4.0 * l[1] * l[2],
            4.0 * l[2] * l[0],
        ],
        _ => unreachable!(),
    }
}

const GRAD_L: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

/// Scalar basis gradients (reference coordinates) at a reference point.
pub fn basis_ref_grads(order: usize, p: [f64; 2]) -> Vec<[f64; 2]> {
    let [x, y] = p;
    let l = [1.0 - x - y, x, y];
    match order {
        0 => vec![[0.0, 0.0]],
        1 => GRAD_L.to_vec(),
        2 => {
            let mut g = Vec::with_capacity(6);
            for i in 0..3 {
                g.push([
                    (4.0 * l[i] - 1.0) * GRAD_L[i][0],
                    (4.0 * l[i] - 1.0) * GRAD_L[i][1],
                ]);
            }
            for &(i, j) in &[(0, 1), (1, 2), (2, 0)] {
                g.push([
                    4.0 * (l[j] * GRAD_L[i][0] + l[i] * GRAD_L[j][0]),
                    4.0 * (l[j] * GRAD_L[i][1] + l[i] * GRAD_L[j][1]),
                ]);
            }
            g
        }
        _ => unreachable!(),
    }
}

/// Scalar basis Hessians in reference coordinates (constant for P0..P2).
pub fn basis_ref_hessians(order: usize) -> Vec<[[f64; 2]; 2]> {
    match order {
        0 | 1 => vec![[[0.0; 2]; 2]; local_dim(order)],
        2 => {
            let outer = |a: [f64; 2], b: [f64; 2]| {
                [[a[0] * b[0], a[0] * b[1]], [a[1] * b[0], a[1] * b[1]]]
            };
            let sym = |a: [f64; 2], b: [f64; 2]| {
                let (p, q) = (outer(a, b), outer(b, a));
                [
                    [4.0 * (p[0][0] + q[0][0]), 4.0 * (p[0][1] + q[0][1])],
                    [4.0 * (p[1][0] + q[1][0]), 4.0 * (p[1][1] + q[1][1])],
                ]
            };
            let mut h = Vec::with_capacity(6);
            for i in 0..3 {
                let g = GRAD_L[i];
                let o = outer(g, g);
                h.push([
                    [4.0 * o[0][0], 4.0 * o[0][1]],
                    [4.0 * o[1][0], 4.0 * o[1][1]],
                ]);
            }
            for &(i, j) in &[(0, 1), (1, 2), (2, 0)] {
                h.push(sym(GRAD_L[i], GRAD_L[j]));
            }
            h
        }
        _ => unreachable!(),
    }
}

/// Affine geometry of one triangle: Jacobian of the map from the reference
/// triangle, its inverse transpose, and determinant.
#[derive(Debug, Clone, Copy)]
pub struct ElemGeom {
    pub jac: [[f64; 2]; 2],
    pub inv_t: [[f64; 2]; 2],
    pub det: f64,
}

impl ElemGeom {
    pub fn new(mesh: &Mesh, tri: usize) -> Self {
        let [a, b, c] = mesh.triangles[tri];
        let (p0, p1, p2) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
        let jac = [
            [p1[0] - p0[0], p2[0] - p0[0]],
            [p1[1] - p0[1], p2[1] - p0[1]],
        ];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [
            [jac[1][1] / det, -jac[0][1] / det],
            [-jac[1][0] / det, jac[0][0] / det],
        ];
        let inv_t = [[inv[0][0], inv[1][0]], [inv[0][1], inv[1][1]]];
        ElemGeom { jac, inv_t, det }
    }

    /// Physical gradient from a reference gradient.
    pub fn push_grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv_t[0][0] * g[0] + self.inv_t[0][1] * g[1],
            self.inv_t[1][0] * g[0] + self.inv_t[1][1] * g[1],
        ]
    }

    /// Physical Hessian `J^-T H J^-1` from a reference Hessian.
    pub fn push_hessian(&self, h: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let it = self.inv_t;
        // tmp = J^-T * H
        let mut tmp = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                tmp[i][j] = it[i][0] * h[0][j] + it[i][1] * h[1][j];
            }
        }
        // out = tmp * J^-1 = tmp * (J^-T)^T
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = tmp[i][0] * it[j][0] + tmp[i][1] * it[j][1];
            }
        }
        out
    }

    /// Physical coordinates of a reference point.
    pub fn map_point(&self, mesh: &Mesh, tri: usize, p: [f64; 2]) -> [f64; 2] {
        let p0 = mesh.vertices[mesh.triangles[tri][0]];
        [
            p0[0] + self.jac[0][0] * p[0] + self.jac[0][1] * p[1],
            p0[1] + self.jac[1][0] * p[0] + self.jac[1][1] * p[1],
        ]
    }
}
