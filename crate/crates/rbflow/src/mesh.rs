//! Structured triangulation of the unit reference square and the affine
//! geometric map to the current rectangular domain.
//!
//! The reference domain is `(0,1)^2`. Each grid cell is split along the same
//! diagonal (lower-left to upper-right), so element sizes are deterministic.
//! The top side `y = 1` carries the [`BoundaryTag::Lid`] tag, everything else
//! is [`BoundaryTag::Wall`].

use crate::{Error, Params};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Lid,
    Wall,
}

/// An edge of the triangulation with its incident triangles.
#[derive(Debug, Clone)]
pub struct Edge {
    /// Vertex indices, `v[0] < v[1]`.
    pub vertices: [usize; 2],
    /// First incident triangle.
    pub tri_left: usize,
    /// Second incident triangle, `None` on the boundary.
    pub tri_right: Option<usize>,
    /// Set only for boundary edges.
    pub boundary_tag: Option<BoundaryTag>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.tri_right.is_none()
    }
}

/// Triangulation of the reference square with boundary tags and element sizes.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex index triples.
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// Edge indices of each triangle, local edges `(0,1), (1,2), (2,0)`.
    pub tri_edges: Vec<[usize; 3]>,
    /// Circumscribed diameter per triangle.
    pub h_k: Vec<f64>,
    /// Max of `h_k`.
    pub h: f64,
}

/// Builds the structured criss-cross-free triangulation of `(0,1)^2` with
/// `nx * ny` cells, each split along the lower-left to upper-right diagonal.
pub fn build_structured_mesh(nx: usize, ny: usize) -> Mesh {
    assert!(nx >= 1 && ny >= 1, "mesh resolution must be at least 1x1");
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([i as f64 / nx as f64, j as f64 / ny as f64]);
        }
    }

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }

    // Edge table keyed by sorted vertex pair.
    let mut edge_of = std::collections::HashMap::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut tri_edges = Vec::with_capacity(triangles.len());
    for (t, tri) in triangles.iter().enumerate() {
        let mut eids = [0usize; 3];
        for (le, &(va, vb)) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])]
            .iter()
            .enumerate()
        {
            let key = if va < vb { (va, vb) } else { (vb, va) };
            let eid = *edge_of.entry(key).or_insert_with(|| {
                edges.push(Edge {
                    vertices: [key.0, key.1],
                    tri_left: t,
                    tri_right: None,
                    boundary_tag: None,
                });
                edges.len() - 1
            });
            if edges[eid].tri_left != t {
                edges[eid].tri_right = Some(t);
            }
            eids[le] = eid;
        }
        tri_edges.push(eids);
    }

    for edge in edges.iter_mut() {
        if edge.tri_right.is_none() {
            let [a, b] = edge.vertices;
            let on_lid = vertices[a][1] == 1.0 && vertices[b][1] == 1.0;
            edge.boundary_tag = Some(if on_lid { BoundaryTag::Lid } else { BoundaryTag::Wall });
        }
    }

    let h_k: Vec<f64> = triangles
        .iter()
        .map(|tri| circumdiameter(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]))
        .collect();
    let h = h_k.iter().cloned().fold(0.0, f64::max);

    Mesh { vertices, triangles, edges, tri_edges, h_k, h }
}

fn circumdiameter(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> f64 {
    let la = ((p1[0] - p2[0]).powi(2) + (p1[1] - p2[1]).powi(2)).sqrt();
    let lb = ((p0[0] - p2[0]).powi(2) + (p0[1] - p2[1]).powi(2)).sqrt();
    let lc = ((p0[0] - p1[0]).powi(2) + (p0[1] - p1[1]).powi(2)).sqrt();
    let area = signed_area(p0, p1, p2);
    la * lb * lc / (2.0 * area.abs())
}

pub fn signed_area(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> f64 {
    0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Writes vertices, triangles and tagged boundary edges as plain text.
    pub fn export_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "vertices {}", self.vertices.len())?;
        for v in &self.vertices {
            writeln!(w, "{} {}", v[0], v[1])?;
        }
        writeln!(w, "triangles {}", self.triangles.len())?;
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        let boundary: Vec<&Edge> = self.edges.iter().filter(|e| e.is_boundary()).collect();
        writeln!(w, "boundary_edges {}", boundary.len())?;
        for e in boundary {
            let tag = match e.boundary_tag.unwrap() {
                BoundaryTag::Lid => "lid",
                BoundaryTag::Wall => "wall",
            };
            writeln!(w, "{} {} {}", e.vertices[0], e.vertices[1], tag)?;
        }
        Ok(())
    }
}

/// Geometric map `T(x, y; mu) = (mu2 * x, y)` from the reference square.
#[derive(Debug, Clone, Copy)]
pub struct GeoMap {
    pub mu2: f64,
}

impl GeoMap {
    pub fn jacobian(&self) -> [[f64; 2]; 2] {
        [[self.mu2, 0.0], [0.0, 1.0]]
    }

    pub fn det(&self) -> f64 {
        self.mu2
    }
}

/// Parameter tensors induced by the geometric map: the viscosity tensor
/// `kappa = nu J^-1 J^-T |J|`, the divergence weight `chi = J^-1 |J|` and
/// the mass weight `pi = |J|`.
#[derive(Debug, Clone, Copy)]
pub struct ParamTensors {
    pub kappa: [[f64; 2]; 2],
    pub chi: [[f64; 2]; 2],
    pub pi: f64,
}

pub fn param_tensors(nu: f64, mu2: f64) -> Result<ParamTensors, Error> {
    let p = Params::new(nu, mu2)?;
    Ok(ParamTensors {
        kappa: [[p.nu / p.mu2, 0.0], [0.0, p.nu * p.mu2]],
        chi: [[1.0, 0.0], [0.0, p.mu2]],
        pi: p.mu2,
    })
}
