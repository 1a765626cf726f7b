use std::collections::{BTreeMap, VecDeque};

use super::spec::DomainSpec;
use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

#[inline]
pub fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn sub3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale3(s: f64, a: &Vec3) -> Vec3 {
    [s * a[0], s * a[1], s * a[2]]
}

#[inline]
pub fn cross3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub fn norm3(a: &Vec3) -> f64 {
    dot3(a, a).sqrt()
}

/// Geodesic distance between two unit vectors.
pub fn geodesic_distance(a: &Vec3, b: &Vec3) -> f64 {
    norm3(&cross3(a, b)).atan2(dot3(a, b))
}

/// A point of the unit sphere `S^{N−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint {
    coords: Vec<f64>,
}

impl SpherePoint {
    /// Accepts `coords` if its Euclidean norm is 1 within `1e−12`.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let n = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
        if coords.len() < 2 || (n - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("not a unit vector (norm {n})")));
        }
        Ok(Self { coords })
    }

    pub fn normalized(coords: Vec<f64>) -> Result<Self> {
        let n = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
        if coords.len() < 2 || !(n > 0.0) {
            return Err(Error::InvalidArgument("cannot normalize a zero vector".into()));
        }
        Ok(Self { coords: coords.into_iter().map(|c| c / n).collect() })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Padded to three components (the third is zero when `N = 2`).
    pub fn as_vec3(&self) -> Vec3 {
        let mut v = [0.0; 3];
        for (d, c) in v.iter_mut().zip(&self.coords) {
            *d = *c;
        }
        v
    }
}

/// One boundary quadrature entry: a node of `∂D`, the exterior unit
/// co-normal there and the `(N−2)`-dimensional weight it carries.
///
/// Corner nodes of piecewise smooth boundaries appear once per smooth piece,
/// each with that piece's co-normal and share of boundary length.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryNode {
    pub node: usize,
    pub conormal: Vec3,
    pub weight: f64,
}

/// Simplicial mesh of a domain on `S^{N−1}` (`N = 2`: arc segments,
/// `N = 3`: flat triangles with vertices on the sphere).
#[derive(Debug, Clone)]
pub struct SphericalMesh {
    dim: usize,
    nodes: Vec<Vec3>,
    cells: Vec<usize>,
    cell_measures: Vec<f64>,
    node_weights: Vec<f64>,
    boundary: Vec<BoundaryNode>,
    spec: Option<DomainSpec>,
}

impl SphericalMesh {
    /// Assembles and validates a mesh. Triangles are reoriented to have
    /// outward (radial) normals; boundary weights are derived from the cells.
    pub fn new(
        dim: usize,
        nodes: Vec<Vec3>,
        mut cells: Vec<usize>,
        boundary: Vec<(usize, Vec3)>,
        spec: Option<DomainSpec>,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Unsupported(format!("meshes of S^{} are not supported", dim as i64 - 1)));
        }
        let nodes: Vec<Vec3> = nodes
            .into_iter()
            .map(|p| {
                // leave already-unit points untouched so file round trips are exact
                let n = norm3(&p);
                if (n - 1.0).abs() <= f64::EPSILON {
                    p
                } else {
                    scale3(1.0 / n, &p)
                }
            })
            .collect();
        if cells.len() % dim != 0 {
            return Err(Error::InvalidArgument("cell list length is not a multiple of N".into()));
        }
        if let Some(&bad) = cells.iter().find(|&&i| i >= nodes.len()) {
            return Err(Error::InvalidArgument(format!("cell references missing node {bad}")));
        }
        let ncells = cells.len() / dim;
        let mut cell_measures = Vec::with_capacity(ncells);
        for c in 0..ncells {
            let v = &mut cells[c * dim..(c + 1) * dim];
            let m = if dim == 2 {
                geodesic_distance(&nodes[v[0]], &nodes[v[1]])
            } else {
                let (p0, p1, p2) = (nodes[v[0]], nodes[v[1]], nodes[v[2]]);
                let n = cross3(&sub3(&p1, &p0), &sub3(&p2, &p0));
                let centroid = add3(&add3(&p0, &p1), &p2);
                if dot3(&n, &centroid) < 0.0 {
                    v.swap(1, 2);
                }
                0.5 * norm3(&n)
            };
            if !(m > 1e-14) {
                return Err(Error::DegenerateCell { cell: c, reason: format!("measure {m:.3e}") });
            }
            cell_measures.push(m);
        }
        let mut node_weights = vec![0.0; nodes.len()];
        for c in 0..ncells {
            let share = cell_measures[c] / dim as f64;
            for &i in &cells[c * dim..(c + 1) * dim] {
                node_weights[i] += share;
            }
        }
        if let Some(i) = node_weights.iter().position(|&w| w == 0.0) {
            return Err(Error::InvalidArgument(format!("node {i} belongs to no cell")));
        }

        let mut mesh = Self { dim, nodes, cells, cell_measures, node_weights, boundary: Vec::new(), spec };
        mesh.check_connected()?;
        mesh.boundary = mesh.weigh_boundary(boundary)?;
        Ok(mesh)
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); n];
        for c in 0..self.num_cells() {
            let v = self.cell(c);
            for a in 0..v.len() {
                for b in 0..v.len() {
                    if a != b {
                        adj[v[a]].push(v[b]);
                    }
                }
            }
        }
        let mut seen = vec![false; n];
        let mut q = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = q.pop_front() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    q.push_back(w);
                }
            }
        }
        if count != n {
            return Err(Error::InvalidArgument(format!("mesh is disconnected ({count} of {n} nodes reachable)")));
        }
        Ok(())
    }

    /// Edges (N=3) or vertices (N=2) on exactly one cell.
    pub fn boundary_facets(&self) -> Vec<Vec<usize>> {
        let mut count: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for c in 0..self.num_cells() {
            let v = self.cell(c);
            for skip in 0..v.len() {
                let mut f: Vec<usize> = v.iter().enumerate().filter(|&(k, _)| k != skip).map(|(_, &i)| i).collect();
                f.sort_unstable();
                *count.entry(f).or_insert(0) += 1;
            }
        }
        count.into_iter().filter(|&(_, k)| k == 1).map(|(f, _)| f).collect()
    }

    fn weigh_boundary(&self, raw: Vec<(usize, Vec3)>) -> Result<Vec<BoundaryNode>> {
        let mut out: Vec<BoundaryNode> = Vec::with_capacity(raw.len());
        for (node, nu) in raw {
            if node >= self.nodes.len() {
                return Err(Error::InvalidArgument(format!("boundary entry references missing node {node}")));
            }
            let len = norm3(&nu);
            if (len - 1.0).abs() > 1e-8 {
                return Err(Error::InvalidArgument(format!("co-normal at node {node} is not unit (|ν| = {len})")));
            }
            if dot3(&nu, &self.nodes[node]).abs() > 1e-10 {
                return Err(Error::InvalidArgument(format!("co-normal at node {node} is not tangent to the sphere")));
            }
            out.push(BoundaryNode { node, conormal: nu, weight: 0.0 });
        }
        if self.dim == 2 {
            for b in &mut out {
                b.weight = 1.0;
            }
            return Ok(out);
        }
        let mut by_node: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, b) in out.iter().enumerate() {
            by_node.entry(b.node).or_default().push(k);
        }
        for edge in self.boundary_facets() {
            let (a, b) = (edge[0], edge[1]);
            let d = sub3(&self.nodes[b], &self.nodes[a]);
            let len = norm3(&d);
            let t = scale3(1.0 / len, &d);
            for end in [a, b] {
                if let Some(entries) = by_node.get(&end) {
                    let best = entries
                        .iter()
                        .copied()
                        .min_by(|&i, &j| {
                            dot3(&out[i].conormal, &t).abs().total_cmp(&dot3(&out[j].conormal, &t).abs())
                        })
                        .unwrap();
                    out[best].weight += 0.5 * len;
                }
            }
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cell_measures.len()
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Vec3 {
        &self.nodes[i]
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        &self.cells[c * self.dim..(c + 1) * self.dim]
    }

    pub fn cell_measure(&self, c: usize) -> f64 {
        self.cell_measures[c]
    }

    /// Lumped quadrature weights (one share of every incident cell).
    pub fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }

    pub fn boundary(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    pub fn spec(&self) -> Option<&DomainSpec> {
        self.spec.as_ref()
    }

    /// Tangential gradients of the P1 hat functions of cell `c`, in the
    /// order of `self.cell(c)`.
    pub fn basis_gradients(&self, c: usize) -> Vec<Vec3> {
        let v = self.cell(c);
        if self.dim == 2 {
            let (p0, p1) = (self.nodes[v[0]], self.nodes[v[1]]);
            let d = sub3(&p1, &p0);
            let t = scale3(1.0 / norm3(&d), &d);
            let len = self.cell_measures[c];
            vec![scale3(-1.0 / len, &t), scale3(1.0 / len, &t)]
        } else {
            let p0 = self.nodes[v[0]];
            let e1 = sub3(&self.nodes[v[1]], &p0);
            let e2 = sub3(&self.nodes[v[2]], &p0);
            let (g11, g12, g22) = (dot3(&e1, &e1), dot3(&e1, &e2), dot3(&e2, &e2));
            let det = g11 * g22 - g12 * g12;
            // gradient of λ1: (a e1 + b e2) with Gram system rhs (1, 0); λ2: rhs (0, 1)
            let grad = |r1: f64, r2: f64| -> Vec3 {
                let a = (g22 * r1 - g12 * r2) / det;
                let b = (-g12 * r1 + g11 * r2) / det;
                add3(&scale3(a, &e1), &scale3(b, &e2))
            };
            let l1 = grad(1.0, 0.0);
            let l2 = grad(0.0, 1.0);
            let l0 = scale3(-1.0, &add3(&l1, &l2));
            vec![l0, l1, l2]
        }
    }

    /// Per-cell gradient of a nodal P1 field.
    pub fn cell_gradients(&self, f: &[f64]) -> Vec<Vec3> {
        (0..self.num_cells())
            .map(|c| {
                // differences from the first vertex: exactly zero for constants
                let g = self.basis_gradients(c);
                let v = self.cell(c);
                v.iter()
                    .zip(&g)
                    .skip(1)
                    .fold([0.0; 3], |acc, (&i, gi)| add3(&acc, &scale3(f[i] - f[v[0]], gi)))
            })
            .collect()
    }

    /// Nodal gradient recovered by measure-weighted averaging of the incident
    /// cell gradients, projected onto the tangent plane at the node.
    pub fn recovered_gradients(&self, f: &[f64]) -> Vec<Vec3> {
        let cg = self.cell_gradients(f);
        let mut acc = vec![[0.0; 3]; self.num_nodes()];
        let mut wsum = vec![0.0; self.num_nodes()];
        for c in 0..self.num_cells() {
            let m = self.cell_measures[c];
            for &i in self.cell(c) {
                acc[i] = add3(&acc[i], &scale3(m, &cg[c]));
                wsum[i] += m;
            }
        }
        acc.iter()
            .zip(&wsum)
            .zip(&self.nodes)
            .map(|((g, w), x)| {
                let g = scale3(1.0 / w, g);
                sub3(&g, &scale3(dot3(&g, x), x))
            })
            .collect()
    }

    /// Node-to-node adjacency through shared cells (sorted, without self).
    pub fn node_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for c in 0..self.num_cells() {
            let v = self.cell(c);
            for &a in v {
                for &b in v {
                    if a != b {
                        adj[a].push(b);
                    }
                }
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    pub(crate) fn check_field(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.num_nodes() {
            return Err(Error::SizeMismatch { expected: self.num_nodes(), got: f.len() });
        }
        Ok(())
    }

    /// Nodal interpolant of `x · e`.
    pub fn linear_field(&self, e: &Vec3) -> Vec<f64> {
        self.nodes.iter().map(|x| dot3(x, e)).collect()
    }
}

/// `H_{N−1}(D)`: total measure of the cells.
pub fn surface_measure(mesh: &SphericalMesh) -> f64 {
    mesh.cell_measures.iter().sum()
}

/// Volume of the unit ball in `R^m`: `ω_0 = 1`, `ω_1 = 2`, `ω_m = 2π ω_{m−2}/m`.
pub fn unit_ball_volume(m: usize) -> f64 {
    match m {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI * unit_ball_volume(m - 2) / m as f64,
    }
}

/// `H_{N−1}(S^{N−1}_+)`, half the area `N ω_N` of the unit sphere.
pub fn hemisphere_measure(n: usize) -> f64 {
    assert!(n >= 2, "hemisphere_measure needs N >= 2");
    0.5 * n as f64 * unit_ball_volume(n)
}

/// Lumped quadrature of a nodal field over `D`.
pub fn integrate_on_domain(mesh: &SphericalMesh, f: &[f64]) -> Result<f64> {
    mesh.check_field(f)?;
    Ok(mesh.node_weights.iter().zip(f).map(|(w, v)| w * v).sum())
}

/// Quadrature over `∂D` of a field given per boundary entry (same order as
/// `mesh.boundary()`).
pub fn integrate_on_boundary(mesh: &SphericalMesh, g: &[f64]) -> Result<f64> {
    if mesh.boundary.is_empty() {
        return Err(Error::EmptyBoundary);
    }
    if g.len() != mesh.boundary.len() {
        return Err(Error::SizeMismatch { expected: mesh.boundary.len(), got: g.len() });
    }
    Ok(mesh.boundary.iter().zip(g).map(|(b, v)| b.weight * v).sum())
}

/// Boundary quadrature of a function of position and co-normal.
pub fn integrate_boundary_fn(mesh: &SphericalMesh, f: impl Fn(&Vec3, &Vec3) -> f64) -> Result<f64> {
    if mesh.boundary.is_empty() {
        return Err(Error::EmptyBoundary);
    }
    Ok(mesh.boundary.iter().map(|b| b.weight * f(&mesh.nodes[b.node], &b.conormal)).sum())
}
