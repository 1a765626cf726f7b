//! Structured meshes of the analytic presets.
//!
//! Caps are meshed by concentric geodesic rings around their centre, tubes by
//! a latitude/longitude grid, and tunnels by two ring-meshed caps joined by a
//! mapped strip whose end columns are the caps' own boundary nodes. Every
//! boundary node lies exactly on the analytic boundary and carries the
//! analytic co-normal.

use std::f64::consts::{FRAC_PI_2, PI};

use super::mesh::{add3, dot3, scale3, SphericalMesh, Vec3};
use super::spec::DomainSpec;
use super::io::read_mesh;
use crate::error::{Error, Result};

const TAU: f64 = 2.0 * PI;

/// Builds the mesh of `spec` with target edge length `h`.
pub fn build_domain(spec: &DomainSpec, h: f64) -> Result<SphericalMesh> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidSpec(format!("mesh size h must be positive, got {h}")));
    }
    spec.validate()?;
    match *spec {
        DomainSpec::Arc { beta } => build_arc(beta, h),
        DomainSpec::Cap { theta, r } => {
            let frame = CapFrame::tilted(theta, r.acos());
            let mut m = MeshParts::default();
            let ring = m.cap(&frame, h, None);
            let b = ring.iter().map(|&i| (i, frame.conormal(&m.nodes[i]))).collect();
            m.finish(b, spec.clone())
        }
        DomainSpec::Hemisphere => {
            let frame = CapFrame::tilted(0.0, FRAC_PI_2);
            let mut m = MeshParts::default();
            let ring = m.cap(&frame, h, None);
            let b = ring.iter().map(|&i| (i, frame.conormal(&m.nodes[i]))).collect();
            m.finish(b, spec.clone())
        }
        DomainSpec::Tube { r, .. } => build_tube(r, h, spec),
        DomainSpec::Tunnel { theta, r, eps } => build_tunnel(theta, r, eps, h, spec),
        DomainSpec::MeshFile { ref path } => read_mesh(path),
    }
}

fn segments(len: f64, h: f64) -> usize {
    ((len / h) - 1e-9).ceil().max(1.0) as usize
}

fn build_arc(beta: f64, h: f64) -> Result<SphericalMesh> {
    let n = segments(beta, h);
    let nodes: Vec<Vec3> = (0..=n)
        .map(|i| {
            let psi = -0.5 * beta + beta * i as f64 / n as f64;
            [psi.cos(), psi.sin(), 0.0]
        })
        .collect();
    let cells: Vec<usize> = (0..n).flat_map(|i| [i, i + 1]).collect();
    let a = 0.5 * beta;
    let boundary = vec![(0, [a.sin(), a.cos(), 0.0]), (n, [-a.sin(), a.cos(), 0.0])];
    SphericalMesh::new(2, nodes, cells, boundary, Some(DomainSpec::Arc { beta }))
}

/// Orthonormal frame `(center, t1, t2)` of a geodesic disc of radius `rho`.
struct CapFrame {
    center: Vec3,
    t1: Vec3,
    t2: Vec3,
    rho: f64,
}

impl CapFrame {
    /// Cap centred at `e₁ sin θ + e₃ cos θ`.
    fn tilted(theta: f64, rho: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self { center: [s, 0.0, c], t1: [c, 0.0, -s], t2: [0.0, 1.0, 0.0], rho }
    }

    fn point(&self, rho: f64, a: f64) -> Vec3 {
        let (sr, cr) = rho.sin_cos();
        let (sa, ca) = a.sin_cos();
        add3(&scale3(cr, &self.center), &add3(&scale3(sr * ca, &self.t1), &scale3(sr * sa, &self.t2)))
    }

    fn angle_of(&self, x: &Vec3) -> f64 {
        dot3(x, &self.t2).atan2(dot3(x, &self.t1)).rem_euclid(TAU)
    }

    /// Exterior co-normal `(r x − c)/√(1−r²)` with `r = cos ρ`.
    fn conormal(&self, x: &Vec3) -> Vec3 {
        let r = self.rho.cos();
        let s = (1.0 - r * r).sqrt();
        let v = add3(&scale3(r, x), &scale3(-1.0, &self.center));
        scale3(1.0 / s, &v)
    }
}

#[derive(Default)]
struct MeshParts {
    nodes: Vec<Vec3>,
    tris: Vec<usize>,
}

impl MeshParts {
    fn push(&mut self, p: Vec3) -> usize {
        self.nodes.push(p);
        self.nodes.len() - 1
    }

    fn tri(&mut self, a: usize, b: usize, c: usize) {
        self.tris.extend_from_slice(&[a, b, c]);
    }

    /// Ring mesh of a cap. `outer` optionally prescribes the polar angles of
    /// the boundary ring (in the returned order). Returns boundary node ids.
    fn cap(&mut self, f: &CapFrame, h: f64, outer: Option<&[f64]>) -> Vec<usize> {
        let nr = segments(f.rho, h);
        let dr = f.rho / nr as f64;
        let center = self.push(f.center);
        let mut prev: Vec<(usize, f64)> = vec![(center, 0.0)];
        let mut boundary = Vec::new();
        for i in 1..=nr {
            let rho = dr * i as f64;
            let angles: Vec<f64> = match outer {
                Some(a) if i == nr => a.to_vec(),
                _ => {
                    // even ring sizes keep the mesh symmetric under both coordinate reflections
                    let m = (2 * ((TAU * rho.sin() / dr / 2.0).round() as usize)).max(6);
                    let off = if i % 2 == 1 { 0.0 } else { 0.5 * TAU / m as f64 };
                    (0..m).map(|k| (off + TAU * k as f64 / m as f64).rem_euclid(TAU)).collect()
                }
            };
            let ring: Vec<(usize, f64)> = angles
                .iter()
                .map(|&a| (self.push(f.point(rho, a)), a.rem_euclid(TAU)))
                .collect();
            if i == nr {
                boundary = ring.iter().map(|&(id, _)| id).collect();
            }
            self.stitch(&prev, &ring);
            prev = ring;
        }
        boundary
    }

    /// Triangulates the annulus between two closed rings given as
    /// `(node, polar angle)` lists. A single-node inner ring gives a fan.
    fn stitch(&mut self, inner: &[(usize, f64)], outer: &[(usize, f64)]) {
        let mut outer_sorted = outer.to_vec();
        outer_sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
        if inner.len() == 1 {
            let c = inner[0].0;
            let m = outer_sorted.len();
            for k in 0..m {
                self.tri(c, outer_sorted[k].0, outer_sorted[(k + 1) % m].0);
            }
            return;
        }
        let mut inner_sorted = inner.to_vec();
        inner_sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (n, m) = (inner_sorted.len(), outer_sorted.len());
        let a0 = inner_sorted[0].1;
        let ain: Vec<f64> = (0..=n).map(|k| inner_sorted[k % n].1 + if k == n { TAU } else { 0.0 }).collect();
        // outer start: nearest angle to a0
        let dist = |a: f64| {
            let d = (a - a0).rem_euclid(TAU);
            d.min(TAU - d)
        };
        let j0 = (0..m).min_by(|&x, &y| dist(outer_sorted[x].1).total_cmp(&dist(outer_sorted[y].1))).unwrap();
        let mut aout = Vec::with_capacity(m + 1);
        let mut base = outer_sorted[j0].1;
        if base - a0 > PI {
            base -= TAU;
        } else if a0 - base > PI {
            base += TAU;
        }
        aout.push(base);
        for k in 1..=m {
            let mut a = outer_sorted[(j0 + k) % m].1;
            while a <= aout[k - 1] {
                a += TAU;
            }
            aout.push(a);
        }
        let (mut i, mut j) = (0usize, 0usize);
        while i < n || j < m {
            let cur_in = inner_sorted[i % n].0;
            let cur_out = outer_sorted[(j0 + j) % m].0;
            let advance_inner = j == m || (i < n && ain[i + 1] < aout[j + 1]);
            if advance_inner {
                let next_in = inner_sorted[(i + 1) % n].0;
                self.tri(cur_in, next_in, cur_out);
                i += 1;
            } else {
                let next_out = outer_sorted[(j0 + j + 1) % m].0;
                self.tri(cur_in, next_out, cur_out);
                j += 1;
            }
        }
    }

    fn finish(self, boundary: Vec<(usize, Vec3)>, spec: DomainSpec) -> Result<SphericalMesh> {
        SphericalMesh::new(3, self.nodes, self.tris, boundary, Some(spec))
    }
}

fn build_tube(r: f64, h: f64, spec: &DomainSpec) -> Result<SphericalMesh> {
    let ne = segments(2.0 * r, h);
    let np = segments(TAU, h).max(3);
    let mut m = MeshParts::default();
    let mut boundary = Vec::new();
    for j in 0..=ne {
        let eta = -r + 2.0 * r * j as f64 / ne as f64;
        for k in 0..np {
            let psi = TAU * k as f64 / np as f64;
            let (se, ce) = eta.sin_cos();
            let (sp, cp) = psi.sin_cos();
            let id = m.push([ce * cp, ce * sp, se]);
            if j == 0 || j == ne {
                // x = y cos r + z sin r  →  ν = −y sin r + z cos r
                let z = if j == 0 { -1.0 } else { 1.0 };
                let (sr, cr) = r.sin_cos();
                boundary.push((id, [-cp * sr, -sp * sr, z * cr]));
            }
        }
    }
    let id = |j: usize, k: usize| j * np + (k % np);
    for j in 0..ne {
        for k in 0..np {
            if (j + k) % 2 == 0 {
                m.tri(id(j, k), id(j, k + 1), id(j + 1, k + 1));
                m.tri(id(j, k), id(j + 1, k + 1), id(j + 1, k));
            } else {
                m.tri(id(j, k), id(j, k + 1), id(j + 1, k));
                m.tri(id(j, k + 1), id(j + 1, k + 1), id(j + 1, k));
            }
        }
    }
    m.finish(boundary, spec.clone())
}

/// Strip chart: `x(ψ, η) = (cos η sin ψ, sin η, cos η cos ψ)`; caps sit at
/// `ψ = ±θ`, `η = 0`, the walls at `sin η = ±eps`.
fn strip_point(psi: f64, eta: f64) -> Vec3 {
    let (sp, cp) = psi.sin_cos();
    let (se, ce) = eta.sin_cos();
    [ce * sp, se, ce * cp]
}

fn build_tunnel(theta: f64, r: f64, eps: f64, h: f64, spec: &DomainSpec) -> Result<SphericalMesh> {
    let rho = r.acos();
    let eta_w = eps.asin();
    let rows = segments(2.0 * eta_w, h).max(1);
    let etas: Vec<f64> = (0..=rows).map(|j| -eta_w + 2.0 * eta_w * j as f64 / rows as f64).collect();
    // strip ends on the cap circles: cos η cos(ψ ∓ θ) = r
    let psi_right = |eta: f64| theta - (r / eta.cos()).acos();
    let psi_left = |eta: f64| -psi_right(eta);
    if psi_right(eta_w) <= 0.0 || psi_right(0.0) <= 0.0 {
        return Err(Error::InvalidSpec("tunnel does not connect the caps: caps reach the symmetry plane".into()));
    }
    let cols = segments(psi_right(0.0) - psi_left(0.0), h).max(2);

    let right = CapFrame { center: [theta.sin(), 0.0, theta.cos()], t1: [theta.cos(), 0.0, -theta.sin()], t2: [0.0, 1.0, 0.0], rho };
    let left = CapFrame { center: [-theta.sin(), 0.0, theta.cos()], t1: [theta.cos(), 0.0, theta.sin()], t2: [0.0, 1.0, 0.0], rho };

    let iface_right: Vec<Vec3> = etas.iter().map(|&e| strip_point(psi_right(e), e)).collect();
    let iface_left: Vec<Vec3> = etas.iter().map(|&e| strip_point(psi_left(e), e)).collect();

    let outer_angles = |f: &CapFrame, iface: &[Vec3]| -> Vec<f64> {
        let mut a: Vec<f64> = iface.iter().map(|x| f.angle_of(x)).collect();
        // unwrap the interface arc so it is monotone
        for k in 1..a.len() {
            while a[k] - a[k - 1] > PI {
                a[k] -= TAU;
            }
            while a[k - 1] - a[k] > PI {
                a[k] += TAU;
            }
        }
        let (lo, hi) = (a[0].min(a[a.len() - 1]), a[0].max(a[a.len() - 1]));
        let gap = TAU - (hi - lo);
        let q = segments(gap * rho.sin(), h).max(3);
        let mut out = a.clone();
        out.extend((1..q).map(|k| hi + gap * k as f64 / q as f64));
        out.into_iter().map(|x| x.rem_euclid(TAU)).collect()
    };

    let mut m = MeshParts::default();
    let ring_r = m.cap(&right, h, Some(&outer_angles(&right, &iface_right)));
    let ring_l = m.cap(&left, h, Some(&outer_angles(&left, &iface_left)));
    // the prescribed interface angles come first in each ring, in row order
    let ncorner = rows + 1;
    let grid_id = {
        let mut ids = vec![vec![0usize; cols + 1]; rows + 1];
        for (j, row) in ids.iter_mut().enumerate() {
            row[0] = ring_l[j];
            row[cols] = ring_r[j];
            let (a, b) = (psi_left(etas[j]), psi_right(etas[j]));
            for (i, slot) in row.iter_mut().enumerate().take(cols).skip(1) {
                let psi = a + (b - a) * i as f64 / cols as f64;
                *slot = m.push(strip_point(psi, etas[j]));
            }
        }
        ids
    };
    for j in 0..rows {
        for i in 0..cols {
            let (a, b, c, d) = (grid_id[j][i], grid_id[j][i + 1], grid_id[j + 1][i + 1], grid_id[j + 1][i]);
            m.tri(a, b, c);
            m.tri(a, c, d);
        }
    }

    let mut boundary = Vec::new();
    for (ring, frame) in [(&ring_r, &right), (&ring_l, &left)] {
        for (k, &id) in ring.iter().enumerate() {
            // interface nodes strictly between the two corners are interior
            if k > 0 && k < ncorner - 1 {
                continue;
            }
            boundary.push((id, frame.conormal(&m.nodes[id])));
        }
    }
    let s = (1.0 - eps * eps).sqrt();
    for (j, sign) in [(0usize, -1.0), (rows, 1.0)] {
        for &id in &grid_id[j] {
            let x = m.nodes[id];
            let nu = [-eps * x[0] / s, (sign - eps * x[1]) / s, -eps * x[2] / s];
            boundary.push((id, nu));
        }
    }
    m.finish(boundary, spec.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere_geom::mesh::{cross3, norm3, sub3, surface_measure};

    #[test]
    fn arc_grid_has_expected_nodes() {
        let beta = 1.5 * PI;
        let m = build_domain(&DomainSpec::Arc { beta }, beta / 512.0).unwrap();
        assert_eq!(m.num_nodes(), 513);
        assert_eq!(m.boundary().len(), 2);
        assert!((surface_measure(&m) - beta).abs() < 1e-12);
    }

    #[test]
    fn triangles_are_outward_and_positive() {
        for spec in [
            DomainSpec::Cap { theta: 0.4, r: 0.5 },
            DomainSpec::Hemisphere,
            DomainSpec::Tube { k: 1, r: 0.5 },
            DomainSpec::Tunnel { theta: 50f64.to_radians(), r: 0.85, eps: 0.05 },
        ] {
            let m = build_domain(&spec, 0.08).unwrap();
            for c in 0..m.num_cells() {
                let v = m.cell(c);
                let (p0, p1, p2) = (m.node(v[0]), m.node(v[1]), m.node(v[2]));
                let n = cross3(&sub3(p1, p0), &sub3(p2, p0));
                assert!(dot3(&n, p0) > 0.0, "{spec}: cell {c} inverted");
                assert!(norm3(&n) > 1e-6);
            }
        }
    }

    #[test]
    fn tunnel_corners_carry_two_conormals() {
        let spec = DomainSpec::Tunnel { theta: 50f64.to_radians(), r: 0.85, eps: 0.05 };
        let m = build_domain(&spec, 0.05).unwrap();
        let mut counts = std::collections::BTreeMap::new();
        for b in m.boundary() {
            *counts.entry(b.node).or_insert(0) += 1;
        }
        assert_eq!(counts.values().filter(|&&c| c == 2).count(), 4);
        assert!(m.boundary().iter().all(|b| b.weight > 0.0));
    }
}
