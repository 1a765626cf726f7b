//! Calculus of radial graphs `Γ_φ = {e^{φ(q)} q : q ∈ D}`: volume and
//! relative perimeter of `Ω_φ`, their derivatives, the geometry of `Γ_φ`,
//! and the criticality residuals of the constrained perimeter.
//!
//! All functionals are evaluated with the lumped nodal quadrature of the
//! mesh and the per-cell gradient of the P1 interpolant of `φ`; derivatives
//! are the exact derivatives of those discrete functionals.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sphere_geom::{add3, cross3, dot3, geodesic_distance, norm3, scale3, sub3, SphericalMesh, Vec3};

#[derive(Debug, Clone)]
pub struct RadialGraph<'a> {
    mesh: &'a SphericalMesh,
    phi: Vec<f64>,
}

impl<'a> RadialGraph<'a> {
    pub fn new(mesh: &'a SphericalMesh, phi: Vec<f64>) -> Result<Self> {
        mesh.check_field(&phi)?;
        if let Some(i) = phi.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(format!("phi is not finite at node {i}")));
        }
        Ok(Self { mesh, phi })
    }

    pub fn constant(mesh: &'a SphericalMesh, value: f64) -> Self {
        Self { mesh, phi: vec![value; mesh.num_nodes()] }
    }

    pub fn mesh(&self) -> &'a SphericalMesh {
        self.mesh
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn into_phi(self) -> Vec<f64> {
        self.phi
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    /// Per-cell tangential gradient of `φ`.
    pub fn grad_phi(&self) -> Vec<Vec3> {
        self.mesh.cell_gradients(&self.phi)
    }

    /// `φ + s`.
    pub fn shifted(&self, s: f64) -> RadialGraph<'a> {
        RadialGraph { mesh: self.mesh, phi: self.phi.iter().map(|p| p + s).collect() }
    }

    /// `φ + t v`.
    pub fn perturbed(&self, t: f64, v: &[f64]) -> RadialGraph<'a> {
        RadialGraph { mesh: self.mesh, phi: self.phi.iter().zip(v).map(|(p, d)| p + t * d).collect() }
    }

    fn exp_weights(&self, k: f64) -> Vec<f64> {
        self.phi.iter().map(|p| (k * p).exp()).collect()
    }
}

fn finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Overflow(what.into()))
    }
}

/// `V(φ) = (1/N) ∫_D e^{Nφ}`.
pub fn volume(g: &RadialGraph) -> Result<f64> {
    let n = g.dim() as f64;
    let s: f64 = g.mesh.node_weights().iter().zip(&g.phi).map(|(w, p)| w * (n * p).exp()).sum();
    finite(s / n, "volume")
}

/// `V'(φ)[v] = ∫_D e^{Nφ} v`.
pub fn volume_grad(g: &RadialGraph, v: &[f64]) -> Result<f64> {
    g.mesh.check_field(v)?;
    Ok(volume_gradient_vector(g).iter().zip(v).map(|(a, b)| a * b).sum())
}

/// Nodal representation of `V'(φ)`: `m_i e^{Nφ_i}`.
pub fn volume_gradient_vector(g: &RadialGraph) -> Vec<f64> {
    let n = g.dim() as f64;
    g.mesh.node_weights().iter().zip(&g.phi).map(|(w, p)| w * (n * p).exp()).collect()
}

/// `V''(φ)[v, w] = N ∫_D e^{Nφ} v w`.
pub fn volume_hess(g: &RadialGraph, v: &[f64], w: &[f64]) -> Result<f64> {
    g.mesh.check_field(v)?;
    g.mesh.check_field(w)?;
    let n = g.dim() as f64;
    Ok(n * volume_gradient_vector(g).iter().zip(v).zip(w).map(|((a, b), c)| a * b * c).sum::<f64>())
}

struct CellTerms {
    /// `A_c · mean_{i∈c} e^{(N−1)φ_i}`
    area_weight: f64,
    grad: Vec3,
    w: f64,
}

fn cell_terms(g: &RadialGraph, e: &[f64]) -> Vec<CellTerms> {
    let grads = g.grad_phi();
    (0..g.mesh.num_cells())
        .map(|c| {
            let v = g.mesh.cell(c);
            let mean = v.iter().map(|&i| e[i]).sum::<f64>() / v.len() as f64;
            let grad = grads[c];
            CellTerms { area_weight: g.mesh.cell_measure(c) * mean, grad, w: (1.0 + dot3(&grad, &grad)).sqrt() }
        })
        .collect()
}

/// `P(φ) = ∫_D e^{(N−1)φ} √(1+|∇φ|²)`.
pub fn perimeter(g: &RadialGraph) -> Result<f64> {
    let e = g.exp_weights(g.dim() as f64 - 1.0);
    finite(cell_terms(g, &e).iter().map(|t| t.area_weight * t.w).sum(), "perimeter")
}

/// Nodal representation of `P'(φ)`, i.e. `P'(φ)[ψ_i]` for every hat function.
pub fn perimeter_gradient_vector(g: &RadialGraph) -> Vec<f64> {
    let m = g.dim() as f64 - 1.0;
    let e = g.exp_weights(m);
    let terms = cell_terms(g, &e);
    let mut out = vec![0.0; g.mesh.num_nodes()];
    for (c, t) in terms.iter().enumerate() {
        let v = g.mesh.cell(c);
        let area = g.mesh.cell_measure(c);
        let d = v.len() as f64;
        let bg = g.mesh.basis_gradients(c);
        for (k, &i) in v.iter().enumerate() {
            out[i] += area * m * e[i] / d * t.w + t.area_weight * dot3(&t.grad, &bg[k]) / t.w;
        }
    }
    out
}

/// `P'(φ)[v]`.
pub fn perimeter_grad(g: &RadialGraph, v: &[f64]) -> Result<f64> {
    g.mesh.check_field(v)?;
    Ok(perimeter_gradient_vector(g).iter().zip(v).map(|(a, b)| a * b).sum())
}

/// `P''(φ)[v, w]` of the discrete perimeter.
pub fn perimeter_hess(g: &RadialGraph, v: &[f64], w: &[f64]) -> Result<f64> {
    g.mesh.check_field(v)?;
    g.mesh.check_field(w)?;
    let m = g.dim() as f64 - 1.0;
    let e = g.exp_weights(m);
    let terms = cell_terms(g, &e);
    let gv = g.mesh.cell_gradients(v);
    let gw = g.mesh.cell_gradients(w);
    let mut s = 0.0;
    for (c, t) in terms.iter().enumerate() {
        let idx = g.mesh.cell(c);
        let area = g.mesh.cell_measure(c);
        let d = idx.len() as f64;
        let a1v = idx.iter().map(|&i| m * e[i] * v[i]).sum::<f64>() / d;
        let a1w = idx.iter().map(|&i| m * e[i] * w[i]).sum::<f64>() / d;
        let a2 = idx.iter().map(|&i| m * m * e[i] * v[i] * w[i]).sum::<f64>() / d;
        let (pv, pw) = (dot3(&t.grad, &gv[c]), dot3(&t.grad, &gw[c]));
        let s1v = pv / t.w;
        let s1w = pw / t.w;
        let s2 = dot3(&gv[c], &gw[c]) / t.w - pv * pw / t.w.powi(3);
        s += area * (a2 * t.w + a1v * s1w + a1w * s1v) + t.area_weight * s2;
    }
    Ok(s)
}

/// `P''(0)[v,v] − (N−1) V''(0)[v,v]`: second variation of the perimeter on
/// the volume constraint at the unit sector.
pub fn perimeter_constrained_second_variation_at_zero(mesh: &SphericalMesh, v: &[f64]) -> Result<f64> {
    let g = RadialGraph::constant(mesh, 0.0);
    let lambda = mesh.dim() as f64 - 1.0;
    Ok(perimeter_hess(&g, v, v)? - lambda * volume_hess(&g, v, v)?)
}

/// Geometry of `Γ_φ` at the image of one node.
#[derive(Debug, Clone, Serialize)]
pub struct PointGeometry {
    pub node: usize,
    /// Exterior unit normal `(q − ∇φ)/√(1+|∇φ|²)`.
    pub normal: Vec3,
    /// Induced metric, inverse and second fundamental form in an orthonormal
    /// frame of `T_q S^{N−1}` (top-left `(N−1)×(N−1)` block used).
    pub metric: [[f64; 2]; 2],
    pub metric_inv: [[f64; 2]; 2],
    pub second_form: [[f64; 2]; 2],
    /// `H = g^{ij} II_ij / (N−1)`.
    pub mean_curvature: f64,
    /// `H` from the divergence form, at interior nodes.
    pub mean_curvature_div: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphGeometry {
    pub points: Vec<PointGeometry>,
}

impl GraphGeometry {
    pub fn mean_curvatures(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_curvature).collect()
    }
}

/// Orthonormal tangent frame at `q` (one vector for `N = 2`).
fn tangent_frame(q: &Vec3, dim: usize) -> Vec<Vec3> {
    if dim == 2 {
        return vec![[-q[1], q[0], 0.0]];
    }
    let axis = (0..3).min_by(|&a, &b| q[a].abs().total_cmp(&q[b].abs())).unwrap();
    let mut a = [0.0; 3];
    a[axis] = 1.0;
    let t1 = sub3(&a, &scale3(dot3(&a, q), q));
    let t1 = scale3(1.0 / norm3(&t1), &t1);
    vec![t1, cross3(q, &t1)]
}

/// Geodesic normal coordinates of `x` around `q` in `frame`.
fn log_map(q: &Vec3, x: &Vec3, frame: &[Vec3]) -> Vec<f64> {
    let d = geodesic_distance(q, x);
    let t = sub3(x, &scale3(dot3(x, q), q));
    let tn = norm3(&t);
    let s = if tn > 0.0 { d / tn } else { 0.0 };
    frame.iter().map(|f| s * dot3(&t, f)).collect()
}

/// Least-squares quadratic fit of `φ∘exp_q` over a two-ring patch; returns
/// gradient and covariant Hessian in the frame.
fn local_fit(mesh: &SphericalMesh, phi: &[f64], node: usize, patch: &[usize], frame: &[Vec3]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let q = mesh.node(node);
    let m = frame.len();
    let ncol = 1 + m + m * (m + 1) / 2;
    let mut rows = Vec::with_capacity(patch.len() * ncol);
    let mut rhs = Vec::with_capacity(patch.len());
    for &j in patch {
        let xi = log_map(q, mesh.node(j), frame);
        rows.push(1.0);
        rows.extend_from_slice(&xi);
        for a in 0..m {
            for b in a..m {
                rows.push(if a == b { 0.5 * xi[a] * xi[a] } else { xi[a] * xi[b] });
            }
        }
        rhs.push(phi[j] - phi[node]);
    }
    if patch.len() < ncol {
        return Err(Error::Unsupported(format!("node {node} has too few neighbours for a quadratic fit")));
    }
    let a = DMatrix::from_row_slice(patch.len(), ncol, &rows);
    let b = DVector::from_vec(rhs);
    let sol = a.svd(true, true).solve(&b, 1e-14).map_err(|e| Error::Solver(e.to_string()))?;
    let grad: Vec<f64> = (0..m).map(|k| sol[1 + k]).collect();
    let mut hess = DMatrix::zeros(m, m);
    let mut k = 1 + m;
    for a in 0..m {
        for b in a..m {
            hess[(a, b)] = sol[k];
            hess[(b, a)] = sol[k];
            k += 1;
        }
    }
    Ok((grad, hess))
}

fn two_ring(adj: &[Vec<usize>], i: usize) -> Vec<usize> {
    let mut p: Vec<usize> = vec![i];
    for &j in &adj[i] {
        p.push(j);
        p.extend_from_slice(&adj[j]);
    }
    p.sort_unstable();
    p.dedup();
    p
}

/// Normal, metric, second fundamental form and mean curvature of `Γ_φ` at
/// every node. Diagnostic only: derivatives come from local quadratic fits.
pub fn graph_geometry(g: &RadialGraph) -> Result<GraphGeometry> {
    let mesh = g.mesh;
    let dim = mesh.dim();
    let m = dim - 1;
    let adj = mesh.node_neighbors();
    let hdiv = divergence_mean_curvature(g);
    let mut points = Vec::with_capacity(mesh.num_nodes());
    for i in 0..mesh.num_nodes() {
        let q = mesh.node(i);
        let frame = tangent_frame(q, dim);
        let (p, hess) = local_fit(mesh, &g.phi, i, &two_ring(&adj, i), &frame)?;
        let p2: f64 = p.iter().map(|x| x * x).sum();
        let w = (1.0 + p2).sqrt();
        let grad3 = frame.iter().zip(&p).fold([0.0; 3], |acc, (f, c)| add3(&acc, &scale3(*c, f)));
        let normal = scale3(1.0 / w, &sub3(q, &grad3));
        let ep = g.phi[i].exp();
        let mut metric = [[0.0; 2]; 2];
        let mut second = [[0.0; 2]; 2];
        for a in 0..m {
            for b in 0..m {
                let delta = if a == b { 1.0 } else { 0.0 };
                metric[a][b] = ep * ep * (delta + p[a] * p[b]);
                second[a][b] = ep * (delta + p[a] * p[b] - hess[(a, b)]) / w;
            }
        }
        let inv = invert(&metric, m)?;
        let mut trace = 0.0;
        for a in 0..m {
            for b in 0..m {
                trace += inv[a][b] * second[b][a];
            }
        }
        points.push(PointGeometry {
            node: i,
            normal,
            metric,
            metric_inv: inv,
            second_form: second,
            mean_curvature: trace / m as f64,
            mean_curvature_div: hdiv[i],
        });
    }
    Ok(GraphGeometry { points })
}

fn invert(g: &[[f64; 2]; 2], m: usize) -> Result<[[f64; 2]; 2]> {
    let mut out = [[0.0; 2]; 2];
    if m == 1 {
        if !(g[0][0] > 0.0) {
            return Err(Error::Solver("metric is not positive definite".into()));
        }
        out[0][0] = 1.0 / g[0][0];
        return Ok(out);
    }
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    if !(det > 0.0 && g[0][0] > 0.0) {
        return Err(Error::Solver("metric is not positive definite".into()));
    }
    out[0][0] = g[1][1] / det;
    out[1][1] = g[0][0] / det;
    out[0][1] = -g[0][1] / det;
    out[1][0] = -g[1][0] / det;
    Ok(out)
}

/// `H = [−div(∇φ/W) + (N−1)/W] / ((N−1) e^φ)` with a lumped weak
/// divergence; `None` on boundary nodes where the weak form sees the wall.
fn divergence_mean_curvature(g: &RadialGraph) -> Vec<Option<f64>> {
    let mesh = g.mesh;
    let m = mesh.dim() as f64 - 1.0;
    let grads = g.grad_phi();
    let mut div = vec![0.0; mesh.num_nodes()];
    let mut inv_w = vec![0.0; mesh.num_nodes()];
    for c in 0..mesh.num_cells() {
        let v = mesh.cell(c);
        let area = mesh.cell_measure(c);
        let w = (1.0 + dot3(&grads[c], &grads[c])).sqrt();
        let f = scale3(1.0 / w, &grads[c]);
        let bg = mesh.basis_gradients(c);
        for (k, &i) in v.iter().enumerate() {
            div[i] += area * dot3(&f, &bg[k]);
            inv_w[i] += area / v.len() as f64 / w;
        }
    }
    let mut on_boundary = vec![false; mesh.num_nodes()];
    for b in mesh.boundary() {
        on_boundary[b.node] = true;
    }
    let mw = mesh.node_weights();
    (0..mesh.num_nodes())
        .map(|i| {
            if on_boundary[i] {
                None
            } else {
                Some((div[i] / mw[i] + m * inv_w[i] / mw[i]) / (m * g.phi[i].exp()))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Residual {
    #[serde(skip)]
    pub field: Vec<f64>,
    pub norm: f64,
    pub sup: f64,
}

/// Residual of `−div(∇φ/W) + (N−1)/W = λ e^φ` in weak form.
///
/// Tested against every hat function this is `P'(φ)[ψ_i] − λ V'(φ)[ψ_i]`
/// (the constrained Euler–Lagrange equation, which is the equation above
/// times `e^{(N−1)φ}`); it is normalized by `m_i e^{(N−1)φ_i}`. Norm:
/// `(Σ m_i r_i²)^{1/2}`.
pub fn cmc_residual(g: &RadialGraph, lambda: f64) -> Residual {
    let dp = perimeter_gradient_vector(g);
    let dv = volume_gradient_vector(g);
    let m = g.dim() as f64 - 1.0;
    let w = g.mesh.node_weights();
    let field: Vec<f64> = (0..dp.len()).map(|i| (dp[i] - lambda * dv[i]) / (w[i] * (m * g.phi[i]).exp())).collect();
    let norm = field.iter().zip(w).map(|(r, m)| m * r * r).sum::<f64>().sqrt();
    let sup = field.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    Residual { field, norm, sup }
}

/// `∂φ/∂ν` at every boundary entry, from the gradient recovered over the
/// incident (one-sided) cells.
pub fn orthogonality_residual(g: &RadialGraph) -> Result<Residual> {
    if g.mesh.boundary().is_empty() {
        return Err(Error::EmptyBoundary);
    }
    let grads = g.mesh.recovered_gradients(&g.phi);
    let field: Vec<f64> = g.mesh.boundary().iter().map(|b| dot3(&grads[b.node], &b.conormal)).collect();
    let sup = field.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let total: f64 = g.mesh.boundary().iter().map(|b| b.weight).sum();
    let norm = (g.mesh.boundary().iter().zip(&field).map(|(b, r)| b.weight * r * r).sum::<f64>() / total).sqrt();
    Ok(Residual { field, norm, sup })
}

/// `φ + s` with `V(φ + s) = c`, using `V(φ+s) = e^{Ns} V(φ)`.
pub fn project_volume<'a>(g: &RadialGraph<'a>, c_target: f64) -> Result<RadialGraph<'a>> {
    if !(c_target > 0.0) {
        return Err(Error::InvalidArgument(format!("target volume must be positive, got {c_target}")));
    }
    let n = g.dim() as f64;
    let s = (c_target / volume(g)?).ln() / n;
    let out = g.shifted(s);
    // one correction absorbs the rounding of the shifted exponentials
    let s2 = (c_target / volume(&out)?).ln() / n;
    Ok(if s2 != 0.0 { out.shifted(s2) } else { out })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::sphere_geom::{build_domain, surface_measure, DomainSpec};

    fn cap() -> SphericalMesh {
        build_domain(&DomainSpec::Cap { theta: 0.2, r: 0.3 }, 0.08).unwrap()
    }

    #[test]
    fn constant_graphs() {
        let m = cap();
        let a = surface_measure(&m);
        let r = 1.7f64;
        let g = RadialGraph::constant(&m, r.ln());
        assert!((volume(&g).unwrap() - r.powi(3) * a / 3.0).abs() < 1e-12);
        assert!((perimeter(&g).unwrap() - r * r * a).abs() < 1e-12);
        let ones = vec![1.0; m.num_nodes()];
        let g0 = RadialGraph::constant(&m, 0.0);
        assert!((volume_grad(&g0, &ones).unwrap() - a).abs() < 1e-12);
        assert!((perimeter_grad(&g0, &ones).unwrap() - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn half_ball_volume() {
        let m = build_domain(&DomainSpec::Hemisphere, 0.05).unwrap();
        let v = volume(&RadialGraph::constant(&m, 0.0)).unwrap();
        assert!((v - 2.0 * PI / 3.0).abs() / (2.0 * PI / 3.0) < 1e-2);
    }

    #[test]
    fn sphere_geometry() {
        let m = cap();
        let r = 2.5f64;
        let geo = graph_geometry(&RadialGraph::constant(&m, r.ln())).unwrap();
        for p in &geo.points {
            assert!((p.mean_curvature - 1.0 / r).abs() < 1e-10);
            assert!((norm3(&p.normal) - 1.0).abs() < 1e-12);
            if let Some(h) = p.mean_curvature_div {
                assert!((h - 1.0 / r).abs() < 1e-10);
            }
        }
        let geo0 = graph_geometry(&RadialGraph::constant(&m, 0.0)).unwrap();
        let p = &geo0.points[0];
        assert!(norm3(&sub3(&p.normal, m.node(0))) < 1e-12);
        assert!((p.metric[0][0] - 1.0).abs() < 1e-14 && p.metric[0][1].abs() < 1e-14);
    }

    #[test]
    fn cmc_residual_cases() {
        let m = cap();
        let g0 = RadialGraph::constant(&m, 0.0);
        assert!(cmc_residual(&g0, 2.0).norm <= 1e-10);
        let r = 0.6f64;
        assert!(cmc_residual(&RadialGraph::constant(&m, r.ln()), 2.0 / r).norm <= 1e-10);
        let wrong = cmc_residual(&g0, 0.0).norm;
        assert!((wrong - 2.0 * surface_measure(&m).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn orthogonality_cases() {
        let m = cap();
        let g = RadialGraph::constant(&m, 0.3);
        assert_eq!(orthogonality_residual(&g).unwrap().sup, 0.0);
        let g = RadialGraph::new(&m, m.linear_field(&[1.0, 0.0, 0.0])).unwrap();
        assert!(orthogonality_residual(&g).unwrap().sup > 0.1);
    }

    #[test]
    fn projection_hits_target() {
        let m = cap();
        let g = RadialGraph::constant(&m, 0.0);
        let a = surface_measure(&m);
        let p = project_volume(&g, 8.0 * a / 3.0).unwrap();
        assert!((p.phi()[0] - 2f64.ln()).abs() < 1e-14);
        let phi: Vec<f64> = m.nodes().iter().map(|x| 0.3 * x[0] - 0.2 * x[1] * x[1]).collect();
        let g = RadialGraph::new(&m, phi).unwrap();
        let p = project_volume(&g, 0.77).unwrap();
        assert!((volume(&p).unwrap() - 0.77).abs() / 0.77 <= 1e-14);
    }
}
