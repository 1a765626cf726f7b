//! Instability certificates for spherical sectors: the eigenvalue/area
//! condition, the boundary-integral criterion with its closed forms, and
//! second-variation values at the first eigenfunction.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::report::{OracleDelta, Tagged, Verdict};
use crate::spectral::{assemble_lb_neumann, solve_spectrum_of, LbMatrices, NeumannSpectrum};
use crate::sphere_geom::{
    dot3, hemisphere_measure, integrate_on_domain, surface_measure, unit_ball_volume, DomainSpec, SphericalMesh,
    SpherePoint,
};

/// Relative tolerance of the zero-mean hypothesis `∫_D u_e = 0`.
pub const MEAN_TOL: f64 = 1e-6;

/// `∫_{∂D} u_e ∂u_e/∂ν`, using `∂u_e/∂ν = ν·e` on the boundary.
pub fn criterion_integral_numeric(mesh: &SphericalMesh, e: &SpherePoint) -> Result<f64> {
    if mesh.boundary().is_empty() {
        return Err(Error::MissingConormals);
    }
    check_direction(mesh, e)?;
    let e = e.as_vec3();
    Ok(mesh
        .boundary()
        .iter()
        .map(|b| b.weight * dot3(mesh.node(b.node), &e) * dot3(&b.conormal, &e))
        .sum())
}

fn check_direction(mesh: &SphericalMesh, e: &SpherePoint) -> Result<()> {
    if e.dim() != mesh.dim() {
        return Err(Error::InvalidArgument(format!(
            "direction e has {} components, the mesh lives in R^{}",
            e.dim(),
            mesh.dim()
        )));
    }
    Ok(())
}

/// `∫_0^π sin^m` by the Wallis recursion.
pub fn wallis_integral(m: usize) -> f64 {
    match m {
        0 => PI,
        1 => 2.0,
        _ => (m as f64 - 1.0) / m as f64 * wallis_integral(m - 2),
    }
}

/// `c_N = ((N−2)/(N−1)) ω_{N−2} ∫_0^π sin^{N−3}`; `c_3 = π`.
pub fn cap_constant(n: usize) -> f64 {
    (n as f64 - 2.0) / (n as f64 - 1.0) * unit_ball_volume(n - 2) * wallis_integral(n - 3)
}

/// Criterion integral on the cap `{x·e_θ > r}` with `e = e₁`:
/// `r (1−r²)^{(N−1)/2} c_N (1 − N sin²θ)`.
pub fn cap_criterion_closed_form(theta: f64, r: f64, n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::InvalidArgument("cap closed form needs N ≥ 3".into()));
    }
    DomainSpec::Cap { theta, r }.validate()?;
    let nf = n as f64;
    Ok(r * (1.0 - r * r).powf(0.5 * (nf - 1.0)) * cap_constant(n) * (1.0 - nf * theta.sin().powi(2)))
}

/// Criterion integral on the `k = 1` tube of half-width `r` in `S²`, for a
/// unit `e` in the equatorial plane: `−2π sin r cos² r`. On the boundary
/// `∂u_e/∂ν = −tan r · u_e`.
pub fn tube_criterion_closed_form(r: f64) -> f64 {
    -2.0 * PI * r.sin() * r.cos().powi(2)
}

/// The same quantity as obtained from `∂u_e/∂ν = −sin r · u_e`, which drops
/// a factor `1/cos r`; reported next to the exact value.
pub fn tube_criterion_alt(r: f64) -> f64 {
    -2.0 * PI * r.sin() * r.cos().powi(3)
}

/// Breakdown of the criterion integral on the tunnel domain (`N = 3`, `e = e₁`).
#[derive(Debug, Clone, Serialize)]
pub struct TunnelCriterion {
    /// One full cap circle, closed form.
    pub cap: Tagged,
    /// `2·cap + wall term` with the wall integrand `−ε x₁²`.
    pub two_caps_plus_walls: Tagged,
    /// Exact total: cap circles minus the arcs inside the strip, plus both
    /// walls with the normalized co-normal.
    pub exact_total: Tagged,
    /// Quadrature on the mesh, when one is given.
    pub numeric: Option<Tagged>,
    /// Largest ε (within the admissible range) below which the exact total
    /// stays negative.
    pub eps_threshold: Tagged,
    /// True when the exact total is negative on the whole admissible ε range.
    pub negative_on_whole_range: bool,
}

struct TunnelPieces {
    removed_arc: f64,
    walls_exact: f64,
    walls_unnormalized: f64,
}

fn tunnel_pieces(theta: f64, r: f64, eps: f64) -> TunnelPieces {
    let s = (1.0 - r * r).sqrt();
    let (st, ct) = theta.sin_cos();
    // cap circle: x₁ = A + B cos φ, integrand x₁ (r x₁ − sin θ) dφ; the arc
    // inside the strip is around φ = π with |s sin φ| < ε
    let (a_, b_) = (r * st, s * ct);
    let a = (eps / s).min(1.0).asin();
    let removed_arc = r * (2.0 * a * a_ * a_ - 4.0 * a_ * b_ * a.sin() + b_ * b_ * (a + a.sin() * a.cos()))
        - st * (2.0 * a * a_ - 2.0 * b_ * a.sin());
    // walls sin η = ±ε, ψ ∈ (−ψ_R, ψ_R), ds = cos η dψ, x₁ = cos η sin ψ
    let c2 = 1.0 - eps * eps;
    let psi_r = (theta - (r / c2.sqrt()).min(1.0).acos()).max(0.0);
    let sin2 = psi_r - psi_r.sin() * psi_r.cos();
    let walls_exact = -2.0 * eps * c2 * sin2;
    let walls_unnormalized = -2.0 * eps * c2.powf(1.5) * sin2;
    TunnelPieces { removed_arc, walls_exact, walls_unnormalized }
}

fn tunnel_exact_total(theta: f64, r: f64, eps: f64) -> f64 {
    let cap = cap_criterion_closed_form(theta, r, 3).unwrap_or(f64::NAN);
    let p = tunnel_pieces(theta, r, eps);
    2.0 * (cap - p.removed_arc) + p.walls_exact
}

pub fn tunnel_criterion(theta: f64, r: f64, eps: f64, n: usize, mesh: Option<&SphericalMesh>) -> Result<TunnelCriterion> {
    if n != 3 {
        return Err(Error::Unsupported("tunnel criterion is implemented for N = 3".into()));
    }
    DomainSpec::Tunnel { theta, r, eps }.validate()?;
    let cap = cap_criterion_closed_form(theta, r, n)?;
    let p = tunnel_pieces(theta, r, eps);
    let exact_total = 2.0 * (cap - p.removed_arc) + p.walls_exact;
    let numeric = match mesh {
        Some(m) => Some(Tagged::numeric(criterion_integral_numeric(m, &SpherePoint::new(vec![1.0, 0.0, 0.0])?)?)),
        None => None,
    };
    // ε range where the tunnel exists
    let eps_max = (1.0 - r * r).sqrt();
    let samples = 400;
    let mut threshold = None;
    let mut prev = 0.0;
    for i in 1..samples {
        let e = eps_max * i as f64 / samples as f64;
        if tunnel_exact_total(theta, r, e) >= 0.0 {
            let (mut lo, mut hi) = (prev, e);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if tunnel_exact_total(theta, r, mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            threshold = Some(lo);
            break;
        }
        prev = e;
    }
    Ok(TunnelCriterion {
        cap: Tagged::closed(cap),
        two_caps_plus_walls: Tagged::closed(2.0 * cap + p.walls_unnormalized),
        exact_total: Tagged::closed(exact_total),
        numeric,
        eps_threshold: Tagged::numeric(threshold.unwrap_or(eps_max)),
        negative_on_whole_range: threshold.is_none(),
    })
}

/// `I''(0)[v,v] = (−Σ c_j² + Σ α_j c_j²)/N²` for `v = Σ c_j w_j`.
pub fn torsion_second_variation_value(spec: &NeumannSpectrum, coeffs: &[f64], n: usize) -> Result<f64> {
    if coeffs.len() > spec.len() {
        return Err(Error::SizeMismatch { expected: spec.len(), got: coeffs.len() });
    }
    let norm2: f64 = coeffs.iter().map(|c| c * c).sum();
    if let Some(&c0) = coeffs.first() {
        if c0.abs() > MEAN_TOL * norm2.sqrt().max(f64::MIN_POSITIVE) {
            return Err(Error::NonzeroMean { mean: c0, tol: MEAN_TOL * norm2.sqrt() });
        }
    }
    let weighted: f64 = coeffs.iter().zip(&spec.alphas).skip(1).map(|(c, a)| a * c * c).sum();
    Ok((weighted - norm2) / (n * n) as f64)
}

/// `vᵀKv − (N−1) vᵀMv` for zero-mean `v` (consistent mass).
pub fn perimeter_second_variation_value(mesh: &SphericalMesh, v: &[f64]) -> Result<f64> {
    let mats = assemble_lb_neumann(mesh)?;
    perimeter_second_variation_with(&mats, mesh, v)
}

pub fn perimeter_second_variation_with(mats: &LbMatrices, mesh: &SphericalMesh, v: &[f64]) -> Result<f64> {
    let area = surface_measure(mesh);
    let mean = integrate_on_domain(mesh, v)?;
    let mv = mats.mass.mul_vec(v);
    let l2 = dot(v, &mv);
    let tol = MEAN_TOL * (area * l2).sqrt();
    if mean.abs() > tol {
        return Err(Error::NonzeroMean { mean, tol });
    }
    Ok(mats.stiffness.bilinear(v, v) - (mesh.dim() as f64 - 1.0) * l2)
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdicts {
    pub lambda1_lt: Verdict,
    pub area_lt: Verdict,
    pub condition_1_7: Verdict,
    pub prop52_applicable: Verdict,
    /// The boundary integral is negative beyond its quadrature tolerance.
    pub criterion_negative: Verdict,
    /// Negative criterion with zero mean must come with `λ₁ < N−1`.
    pub sign_coherent: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub domain: String,
    pub dim: usize,
    pub nodes: usize,
    pub direction: Vec<f64>,
    pub lambda1: Tagged,
    pub threshold: Tagged,
    pub eigen_residual: Tagged,
    pub tol_eig: f64,
    pub area: Tagged,
    pub hemisphere_area: Tagged,
    pub criterion_integral: Tagged,
    pub mean_constraint: Tagged,
    pub mean_tol: f64,
    pub verdicts: Verdicts,
    pub second_variation_torsion: Tagged,
    pub second_variation_perimeter: Tagged,
    pub oracle: Vec<OracleDelta>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tunnel: Option<TunnelCriterion>,
    /// Free-text caveats; the criterion at equality
    /// (a zero integral) is never decided.
    pub notes: Vec<String>,
}

/// Fills a [`CertificateReport`] for `mesh` and direction `e`.
pub fn check_condition_1_7(mesh: &SphericalMesh, e: &SpherePoint) -> Result<CertificateReport> {
    check_direction(mesh, e)?;
    let n = mesh.dim();
    let nf = n as f64;
    let mats = assemble_lb_neumann(mesh)?;
    let spectrum = solve_spectrum_of(&mats, n, 4.min(mesh.num_nodes() - 1))?;
    let lambda1 = spectrum.lambda1();
    let residual = spectrum.max_residual();
    let tol_eig = 10.0 * residual;
    let area = surface_measure(mesh);
    let hemi = hemisphere_measure(n);
    let criterion = criterion_integral_numeric(mesh, e)?;
    let ue = mesh.linear_field(&e.as_vec3());
    let mean = integrate_on_domain(mesh, &ue)?;
    let mean_tol = MEAN_TOL * area;

    let lambda1_lt = Verdict::less_than(lambda1, nf - 1.0, tol_eig);
    let area_lt = Verdict::less_than(area, hemi, 1e-12 * hemi);
    let prop52 = Verdict::from_bool(mean.abs() <= mean_tol);
    let bnd_len: f64 = mesh.boundary().iter().map(|b| b.weight).sum();
    let criterion_negative = Verdict::less_than(criterion, 0.0, 1e-12 * bnd_len.max(1.0));
    let sign_coherent = if criterion_negative.is_true() && prop52.is_true() {
        Verdict::from_bool(lambda1 < nf - 1.0 + tol_eig)
    } else {
        Verdict::True
    };

    let alpha1 = spectrum.alphas[1];
    let w1 = &spectrum.eigenvectors[1];
    let sv_perimeter = perimeter_second_variation_with(&mats, mesh, w1)?;

    let mut oracle = vec![OracleDelta::new("perimeter second variation vs λ₁−(N−1)", sv_perimeter, lambda1 - (nf - 1.0))];
    let mut notes = Vec::new();
    let mut tunnel = None;
    let e1 = e.coords()[0] == 1.0;
    match mesh.spec() {
        Some(&DomainSpec::Arc { beta }) => {
            oracle.push(OracleDelta::new("lambda1", lambda1, (PI / beta).powi(2)));
            oracle.push(OracleDelta::new("area", area, beta));
        }
        Some(&DomainSpec::Cap { theta, r }) => {
            oracle.push(OracleDelta::new("area", area, 2.0 * PI * (1.0 - r)));
            if e1 {
                oracle.push(OracleDelta::new("criterion_integral", criterion, cap_criterion_closed_form(theta, r, n)?));
            }
        }
        Some(DomainSpec::Hemisphere) => {
            oracle.push(OracleDelta::new("lambda1", lambda1, 2.0));
            oracle.push(OracleDelta::new("area", area, 2.0 * PI));
        }
        Some(&DomainSpec::Tube { r, .. }) => {
            oracle.push(OracleDelta::new("area", area, 4.0 * PI * r.sin()));
            let ev = e.as_vec3();
            if ev[2].abs() < 1e-12 {
                oracle.push(OracleDelta::new("criterion_integral", criterion, tube_criterion_closed_form(r)));
                notes.push(format!(
                    "tube criterion from ∂u_e/∂ν = −sin r·u_e would be {:.6}; the exact relation is ∂u_e/∂ν = −tan r·u_e",
                    tube_criterion_alt(r)
                ));
            }
        }
        Some(&DomainSpec::Tunnel { theta, r, eps }) => {
            if e1 {
                let t = tunnel_criterion(theta, r, eps, n, Some(mesh))?;
                oracle.push(OracleDelta::new("criterion_integral", criterion, t.exact_total.value));
                tunnel = Some(t);
            }
        }
        _ => {}
    }
    if criterion_negative == Verdict::Inconclusive {
        notes.push("criterion integral is zero within tolerance; no decision is made at equality".into());
    }

    Ok(CertificateReport {
        domain: mesh.spec().map(|s| s.to_string()).unwrap_or_else(|| "mesh".into()),
        dim: n,
        nodes: mesh.num_nodes(),
        direction: e.coords().to_vec(),
        lambda1: Tagged::numeric(lambda1),
        threshold: Tagged::closed(nf - 1.0),
        eigen_residual: Tagged::numeric(residual),
        tol_eig,
        area: Tagged::numeric(area),
        hemisphere_area: Tagged::closed(hemi),
        criterion_integral: Tagged::numeric(criterion),
        mean_constraint: Tagged::numeric(mean),
        mean_tol,
        verdicts: Verdicts {
            lambda1_lt,
            area_lt,
            condition_1_7: lambda1_lt.and(area_lt),
            prop52_applicable: prop52,
            criterion_negative,
            sign_coherent,
        },
        second_variation_torsion: Tagged::derived((alpha1 - 1.0) / (nf * nf)),
        second_variation_perimeter: Tagged::numeric(sv_perimeter),
        oracle,
        tunnel,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere_geom::build_domain;

    #[test]
    fn cap_constants() {
        assert!((cap_constant(3) - PI).abs() < 1e-15);
        // c_4 = (2/3)·π·2
        assert!((cap_constant(4) - 4.0 * PI / 3.0).abs() < 1e-14);
        assert!((wallis_integral(4) - 3.0 * PI / 8.0).abs() < 1e-15);
    }

    #[test]
    fn cap_closed_form_values() {
        let v = cap_criterion_closed_form(50f64.to_radians(), 0.85, 3).unwrap();
        assert!((v + 0.5635).abs() < 5e-4, "{v}");
        let t0 = (1.0 / 3f64.sqrt()).asin();
        for r in [0.1, 0.5, 0.9] {
            assert!(cap_criterion_closed_form(t0, r, 3).unwrap().abs() < 1e-15);
        }
        assert!(cap_criterion_closed_form(0.1, 1.5, 3).is_err());
    }

    #[test]
    fn tunnel_limits() {
        let (theta, r) = (50f64.to_radians(), 0.85);
        let cap = cap_criterion_closed_form(theta, r, 3).unwrap();
        let t = tunnel_criterion(theta, r, 1e-7, 3, None).unwrap();
        assert!((t.exact_total.value - 2.0 * cap).abs() < 1e-6);
        let t = tunnel_criterion(theta, r, 0.05, 3, None).unwrap();
        assert!(t.exact_total.value < 0.0);
        assert!(t.two_caps_plus_walls.value <= 2.0 * cap);
    }

    #[test]
    fn second_variation_values() {
        let beta = 1.5 * PI;
        let m = build_domain(&DomainSpec::Arc { beta }, beta / 256.0).unwrap();
        let mats = assemble_lb_neumann(&m).unwrap();
        let s = solve_spectrum_of(&mats, 2, 3).unwrap();
        let c = s.coefficients(&mats.mass, &s.eigenvectors[1]);
        let v = torsion_second_variation_value(&s, &c, 2).unwrap();
        assert!((v + 1.0 / 12.0).abs() < 1e-3);
        let p = perimeter_second_variation_value(&m, &s.eigenvectors[1]).unwrap();
        assert!((p + 5.0 / 9.0).abs() < 1e-3);
        assert!(matches!(
            perimeter_second_variation_value(&m, &vec![1.0; m.num_nodes()]),
            Err(Error::NonzeroMean { .. })
        ));
    }
}
