//! Neumann eigenproblem of the Laplace–Beltrami operator on a spherical
//! domain, and the harmonic exponents of its eigenvalues.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, EnvelopeCholesky, SparseMatrix, TripletBuilder};
use crate::sphere_geom::{dot3, SphericalMesh};

/// Below this many nodes the generalized problem is solved densely.
const DENSE_LIMIT: usize = 400;
const SHIFT: f64 = -1e-3;
const TARGET_RESIDUAL: f64 = 1e-10;
pub const RESIDUAL_TOL: f64 = 1e-8;

/// P1 stiffness, consistent mass and lumped mass of a mesh.
#[derive(Debug, Clone)]
pub struct LbMatrices {
    pub stiffness: SparseMatrix,
    pub mass: SparseMatrix,
    pub lumped: Vec<f64>,
}

pub fn assemble_lb_neumann(mesh: &SphericalMesh) -> Result<LbMatrices> {
    let n = mesh.num_nodes();
    let d = mesh.dim();
    let mut k = TripletBuilder::with_capacity(n, mesh.num_cells() * d * d);
    let mut m = TripletBuilder::with_capacity(n, mesh.num_cells() * d * d);
    for c in 0..mesh.num_cells() {
        let v = mesh.cell(c);
        let area = mesh.cell_measure(c);
        let g = mesh.basis_gradients(c);
        if g.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateCell { cell: c, reason: "non-finite basis gradient".into() });
        }
        // consistent P1 mass: |c|/((d)(d+1)) (1 + δ_ab)
        let unit = area / (d * (d + 1)) as f64;
        for a in 0..d {
            for b in 0..d {
                k.add(v[a], v[b], area * dot3(&g[a], &g[b]));
                m.add(v[a], v[b], if a == b { 2.0 * unit } else { unit });
            }
        }
    }
    Ok(LbMatrices { stiffness: k.build(), mass: m.build(), lumped: mesh.node_weights().to_vec() })
}

/// Harmonic exponent `α ≥ 0` with `α² + (N−2)α = λ`.
pub fn alpha_exponent(lambda: f64, n: usize) -> Result<f64> {
    if !(lambda >= 0.0) || n < 2 {
        return Err(Error::InvalidArgument(format!("alpha_exponent needs λ ≥ 0 and N ≥ 2 (λ = {lambda}, N = {n})")));
    }
    let h = 0.5 * (n as f64 - 2.0);
    // λ / (h + √(h²+λ)) avoids cancellation for small λ
    let root = (h * h + lambda).sqrt();
    Ok(if h + root > 0.0 { lambda / (h + root) } else { 0.0 })
}

#[derive(Debug, Clone, Serialize)]
pub struct NeumannSpectrum {
    pub dim: usize,
    pub eigenvalues: Vec<f64>,
    /// Mass-orthonormal nodal eigenfunctions.
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub residuals: Vec<f64>,
    pub method: &'static str,
}

impl NeumannSpectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn lambda1(&self) -> f64 {
        self.eigenvalues[1]
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }

    /// Coefficients `c_j = (v, w_j)_M` of `v` in the eigenbasis.
    pub fn coefficients(&self, mass: &SparseMatrix, v: &[f64]) -> Vec<f64> {
        let mv = mass.mul_vec(v);
        self.eigenvectors.iter().map(|w| dot(w, &mv)).collect()
    }
}

/// First `k + 1` eigenpairs (including `λ₀ = 0`).
pub fn solve_neumann_spectrum(mesh: &SphericalMesh, k: usize) -> Result<NeumannSpectrum> {
    let mats = assemble_lb_neumann(mesh)?;
    solve_spectrum_of(&mats, mesh.dim(), k)
}

pub fn solve_spectrum_of(mats: &LbMatrices, dim: usize, k: usize) -> Result<NeumannSpectrum> {
    let n = mats.stiffness.n();
    if k < 1 || k >= n {
        return Err(Error::InvalidArgument(format!("need 1 ≤ k < {n} eigenpairs, got {k}")));
    }
    let want = k + 1;
    let (mut vals, mut vecs, method) = if n <= DENSE_LIMIT {
        let (v, w) = dense_pairs(mats, want)?;
        (v, w, "dense")
    } else {
        let (v, w) = subspace_pairs(mats, want)?;
        (v, w, "shift-invert subspace")
    };
    let mut residuals = Vec::with_capacity(want);
    for (lam, w) in vals.iter_mut().zip(vecs.iter_mut()) {
        let mw = mats.mass.mul_vec(w);
        let scale = dot(w, &mw).sqrt();
        w.iter_mut().for_each(|x| *x /= scale);
        let imax = (0..w.len()).max_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs())).unwrap();
        if w[imax] < 0.0 {
            w.iter_mut().for_each(|x| *x = -*x);
        }
        residuals.push(residual(mats, *lam, w));
        if lam.abs() < 1e-8 {
            *lam = 0.0;
        }
    }
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    if worst > RESIDUAL_TOL {
        return Err(Error::EigenNonConvergence { achieved: worst });
    }
    let alphas = vals.iter().map(|&l| alpha_exponent(l.max(0.0), dim)).collect::<Result<Vec<_>>>()?;
    Ok(NeumannSpectrum { dim, eigenvalues: vals, eigenvectors: vecs, alphas, residuals, method })
}

fn residual(mats: &LbMatrices, lam: f64, w: &[f64]) -> f64 {
    let kw = mats.stiffness.mul_vec(w);
    let mw = mats.mass.mul_vec(w);
    let r: Vec<f64> = kw.iter().zip(&mw).map(|(a, b)| a - lam * b).collect();
    norm2(&r) / norm2(&mw)
}

fn dense_pairs(mats: &LbMatrices, want: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let k = mats.stiffness.to_dense();
    let m = mats.mass.to_dense();
    let chol = m.clone().cholesky().ok_or_else(|| Error::Solver("mass matrix not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(l.nrows(), l.ncols()))
        .ok_or_else(|| Error::Solver("singular mass factor".into()))?;
    let c = &linv * k * linv.transpose();
    let c = 0.5 * (&c + c.transpose());
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lt_inv = linv.transpose();
    let mut vals = Vec::with_capacity(want);
    let mut vecs = Vec::with_capacity(want);
    for &j in order.iter().take(want) {
        vals.push(eig.eigenvalues[j]);
        let w = &lt_inv * eig.eigenvectors.column(j);
        vecs.push(w.iter().copied().collect());
    }
    Ok((vals, vecs))
}

/// Block subspace iteration with `(K − σM)⁻¹M` and Rayleigh–Ritz on `K`.
/// Tolerates repeated eigenvalues, which single-vector Lanczos does not.
fn subspace_pairs(mats: &LbMatrices, want: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = mats.stiffness.n();
    let p = (2 * want + 6).min(n);
    let shifted = mats.stiffness.add_scaled(-SHIFT, &mats.mass);
    let chol = EnvelopeCholesky::factor(&shifted)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut best = f64::INFINITY;
    for _ in 0..300 {
        let z: Vec<Vec<f64>> = x.iter().map(|v| chol.solve(&mats.mass.mul_vec(v))).collect();
        let (vals, vecs) = rayleigh_ritz(mats, &z)?;
        let worst = (0..want).map(|j| residual(mats, vals[j], &vecs[j])).fold(0.0, f64::max);
        best = best.min(worst);
        x = vecs;
        if worst <= TARGET_RESIDUAL {
            return Ok((vals[..want].to_vec(), x[..want].to_vec()));
        }
        if !worst.is_finite() {
            break;
        }
    }
    if best <= RESIDUAL_TOL {
        let (vals, vecs) = rayleigh_ritz(mats, &x)?;
        return Ok((vals[..want].to_vec(), vecs[..want].to_vec()));
    }
    Err(Error::EigenNonConvergence { achieved: best })
}

fn rayleigh_ritz(mats: &LbMatrices, z: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let p = z.len();
    let mz: Vec<Vec<f64>> = z.iter().map(|v| mats.mass.mul_vec(v)).collect();
    let kz: Vec<Vec<f64>> = z.iter().map(|v| mats.stiffness.mul_vec(v)).collect();
    let gm = DMatrix::from_fn(p, p, |i, j| dot(&z[i], &mz[j]));
    let gk = DMatrix::from_fn(p, p, |i, j| dot(&z[i], &kz[j]));
    let gm = 0.5 * (&gm + gm.transpose());
    let gk = 0.5 * (&gk + gk.transpose());
    let chol = gm.cholesky().ok_or_else(|| Error::Solver("subspace lost rank".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::Solver("subspace lost rank".into()))?;
    let c = &linv * gk * linv.transpose();
    let eig = SymmetricEigen::new(0.5 * (&c + c.transpose()));
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let coef = linv.transpose() * &eig.eigenvectors;
    let n = z[0].len();
    let mut vals = Vec::with_capacity(p);
    let mut vecs = Vec::with_capacity(p);
    for &j in &order {
        vals.push(eig.eigenvalues[j]);
        let mut w = vec![0.0; n];
        for (i, zi) in z.iter().enumerate() {
            let c = coef[(i, j)];
            w.iter_mut().zip(zi).for_each(|(a, b)| *a += c * b);
        }
        vecs.push(w);
    }
    Ok((vals, vecs))
}

/// `vᵀKv / vᵀMv`.
pub fn rayleigh_quotient(mesh: &SphericalMesh, v: &[f64]) -> Result<f64> {
    let mats = assemble_lb_neumann(mesh)?;
    rayleigh_quotient_with(&mats, v)
}

pub fn rayleigh_quotient_with(mats: &LbMatrices, v: &[f64]) -> Result<f64> {
    if v.len() != mats.stiffness.n() {
        return Err(Error::SizeMismatch { expected: mats.stiffness.n(), got: v.len() });
    }
    let den = mats.mass.bilinear(v, v);
    if !(den > 0.0) {
        return Err(Error::ZeroField);
    }
    Ok(mats.stiffness.bilinear(v, v) / den)
}
