//! Volume-constrained gradient descent on the perimeter (N = 2, 3) and the
//! torsional energy (arcs) over radial graphs.
//!
//! The derivative is represented in the weighted inner product
//! `⟨a,b⟩ = ∫ a b e^{Nφ}` (lumped), where the normal of the volume
//! constraint is the constant function; projecting onto the tangent space is
//! then mean subtraction. Steps are followed by an exact volume projection
//! and accepted by Armijo backtracking.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph_functionals::{
    cmc_residual, orthogonality_residual, perimeter, perimeter_gradient_vector, project_volume, volume,
    volume_gradient_vector, RadialGraph,
};
use crate::linalg::{rcm_ordering, EnvelopeCholesky};
use crate::spectral::{assemble_lb_neumann, solve_neumann_spectrum};
use crate::sphere_geom::{surface_measure, SphericalMesh};
use crate::torsion::{
    discrete_energy_gradient, energy_gradient_vector, fixed_volume_sector_energy, flux_stats, restrict_to_profile,
    solve_torsion, FluxStats, ProfileDomain,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Functional {
    Perimeter,
    Torsion,
}

impl std::str::FromStr for Functional {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perimeter" => Ok(Functional::Perimeter),
            "torsion" => Ok(Functional::Torsion),
            _ => Err(Error::InvalidSpec(format!("unknown functional '{s}' (expected perimeter or torsion)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    Constant,
    /// `amplitude · w_index` with `w_index` the mass-normalized Neumann mode.
    Eigenmode { index: usize, amplitude: f64 },
    /// Explicit nodal values (not echoed in reports).
    Phi(#[serde(skip)] Vec<f64>),
}

/// Inner product used to turn the derivative into a direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// `∫ a b e^{Nφ}`
    L2,
    /// `∫ a b e^{Nφ} + ∫ ∇a·∇b`; for stiff perimeter flows.
    H1,
}

/// Which nodal gradient drives a torsion flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TorsionGradient {
    /// `−½ e^{Nφ} (∂u/∂ν)²` from the flux of the current solve.
    Flux,
    /// Exact derivative of the discrete energy.
    Discrete,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowConfig {
    pub functional: Functional,
    pub c_target: f64,
    pub init: Init,
    pub step0: f64,
    pub shrink: f64,
    pub grow: f64,
    pub armijo: f64,
    pub max_iters: usize,
    pub tol_grad: f64,
    pub tol_residual: f64,
    /// Largest change of `φ` allowed in one step.
    pub max_dphi: f64,
    pub metric: Metric,
    pub torsion_gradient: TorsionGradient,
    /// Radial intervals of the torsion grid.
    pub n_s: usize,
}

impl FlowConfig {
    pub fn new(functional: Functional, c_target: f64, init: Init) -> Self {
        Self {
            functional,
            c_target,
            init,
            step0: 1.0,
            shrink: 0.5,
            grow: 1.3,
            armijo: 1e-4,
            max_iters: 2000,
            tol_grad: match functional {
                Functional::Perimeter => 1e-8,
                Functional::Torsion => 1e-6,
            },
            tol_residual: 1e-5,
            max_dphi: 0.05,
            metric: Metric::L2,
            torsion_gradient: TorsionGradient::Discrete,
            n_s: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64, name: &str| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidSpec(format!("{name} must be positive, got {x}")))
            }
        };
        pos(self.c_target, "volume")?;
        pos(self.step0, "step0")?;
        pos(self.tol_grad, "tol_grad")?;
        pos(self.tol_residual, "tol_residual")?;
        pos(self.max_dphi, "max_dphi")?;
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidSpec(format!("shrink must lie in (0,1), got {}", self.shrink)));
        }
        if !(self.grow >= 1.0) {
            return Err(Error::InvalidSpec(format!("grow must be at least 1, got {}", self.grow)));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::InvalidSpec(format!("armijo parameter must lie in (0,1), got {}", self.armijo)));
        }
        if let Init::Eigenmode { index, amplitude } = self.init {
            if index == 0 {
                return Err(Error::InvalidSpec("eigenmode index must be at least 1".into()));
            }
            if !(amplitude.abs() < 2.0) {
                return Err(Error::InvalidSpec(format!("eigenmode amplitude {amplitude} is too large")));
            }
        }
        if self.functional == Functional::Torsion && self.n_s < 2 {
            return Err(Error::InvalidSpec("torsion flows need n_s >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowStep {
    pub iter: usize,
    pub value: f64,
    pub volume: f64,
    pub grad_norm: f64,
    pub step: f64,
    /// CMC residual norm (perimeter) or flux coefficient of variation (torsion).
    pub residual: f64,
    pub phi_min: f64,
    pub phi_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Baseline {
    /// Value at the constant graph of the same volume, same discretization.
    pub baseline: f64,
    /// Sector formula at the same volume.
    pub closed_form: f64,
    pub achieved: f64,
    /// `baseline − achieved`
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowDiagnostics {
    /// Multiplier `F'(φ)[1] / V'(φ)[1]`.
    pub lambda_hat: f64,
    pub cmc_residual: Option<f64>,
    pub orthogonality_residual: Option<f64>,
    pub flux: Option<FluxStats>,
    /// Multiplier of the flux-formula derivative, `Σ −½m e^{Nφ}(∂u/∂ν)² / Σ m e^{Nφ}`.
    pub lambda_hat_flux: Option<f64>,
    /// `−½ mean(∂u/∂ν)²`.
    pub lagrange_from_flux: Option<f64>,
    pub phi_std: f64,
    pub nonradial: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowTrace {
    pub functional: Functional,
    pub c_target: f64,
    pub steps: Vec<FlowStep>,
    pub converged: bool,
    pub stalled: bool,
    pub iterations: usize,
    pub diagnostics: FlowDiagnostics,
    pub baseline: Baseline,
}

impl FlowTrace {
    pub fn final_value(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.value)
    }

    /// True when every accepted step lowered the functional.
    pub fn is_monotone(&self) -> bool {
        self.steps.windows(2).all(|w| w[1].value <= w[0].value)
    }
}

pub struct FlowResult {
    pub trace: FlowTrace,
    pub phi: Vec<f64>,
}

/// Functional value together with its nodal gradient and torsion extras.
struct Eval {
    value: f64,
    grad: Vec<f64>,
    flux: Option<TorsionExtras>,
}

#[derive(Clone, Copy)]
struct TorsionExtras {
    stats: FluxStats,
    lagrange: f64,
    lambda_flux: f64,
}

struct Problem<'a> {
    mesh: &'a SphericalMesh,
    cfg: &'a FlowConfig,
    profile: Option<(ProfileDomain, Vec<Vec<usize>>)>,
}

impl<'a> Problem<'a> {
    fn new(mesh: &'a SphericalMesh, cfg: &'a FlowConfig) -> Result<Self> {
        let profile = match cfg.functional {
            Functional::Perimeter => None,
            Functional::Torsion => {
                if mesh.dim() != 2 {
                    return Err(Error::Unsupported("torsion flows are implemented for arcs (N = 2) only".into()));
                }
                Some(ProfileDomain::from_mesh(mesh)?)
            }
        };
        Ok(Self { mesh, cfg, profile })
    }

    fn value(&self, g: &RadialGraph) -> Result<f64> {
        match &self.profile {
            None => perimeter(g),
            Some((p, groups)) => {
                let phi = restrict_to_profile(groups, g.phi())?;
                Ok(solve_torsion(p, &phi, self.cfg.n_s)?.energy_u)
            }
        }
    }

    fn eval(&self, g: &RadialGraph) -> Result<Eval> {
        match &self.profile {
            None => Ok(Eval { value: perimeter(g)?, grad: perimeter_gradient_vector(g), flux: None }),
            Some((p, groups)) => {
                let phi = restrict_to_profile(groups, g.phi())?;
                let t = solve_torsion(p, &phi, self.cfg.n_s)?;
                let gflux = energy_gradient_vector(p, &phi, &t.flux)?;
                let n = p.dim() as f64;
                let dv: f64 = p.weights().iter().zip(&phi).map(|(m, x)| m * (n * x).exp()).sum();
                let lambda_flux = gflux.iter().sum::<f64>() / dv;
                let gp = match self.cfg.torsion_gradient {
                    TorsionGradient::Flux => gflux,
                    TorsionGradient::Discrete => discrete_energy_gradient(p, &phi, &t)?,
                };
                let mut grad = vec![0.0; self.mesh.num_nodes()];
                for (grp, v) in groups.iter().zip(&gp) {
                    grad[grp[0]] = *v;
                }
                let stats = flux_stats(p, &phi, &t.flux);
                let lagrange = -0.5 * stats.mean * stats.mean;
                Ok(Eval { value: t.energy_u, grad, flux: Some(TorsionExtras { stats, lagrange, lambda_flux }) })
            }
        }
    }
}

/// Projected Riesz direction and the multiplier estimate.
#[derive(Debug, Clone)]
pub struct Direction {
    pub d: Vec<f64>,
    pub lambda_hat: f64,
    /// `F'(φ)[d]`, the squared norm of `d` in the chosen metric.
    pub slope: f64,
}

/// Riesz representative of the nodal derivative `grad` (`grad_i = F'(φ)[ψ_i]`),
/// projected onto `{V'(φ)[d] = 0}`.
pub fn riesz_projected_gradient(g: &RadialGraph, grad: &[f64], metric: Metric) -> Result<Direction> {
    g.mesh().check_field(grad)?;
    let dv = volume_gradient_vector(g);
    let total: f64 = dv.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("zero-measure domain".into()));
    }
    let lambda_hat = grad.iter().sum::<f64>() / total;
    let d: Vec<f64> = match metric {
        Metric::L2 => grad.iter().zip(&dv).map(|(a, w)| a / w - lambda_hat).collect(),
        Metric::H1 => {
            let a = assemble_lb_neumann(g.mesh())?.stiffness.add_diagonal(&dv);
            let chol = EnvelopeCholesky::factor_with_ordering(&a, rcm_ordering(&a))?;
            let r = chol.solve(grad);
            let nrm = chol.solve(&dv);
            let k = dot(&dv, &r) / dot(&dv, &nrm);
            r.iter().zip(&nrm).map(|(a, b)| a - k * b).collect()
        }
    };
    let slope = dot(grad, &d);
    Ok(Direction { d, lambda_hat, slope })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn weighted_std(mesh: &SphericalMesh, f: &[f64]) -> (f64, f64) {
    let w = mesh.node_weights();
    let tot: f64 = w.iter().sum();
    let mean = dot(w, f) / tot;
    let var = w.iter().zip(f).map(|(a, x)| a * (x - mean).powi(2)).sum::<f64>() / tot;
    (mean, var.sqrt())
}

fn initial_graph<'a>(mesh: &'a SphericalMesh, cfg: &FlowConfig) -> Result<RadialGraph<'a>> {
    let g = match &cfg.init {
        Init::Constant => RadialGraph::constant(mesh, 0.0),
        Init::Eigenmode { index, amplitude } => {
            let spec = solve_neumann_spectrum(mesh, *index)?;
            let w = &spec.eigenvectors[*index];
            RadialGraph::new(mesh, w.iter().map(|x| amplitude * x).collect())?
        }
        Init::Phi(phi) => RadialGraph::new(mesh, phi.clone())?,
    };
    project_volume(&g, cfg.c_target)
}

/// Reference values at the constant graph of volume `c`.
pub fn baseline_compare(mesh: &SphericalMesh, cfg: &FlowConfig, achieved: f64) -> Result<Baseline> {
    let prob = Problem::new(mesh, cfg)?;
    let g = project_volume(&RadialGraph::constant(mesh, 0.0), cfg.c_target)?;
    let baseline = prob.value(&g)?;
    let n = mesh.dim();
    let area = surface_measure(mesh);
    let closed_form = match cfg.functional {
        Functional::Perimeter => {
            let r = crate::torsion::sector_radius(cfg.c_target, area, n);
            r.powi(n as i32 - 1) * area
        }
        Functional::Torsion => fixed_volume_sector_energy(cfg.c_target, area, n),
    };
    Ok(Baseline { baseline, closed_form, achieved, margin: baseline - achieved })
}

/// Runs the descent from `cfg.init` and returns the trace and the last accepted graph.
pub fn run_flow(cfg: &FlowConfig, mesh: &SphericalMesh) -> Result<FlowResult> {
    cfg.validate()?;
    let prob = Problem::new(mesh, cfg)?;
    let mut g = initial_graph(mesh, cfg)?;
    let mut cur = prob.eval(&g)?;
    let mut dir = riesz_projected_gradient(&g, &cur.grad, cfg.metric)?;
    let mut step = cfg.step0;
    let mut streak = 0usize;
    let mut steps = Vec::new();
    let mut converged = false;
    let mut stalled = false;
    let mut iter = 0usize;
    let record = |iter: usize, g: &RadialGraph, e: &Eval, dir: &Direction, step: f64| -> Result<FlowStep> {
        let residual = match &e.flux {
            None => cmc_residual(g, dir.lambda_hat).norm,
            Some(x) => x.stats.cv,
        };
        Ok(FlowStep {
            iter,
            value: e.value,
            volume: volume(g)?,
            grad_norm: dir.slope.max(0.0).sqrt(),
            step,
            residual,
            phi_min: g.phi().iter().cloned().fold(f64::INFINITY, f64::min),
            phi_max: g.phi().iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        })
    };
    steps.push(record(0, &g, &cur, &dir, 0.0)?);
    while iter < cfg.max_iters {
        if dir.slope.max(0.0).sqrt() <= cfg.tol_grad {
            converged = true;
            break;
        }
        let dmax = dir.d.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        step = step.min(cfg.max_dphi / dmax);
        let accepted = loop {
            if step < 1e-14 * cfg.step0 {
                break None;
            }
            let trial = project_volume(&g.perturbed(-step, &dir.d), cfg.c_target)?;
            match prob.value(&trial) {
                Ok(v) if v <= cur.value - cfg.armijo * step * dir.slope => break Some(trial),
                Ok(_) | Err(Error::Solver(_)) => step *= cfg.shrink,
                Err(e) => return Err(e),
            }
        };
        let Some(next) = accepted else {
            stalled = true;
            break;
        };
        iter += 1;
        g = next;
        cur = prob.eval(&g)?;
        dir = riesz_projected_gradient(&g, &cur.grad, cfg.metric)?;
        steps.push(record(iter, &g, &cur, &dir, step)?);
        streak += 1;
        if streak >= 3 {
            step *= cfg.grow;
            streak = 0;
        }
    }
    if !converged && !stalled && dir.slope.max(0.0).sqrt() <= cfg.tol_grad {
        converged = true;
    }

    let (mean, phi_std) = weighted_std(mesh, g.phi());
    let (cmc, orth) = match cfg.functional {
        Functional::Perimeter => {
            let orth = if mesh.boundary().is_empty() { None } else { Some(orthogonality_residual(&g)?.sup) };
            (Some(cmc_residual(&g, dir.lambda_hat).norm), orth)
        }
        Functional::Torsion => (None, None),
    };
    let diagnostics = FlowDiagnostics {
        lambda_hat: dir.lambda_hat,
        cmc_residual: cmc,
        orthogonality_residual: orth,
        flux: cur.flux.map(|f| f.stats),
        lambda_hat_flux: cur.flux.map(|f| f.lambda_flux),
        lagrange_from_flux: cur.flux.map(|f| f.lagrange),
        phi_std,
        nonradial: phi_std > 1e-3 * (1.0 + mean.abs()),
    };
    let baseline = baseline_compare(mesh, cfg, cur.value)?;
    let trace = FlowTrace {
        functional: cfg.functional,
        c_target: cfg.c_target,
        steps,
        converged,
        stalled,
        iterations: iter,
        diagnostics,
        baseline,
    };
    Ok(FlowResult { trace, phi: g.into_phi() })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use super::*;
    use crate::sphere_geom::{build_domain, DomainSpec};

    fn arc(beta: f64, h: f64) -> SphericalMesh {
        build_domain(&DomainSpec::Arc { beta }, h).unwrap()
    }

    #[test]
    fn directions_vanish_at_constants() {
        let m = arc(FRAC_PI_2, 0.05);
        let g = RadialGraph::constant(&m, 0.0);
        let d = riesz_projected_gradient(&g, &perimeter_gradient_vector(&g), Metric::L2).unwrap();
        assert!((d.lambda_hat - 1.0).abs() < 1e-12);
        assert!(d.d.iter().all(|x| x.abs() < 1e-12));
        let cfg = FlowConfig::new(Functional::Torsion, 1.0, Init::Constant);
        let e = Problem::new(&m, &cfg).unwrap().eval(&g).unwrap();
        let d = riesz_projected_gradient(&g, &e.grad, Metric::L2).unwrap();
        assert!((d.lambda_hat + 0.125).abs() < 1e-3, "{}", d.lambda_hat);
        assert!(d.d.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn directions_are_tangent_and_descending() {
        let m = build_domain(&DomainSpec::Cap { theta: 0.3, r: 0.4 }, 0.1).unwrap();
        let phi: Vec<f64> = m.nodes().iter().map(|x| 0.2 * x[0] - 0.1 * x[1] * x[2]).collect();
        let g = RadialGraph::new(&m, phi).unwrap();
        let dv = volume_gradient_vector(&g);
        for metric in [Metric::L2, Metric::H1] {
            let d = riesz_projected_gradient(&g, &perimeter_gradient_vector(&g), metric).unwrap();
            assert!(dot(&dv, &d.d).abs() < 1e-10);
            assert!(d.slope > 0.0);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = FlowConfig::new(Functional::Perimeter, 1.0, Init::Eigenmode { index: 0, amplitude: 0.1 });
        assert!(cfg.validate().is_err());
        cfg.init = Init::Constant;
        cfg.shrink = 1.5;
        assert!(cfg.validate().is_err());
        assert!("area".parse::<Functional>().is_err());
        let m = build_domain(&DomainSpec::Hemisphere, 0.2).unwrap();
        let t = FlowConfig::new(Functional::Torsion, 1.0, Init::Constant);
        assert!(matches!(run_flow(&t, &m), Err(Error::Unsupported(_))));
    }

    #[test]
    fn convex_perimeter_flow_returns_to_sector() {
        let m = arc(FRAC_PI_2, 0.05);
        let mut cfg = FlowConfig::new(Functional::Perimeter, 1.0, Init::Eigenmode { index: 1, amplitude: 0.1 });
        cfg.metric = Metric::H1;
        let r = run_flow(&cfg, &m).unwrap();
        let t = &r.trace;
        assert!(t.converged, "{} iterations", t.iterations);
        assert!(t.is_monotone());
        assert!(t.steps.iter().all(|s| (s.volume - 1.0).abs() < 1e-12));
        assert!(t.baseline.margin.abs() < 1e-8);
        assert!(!t.diagnostics.nonradial);
    }
}
