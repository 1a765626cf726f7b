//! Command-line front end: argument parsing, dispatch, report files and the
//! run manifest.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::certificates::{cap_criterion_closed_form, check_condition_1_7, tube_criterion_closed_form, tunnel_criterion};
use crate::error::{Error, Result};
use crate::flow::{run_flow, FlowConfig, Functional, Init, Metric, TorsionGradient};
use crate::graph_functionals::{
    cmc_residual, graph_geometry, orthogonality_residual, perimeter, perimeter_gradient_vector, volume,
    volume_gradient_vector, RadialGraph,
};
use crate::report::{csv_table, fmt_f64, OracleDelta, Tagged};
use crate::spectral::solve_neumann_spectrum;
use crate::sphere_geom::{build_domain, read_mesh, read_phi, surface_measure, write_mesh, write_phi, DomainSpec, SpherePoint, SphericalMesh};
use crate::torsion::{flux_stats, halfspace_audit, restrict_to_profile, sector_energy, solve_torsion, ProfileDomain};

const SPEC_HELP: &str = "Domain spec strings have the form name:key=value,...  Angles are in radians, \
or in degrees with a 'deg' suffix.\n\
  arc:beta=<width>                 arc of S¹ centred on e₁\n\
  cap:theta=<tilt>,r=<height>      {x·(sinθ e₁ + cosθ e₃) > r} on S²\n\
  hemisphere                       {x₃ > 0} on S²\n\
  tunnel:theta=<t>,r=<h>,eps=<w>   two caps at ±θ joined by the strip |x₂| < eps\n\
  tube:k=1,r=<half-width>          geodesic r-neighbourhood of the equator\n\
  file:path=<mesh file>            mesh read from disk";

#[derive(Parser, Debug)]
#[command(name = "conecert", version, about = "Stability certificates and constrained flows in spherical cones", after_help = SPEC_HELP)]
struct Cli {
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for random initial data.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Suppress the human-readable summary.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mesh a domain and write it to a mesh file.
    Mesh {
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Neumann eigenvalues of the Laplace–Beltrami operator.
    Spectrum {
        #[command(flatten)]
        domain: DomainArgs,
        /// Number of nonzero eigenvalues.
        #[arg(short = 'k', long, default_value_t = 6)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check λ₁ < N−1 and the area bound, with the boundary criterion integral.
    Certify {
        #[command(flatten)]
        domain: DomainArgs,
        /// Direction e for the criterion, comma separated (default: a symmetry axis).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        e: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the torsion problem on Ω_φ.
    Torsion {
        #[command(flatten)]
        domain: DomainArgs,
        /// Mesh file (alternative to --spec).
        #[arg(long, conflicts_with = "spec")]
        mesh: Option<PathBuf>,
        /// Nodal φ file (default φ ≡ 0).
        #[arg(long)]
        phi: Option<PathBuf>,
        /// Radial intervals.
        #[arg(long, default_value_t = 128)]
        ns: usize,
        /// Field CSV with columns s, node-id, u.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Volume, perimeter, mean curvature and criticality residuals of Γ_φ.
    Functionals {
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long, conflicts_with = "spec")]
        mesh: Option<PathBuf>,
        #[arg(long)]
        phi: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Volume-constrained gradient descent.
    Flow(FlowArgs),
    /// Certificates over a one-parameter family of domains.
    Sweep {
        /// Base spec; the swept key is appended.
        #[arg(long)]
        spec: String,
        /// Key to sweep, e.g. r or theta.
        #[arg(long)]
        param: String,
        /// `start:end:count` (inclusive) or a comma separated list.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long, default_value_t = 0.05)]
        h: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct DomainArgs {
    /// Domain spec string (see below).
    #[arg(long)]
    spec: Option<String>,
    /// Target mesh size.
    #[arg(long, default_value_t = 0.05)]
    h: f64,
}

#[derive(Args, Debug)]
struct FlowArgs {
    #[arg(long, value_parser = ["perimeter", "torsion"])]
    functional: String,
    #[command(flatten)]
    domain: DomainArgs,
    /// Target volume.
    #[arg(long)]
    volume: f64,
    /// constant | w<k>:<amp> | rand:<amp> | file:<path>
    #[arg(long, default_value = "w1:0.05")]
    init: String,
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
    #[arg(long)]
    tol_grad: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    step0: f64,
    #[arg(long, value_parser = ["l2", "h1"], default_value = "l2")]
    metric: String,
    /// Torsion gradient: discrete (exact for the discrete energy) or flux.
    #[arg(long, value_parser = ["discrete", "flux"], default_value = "discrete")]
    gradient: String,
    /// Radial intervals of the torsion grid.
    #[arg(long, default_value_t = 64)]
    ns: usize,
    /// Trace CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    phi_out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

/// A failure tagged with the stage that produced it.
struct Failure {
    stage: &'static str,
    err: Error,
}

trait Stage<T> {
    fn stage(self, name: &'static str) -> std::result::Result<T, Failure>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, name: &'static str) -> std::result::Result<T, Failure> {
        self.map_err(|err| Failure { stage: name, err })
    }
}

type Run<T> = std::result::Result<T, Failure>;

struct Ctx {
    quiet: bool,
    seed: u64,
    outputs: Vec<PathBuf>,
}

impl Ctx {
    fn say(&self, text: &str) {
        if !self.quiet {
            print!("{text}");
        }
    }

    fn write(&mut self, path: &Path, contents: &str) -> Run<()> {
        std::fs::write(path, contents).map_err(Error::from).stage("write output")?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    /// JSON to `out`, or to stdout when no path is given.
    fn emit_json<T: Serialize>(&mut self, out: Option<&Path>, value: &T) -> Run<()> {
        let text = serde_json::to_string_pretty(value).map_err(Error::from).stage("serialize report")? + "\n";
        match out {
            Some(p) => self.write(p, &text),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

/// Parses `args`, runs the subcommand and returns the process exit code:
/// 0 on success, 2 for configuration errors, 1 for numerical failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 };
            }
            let msg = e.to_string();
            let line = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("{}", line.trim());
            return 2;
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return 2;
        }
        // a second initialisation in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let start = Instant::now();
    let mut ctx = Ctx { quiet: cli.quiet, seed: cli.seed, outputs: Vec::new() };
    let name = subcommand_name(&cli.command);
    let result = dispatch(&cli.command, &mut ctx);
    let code = match &result {
        Ok(()) => 0,
        Err(f) if f.err.is_config() => {
            eprintln!("error: {}", f.err);
            2
        }
        Err(f) => {
            eprintln!("error in {}: {}", f.stage, f.err);
            1
        }
    };
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": name,
        "argv": argv.iter().map(|a| a.to_string_lossy().into_owned()).collect::<Vec<_>>(),
        "seed": cli.seed,
        "threads": cli.threads,
        "exit_code": code,
        "outputs": ctx.outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "wall_seconds": start.elapsed().as_secs_f64(),
    });
    let text = serde_json::to_string_pretty(&manifest).unwrap_or_default();
    match ctx.outputs.first() {
        Some(first) => {
            let mut p = first.clone().into_os_string();
            p.push(".manifest.json");
            if let Err(e) = std::fs::write(&p, text + "\n") {
                eprintln!("warning: could not write manifest: {e}");
            }
        }
        None if !cli.quiet && code == 0 => eprintln!("{text}"),
        None => {}
    }
    code
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Mesh { .. } => "mesh",
        Command::Spectrum { .. } => "spectrum",
        Command::Certify { .. } => "certify",
        Command::Torsion { .. } => "torsion",
        Command::Functionals { .. } => "functionals",
        Command::Flow(_) => "flow",
        Command::Sweep { .. } => "sweep",
    }
}

fn dispatch(cmd: &Command, ctx: &mut Ctx) -> Run<()> {
    match cmd {
        Command::Mesh { domain, out } => cmd_mesh(domain, out, ctx),
        Command::Spectrum { domain, k, out } => cmd_spectrum(domain, *k, out.as_deref(), ctx),
        Command::Certify { domain, e, out } => cmd_certify(domain, e.as_deref(), out.as_deref(), ctx),
        Command::Torsion { domain, mesh, phi, ns, out, report } => {
            cmd_torsion(domain, mesh.as_deref(), phi.as_deref(), *ns, out.as_deref(), report.as_deref(), ctx)
        }
        Command::Functionals { domain, mesh, phi, out } => cmd_functionals(domain, mesh.as_deref(), phi.as_deref(), out.as_deref(), ctx),
        Command::Flow(a) => cmd_flow(a, ctx),
        Command::Sweep { spec, param, values, h, out } => cmd_sweep(spec, param, values, *h, out.as_deref(), ctx),
    }
}

fn parse_spec(s: &str) -> Run<DomainSpec> {
    let spec: DomainSpec = s.parse().stage("parse spec")?;
    spec.validate().stage("parse spec")?;
    Ok(spec)
}

fn load_domain(d: &DomainArgs, mesh: Option<&Path>) -> Run<SphericalMesh> {
    match (mesh, &d.spec) {
        (Some(p), _) => read_mesh(p).stage("read mesh"),
        (None, Some(s)) => build_domain(&parse_spec(s)?, d.h).stage("mesh"),
        (None, None) => Err(Failure { stage: "parse arguments", err: Error::InvalidSpec("one of --spec or --mesh is required".into()) }),
    }
}

fn load_phi(mesh: &SphericalMesh, phi: Option<&Path>) -> Run<Vec<f64>> {
    match phi {
        Some(p) => {
            let v = read_phi(p).stage("read phi")?;
            if v.len() != mesh.num_nodes() {
                return Err(Failure { stage: "read phi", err: Error::SizeMismatch { expected: mesh.num_nodes(), got: v.len() } });
            }
            Ok(v)
        }
        None => Ok(vec![0.0; mesh.num_nodes()]),
    }
}

fn summary(rows: &[(&str, String)]) -> String {
    let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let mut s = String::new();
    for (k, v) in rows {
        writeln!(s, "{k:<w$}  {v}").unwrap();
    }
    s
}

fn cmd_mesh(d: &DomainArgs, out: &Path, ctx: &mut Ctx) -> Run<()> {
    let mesh = load_domain(d, None)?;
    write_mesh(&mesh, out).stage("write output")?;
    ctx.outputs.push(out.to_path_buf());
    ctx.say(&summary(&[
        ("nodes", mesh.num_nodes().to_string()),
        ("cells", mesh.num_cells().to_string()),
        ("boundary entries", mesh.boundary().len().to_string()),
        ("area", fmt_f64(surface_measure(&mesh))),
    ]));
    Ok(())
}

fn cmd_spectrum(d: &DomainArgs, k: usize, out: Option<&Path>, ctx: &mut Ctx) -> Run<()> {
    let mesh = load_domain(d, None)?;
    if k == 0 || k >= mesh.num_nodes() {
        return Err(Failure { stage: "parse arguments", err: Error::InvalidArgument(format!("k must lie in 1..{}", mesh.num_nodes())) });
    }
    let spec = solve_neumann_spectrum(&mesh, k).stage("eigensolve")?;
    let mut oracle = Vec::new();
    if let Some(&DomainSpec::Arc { beta }) = mesh.spec() {
        for (j, l) in spec.eigenvalues.iter().enumerate().skip(1) {
            oracle.push(OracleDelta::new(&format!("lambda{j}"), *l, (j as f64 * std::f64::consts::PI / beta).powi(2)));
        }
    }
    let report = json!({
        "domain": mesh.spec().map(|s| s.to_string()),
        "dim": spec.dim,
        "nodes": mesh.num_nodes(),
        "method": spec.method,
        "lambdas": spec.eigenvalues.iter().map(|&v| Tagged::numeric(v)).collect::<Vec<_>>(),
        "alphas": spec.alphas.iter().map(|&v| Tagged::derived(v)).collect::<Vec<_>>(),
        "residuals": spec.residuals,
        "oracle": oracle,
    });
    if out.is_some() {
        let rows: Vec<(String, String)> =
            spec.eigenvalues.iter().zip(&spec.alphas).enumerate().map(|(j, (l, a))| (format!("lambda{j}"), format!("{l:.10}  alpha {a:.10}"))).collect();
        let rows: Vec<(&str, String)> = rows.iter().map(|(a, b)| (a.as_str(), b.clone())).collect();
        ctx.say(&summary(&rows));
    }
    ctx.emit_json(out, &report)
}

fn cmd_certify(d: &DomainArgs, e: Option<&[f64]>, out: Option<&Path>, ctx: &mut Ctx) -> Run<()> {
    let mesh = load_domain(d, None)?;
    let coords = match e {
        Some(v) => v.to_vec(),
        None => mesh.spec().map(|s| s.default_direction()).unwrap_or_else(|| {
            let mut v = vec![0.0; mesh.dim()];
            v[0] = 1.0;
            v
        }),
    };
    let dir = SpherePoint::normalized(coords).stage("parse arguments")?;
    let report = check_condition_1_7(&mesh, &dir).stage("certify")?;
    if out.is_some() {
        ctx.say(&summary(&[
            ("domain", report.domain.clone()),
            ("lambda1", format!("{:.10} (threshold {})", report.lambda1.value, report.threshold.value)),
            ("area", format!("{:.10} (hemisphere {:.10})", report.area.value, report.hemisphere_area.value)),
            ("criterion integral", format!("{:.10}", report.criterion_integral.value)),
            ("condition_1_7", serde_json::to_string(&report.verdicts.condition_1_7).unwrap()),
        ]));
    }
    ctx.emit_json(out, &report)
}

fn cmd_torsion(
    d: &DomainArgs,
    mesh_path: Option<&Path>,
    phi_path: Option<&Path>,
    ns: usize,
    out: Option<&Path>,
    report_path: Option<&Path>,
    ctx: &mut Ctx,
) -> Run<()> {
    let mesh = load_domain(d, mesh_path)?;
    let phi = load_phi(&mesh, phi_path)?;
    let (profile, groups) = ProfileDomain::from_mesh(&mesh).stage("torsion setup")?;
    let pphi = restrict_to_profile(&groups, &phi).stage("torsion setup")?;
    let field = solve_torsion(&profile, &pphi, ns).stage("torsion solve")?;
    let stats = flux_stats(&profile, &pphi, &field.flux);
    let n = mesh.dim();
    let constant = pphi.iter().all(|&p| p == pphi[0]);
    let mut oracle = Vec::new();
    if constant {
        oracle.push(OracleDelta::new("energy", field.energy_u, sector_energy(pphi[0].exp(), profile.area(), n)));
        oracle.push(OracleDelta::new("mean flux", stats.mean, -pphi[0].exp() / n as f64));
    }
    let report = json!({
        "dim": n,
        "n_s": field.n_s,
        "n_q": field.n_q,
        "unknowns": field.unknowns,
        "E_u": Tagged::numeric(field.energy_u),
        "E_grad": Tagged::numeric(field.energy_grad),
        "gap": field.gap(),
        "flux": stats,
        "volume": Tagged::numeric(profile.volume(&pphi)),
        "halfspace": halfspace_audit(profile.volume(&pphi), n),
        "oracle": oracle,
    });
    if let Some(p) = out {
        let mut rows = Vec::new();
        for i in 0..=field.n_s {
            for (j, grp) in groups.iter().enumerate() {
                for &node in grp {
                    rows.push(vec![fmt_f64(field.s(i)), node.to_string(), fmt_f64(field.value(i, j))]);
                }
            }
        }
        ctx.write(p, &csv_table(&["s", "node_id", "u"], &rows))?;
    }
    ctx.say(&summary(&[
        ("E_u", fmt_f64(field.energy_u)),
        ("E_grad", fmt_f64(field.energy_grad)),
        ("flux mean", fmt_f64(stats.mean)),
        ("flux cv", format!("{:.3e}", stats.cv)),
    ]));
    match report_path {
        Some(p) => ctx.emit_json(Some(p), &report),
        None => Ok(()),
    }
}

fn cmd_functionals(d: &DomainArgs, mesh_path: Option<&Path>, phi_path: Option<&Path>, out: Option<&Path>, ctx: &mut Ctx) -> Run<()> {
    let mesh = load_domain(d, mesh_path)?;
    let phi = load_phi(&mesh, phi_path)?;
    let g = RadialGraph::new(&mesh, phi).stage("read phi")?;
    let v = volume(&g).stage("functionals")?;
    let p = perimeter(&g).stage("functionals")?;
    let lambda = perimeter_gradient_vector(&g).iter().sum::<f64>() / volume_gradient_vector(&g).iter().sum::<f64>();
    let geo = graph_geometry(&g).stage("geometry")?;
    let h = geo.mean_curvatures();
    let stats = |x: &[f64]| {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        json!({
            "min": x.iter().cloned().fold(f64::INFINITY, f64::min),
            "max": x.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            "mean": mean,
        })
    };
    let cmc = cmc_residual(&g, lambda);
    let orth = if mesh.boundary().is_empty() { None } else { Some(orthogonality_residual(&g).stage("residuals")?) };
    let report = json!({
        "nodes": mesh.num_nodes(),
        "volume": Tagged::numeric(v),
        "perimeter": Tagged::numeric(p),
        "lambda_hat": Tagged::numeric(lambda),
        "mean_curvature": stats(&h),
        "cmc_residual": cmc,
        "orthogonality_residual": orth,
    });
    if out.is_some() {
        ctx.say(&summary(&[("volume", fmt_f64(v)), ("perimeter", fmt_f64(p)), ("cmc residual", format!("{:.3e}", cmc.norm))]));
    }
    ctx.emit_json(out, &report)
}

fn parse_init(s: &str, mesh: &SphericalMesh, seed: u64) -> Run<Init> {
    let bad = || Failure { stage: "parse arguments", err: Error::InvalidSpec(format!("bad --init {s:?} (constant, w<k>:<amp>, rand:<amp>, file:<path>)")) };
    if s == "constant" {
        return Ok(Init::Constant);
    }
    let (head, tail) = s.split_once(':').ok_or_else(bad)?;
    if head == "file" {
        let phi = read_phi(Path::new(tail)).stage("read phi")?;
        if phi.len() != mesh.num_nodes() {
            return Err(Failure { stage: "read phi", err: Error::SizeMismatch { expected: mesh.num_nodes(), got: phi.len() } });
        }
        return Ok(Init::Phi(phi));
    }
    let amp: f64 = tail.parse().map_err(|_| bad())?;
    if head == "rand" {
        // random combination of the first four Neumann modes, unit L² norm
        let k = 4.min(mesh.num_nodes() - 1);
        let spec = solve_neumann_spectrum(&mesh, k).stage("eigensolve")?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let mut phi = vec![0.0; mesh.num_nodes()];
        for (cj, w) in c.iter().zip(&spec.eigenvectors[1..]) {
            for (p, x) in phi.iter_mut().zip(w) {
                *p += amp * cj / norm * x;
            }
        }
        return Ok(Init::Phi(phi));
    }
    let index: usize = head.strip_prefix('w').and_then(|k| k.parse().ok()).ok_or_else(bad)?;
    Ok(Init::Eigenmode { index, amplitude: amp })
}

fn cmd_flow(a: &FlowArgs, ctx: &mut Ctx) -> Run<()> {
    let functional: Functional = a.functional.parse().stage("parse arguments")?;
    let mesh = load_domain(&a.domain, None)?;
    let init = parse_init(&a.init, &mesh, ctx.seed)?;
    let mut cfg = FlowConfig::new(functional, a.volume, init);
    cfg.max_iters = a.max_iters;
    cfg.step0 = a.step0;
    if let Some(t) = a.tol_grad {
        cfg.tol_grad = t;
    }
    cfg.metric = if a.metric == "h1" { Metric::H1 } else { Metric::L2 };
    cfg.torsion_gradient = if a.gradient == "flux" { TorsionGradient::Flux } else { TorsionGradient::Discrete };
    cfg.n_s = a.ns;
    cfg.validate().stage("parse arguments")?;
    let res = run_flow(&cfg, &mesh).stage("flow")?;
    let t = &res.trace;
    if let Some(p) = &a.out {
        let rows: Vec<Vec<String>> = t
            .steps
            .iter()
            .map(|s| {
                vec![s.iter.to_string(), fmt_f64(s.value), fmt_f64(s.volume), fmt_f64(s.grad_norm), fmt_f64(s.step), fmt_f64(s.residual)]
            })
            .collect();
        ctx.write(p, &csv_table(&["iter", "value", "volume", "grad_norm", "step", "cmc_or_flux_residual"], &rows))?;
    }
    if let Some(p) = &a.phi_out {
        write_phi(&res.phi, p).stage("write output")?;
        ctx.outputs.push(p.clone());
    }
    let report = json!({
        "config": cfg,
        "converged": t.converged,
        "stalled": t.stalled,
        "iterations": t.iterations,
        "final_value": Tagged::numeric(t.final_value()),
        "baseline": {
            "numeric": Tagged::numeric(t.baseline.baseline),
            "closed_form": Tagged::closed(t.baseline.closed_form),
            "margin": Tagged::derived(t.baseline.margin),
        },
        "diagnostics": t.diagnostics,
    });
    ctx.say(&summary(&[
        ("iterations", t.iterations.to_string()),
        ("status", if t.converged { "converged" } else if t.stalled { "stalled" } else { "max-iters" }.to_string()),
        ("final value", fmt_f64(t.final_value())),
        ("baseline", fmt_f64(t.baseline.baseline)),
        ("margin", format!("{:.6e}", t.baseline.margin)),
        ("nonradial", t.diagnostics.nonradial.to_string()),
    ]));
    match &a.report {
        Some(p) => ctx.emit_json(Some(p), &report),
        None => Ok(()),
    }
}

fn parse_values(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidSpec(format!("bad --values {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    let vals = if parts.len() == 3 {
        let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        match n {
            0 => Vec::new(),
            1 => vec![a],
            _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
        }
    } else {
        s.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?
    };
    if vals.is_empty() {
        return Err(Error::InvalidSpec("parameter grid is empty".into()));
    }
    Ok(vals)
}

/// `base` with `param` set to `value`, replacing an existing entry.
fn with_param(base: &str, param: &str, value: &str) -> String {
    let (name, rest) = base.trim().split_once(':').unwrap_or((base.trim(), ""));
    let mut parts: Vec<String> = rest
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty() && !p.split('=').next().unwrap_or("").trim().eq_ignore_ascii_case(param))
        .map(String::from)
        .collect();
    parts.push(format!("{param}={value}"));
    format!("{name}:{}", parts.join(","))
}

fn sweep_row(base: &str, param: &str, value: f64, h: f64) -> Vec<String> {
    let text = with_param(base, param, &fmt_f64(value));
    let mut row = vec![param.to_string(), fmt_f64(value)];
    let cells = (|| -> Result<Vec<String>> {
        let spec: DomainSpec = text.parse()?;
        let mesh = build_domain(&spec, h)?;
        let dir = SpherePoint::normalized(spec.default_direction())?;
        let r = check_condition_1_7(&mesh, &dir)?;
        let closed = match spec {
            DomainSpec::Cap { theta, r } => Some(cap_criterion_closed_form(theta, r, 3)?),
            DomainSpec::Tube { r, .. } => Some(tube_criterion_closed_form(r)),
            DomainSpec::Tunnel { theta, r, eps } => Some(tunnel_criterion(theta, r, eps, 3, None)?.exact_total.value),
            _ => None,
        };
        let v = |x: crate::report::Verdict| serde_json::to_value(x).map(|j| j.to_string()).unwrap_or_default().trim_matches('"').to_string();
        Ok(vec![
            spec.to_string(),
            mesh.num_nodes().to_string(),
            fmt_f64(r.lambda1.value),
            fmt_f64(r.area.value),
            fmt_f64(r.hemisphere_area.value),
            v(r.verdicts.lambda1_lt),
            v(r.verdicts.area_lt),
            v(r.verdicts.condition_1_7),
            fmt_f64(r.criterion_integral.value),
            closed.map(fmt_f64).unwrap_or_default(),
            v(r.verdicts.criterion_negative),
        ])
    })();
    match cells {
        Ok(c) => {
            row.extend(c);
            row.push(String::new());
        }
        Err(e) => {
            row.push(text);
            row.extend(std::iter::repeat(String::new()).take(10));
            row.push(e.to_string());
        }
    }
    row
}

fn cmd_sweep(base: &str, param: &str, values: &str, h: f64, out: Option<&Path>, ctx: &mut Ctx) -> Run<()> {
    let vals = parse_values(values).stage("parse arguments")?;
    if !(h > 0.0) {
        return Err(Failure { stage: "parse arguments", err: Error::InvalidSpec(format!("mesh size h must be positive, got {h}")) });
    }
    let rows: Vec<Vec<String>> = vals.par_iter().map(|&v| sweep_row(base, param, v, h)).collect();
    let header = [
        "param",
        "value",
        "spec",
        "nodes",
        "lambda1",
        "area",
        "hemisphere_area",
        "lambda1_lt",
        "area_lt",
        "condition_1_7",
        "criterion_integral",
        "criterion_closed_form",
        "criterion_negative",
        "failure",
    ];
    let table = csv_table(&header, &rows);
    match out {
        Some(p) => {
            ctx.write(p, &table)?;
            let failed = rows.iter().filter(|r| !r.last().unwrap().is_empty()).count();
            ctx.say(&summary(&[("rows", rows.len().to_string()), ("failed rows", failed.to_string())]));
        }
        None => print!("{table}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_replaces_swept_key() {
        assert_eq!(with_param("cap:theta=0,r=0.2", "r", "0.5"), "cap:theta=0,r=0.5");
        assert_eq!(with_param("tube:k=1", "r", "0.3"), "tube:k=1,r=0.3");
        assert_eq!(with_param("hemisphere", "x", "1"), "hemisphere:x=1");
    }

    #[test]
    fn value_grids() {
        assert_eq!(parse_values("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_values("0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        assert!(parse_values("0:1:0").is_err());
        assert!(parse_values("a,b").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["conecert", "certify", "--spec", "cap:theta=0.1,r=2"]), 2);
        assert_eq!(run(["conecert", "frobnicate"]), 2);
        assert_eq!(run(["conecert", "--quiet", "torsion", "--spec", "cap:theta=0.3,r=0.5"]), 2);
    }

    #[test]
    fn init_strings() {
        let m = build_domain(&DomainSpec::Arc { beta: 2.0 }, 0.1).unwrap();
        assert_eq!(parse_init("w2:0.1", &m, 0).ok(), Some(Init::Eigenmode { index: 2, amplitude: 0.1 }));
        assert!(parse_init("q:1", &m, 0).is_err());
        let a = parse_init("rand:0.1", &m, 7).ok().unwrap();
        let b = parse_init("rand:0.1", &m, 7).ok().unwrap();
        assert_eq!(a, b);
    }
}
