use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use l96::bifurcation::{first_hopf, first_lyapunov, hopf_hopf, wave_diagnostics};
use l96::dynamics::{
    audit, energy_loss_rate, integrate_adaptive, integrate_rk4, random_initial, random_state, reduce_n4,
    reduce_n6, AdaptiveOptions, Forcing, Invariant, InvariantSet, SolverMeta, SystemSpec, Trajectory,
};
use l96::equilibria::{
    apriori_bound, homotopy_solve, local_stability, step_forcing, write_stationary_csv, StationaryProblem,
};
use l96::experiments::{
    crest_velocity, ensemble_search, hovmoeller_grid, ns_bracket, spatial_period, hopf_hopf_row, temporal_period,
    write_hopf_hopf_csv, EnsembleConfig, FollowConfig, Interpolation,
};
use l96::gmap::{self, GMap};
use l96::spectral::{eigencurve, laurent_of};
use l96::Error;

#[derive(Parser)]
#[command(name = "l96", version, about = "Analysis and simulation of Lorenz '96 style advection systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the basis of energy-preserving k-local maps as JSON
    Basis {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Eigenvalue curve of the linearization at a constant state, as CSV
    Eigencurve {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long, default_value_t = 720)]
        samples: usize,
        /// Curve samples `s,re,im`
        #[arg(long)]
        out: Option<PathBuf>,
        /// Discrete eigenvalues `j,re,im`
        #[arg(long)]
        discrete: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// First Hopf bifurcation, its Lyapunov coefficient and wave speeds, as JSON
    Hopf {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hopf-Hopf normal form; several N give the table of analytic columns as CSV
    HopfHopf {
        #[arg(long, default_value = "G3")]
        gmap: String,
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        /// Force CSV output even for a single N
        #[arg(long)]
        table: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the system and write the trajectory as CSV
    Simulate {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hovmoeller raster of a simulation window plus period and crest diagnostics
    Hovmoeller {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Window start; defaults to ten time units before the end
        #[arg(long)]
        from: Option<f64>,
        /// Window end; defaults to the end of the run
        #[arg(long)]
        to: Option<f64>,
        /// Interpolated points per site (1 disables the spline)
        #[arg(long, default_value_t = 4)]
        refine: usize,
        /// Largest crest displacement between rows, in sites
        #[arg(long, default_value_t = 0.1)]
        max_jump: f64,
        /// Raster `t,s,x`
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Diagnostics JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stationary solution by homotopy in the forcing
    Stationary {
        #[arg(long, default_value = "G3")]
        gmap: String,
        #[arg(long)]
        n: usize,
        /// Uniform forcing
        #[arg(long, conflicts_with_all = ["step", "params"])]
        f: Option<f64>,
        /// Forcing 1 on the first half of the sites and M on the second
        #[arg(long, value_name = "M", conflicts_with = "params")]
        step: Option<f64>,
        /// Per-site parameter file; alpha must be 1
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = l96::equilibria::NEWTON_TOL)]
        tol: f64,
        /// Solution `i,F,x`
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continuation path JSON
        #[arg(long)]
        path: Option<PathBuf>,
    },
    /// Ensemble search for coexisting limit cycles, optionally following one down in F
    Ensemble {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 1000.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value_t = 1e-8)]
        rtol: f64,
        #[arg(long, default_value_t = 1e-10)]
        atol: f64,
        /// Follow the cycle with this spatial period down from F and bracket its loss
        #[arg(long, value_name = "M")]
        follow: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        f_lo: f64,
        #[arg(long, default_value_t = 1e-3)]
        tol_f: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Energy drift of the inviscid system under RK4 and the adaptive solver
    EnergyAudit {
        #[arg(long, default_value = "G3")]
        gmap: String,
        #[arg(long, default_value_t = 36)]
        n: usize,
        /// Initial energy of x_j = c (1 + sin(2 pi j / N))
        #[arg(long, default_value_t = 400.0)]
        energy: f64,
        #[arg(long, default_value_t = 100.0)]
        t1: f64,
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
        #[arg(long, default_value_t = 1e-10)]
        rtol: f64,
        #[arg(long, default_value_t = 1e-12)]
        atol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Drift of the conserved quantities of the inviscid system
    Invariants {
        #[arg(long, default_value = "G3-~G3")]
        gmap: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 100.0)]
        t1: f64,
        #[arg(long, value_delimiter = ',')]
        x0: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-10)]
        rtol: f64,
        #[arg(long, default_value_t = 1e-12)]
        atol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form solutions of the symmetric inviscid system for N = 4 and N = 6
    Reduce {
        #[arg(long, value_delimiter = ',', required = true)]
        x0: Vec<f64>,
        #[arg(long, default_value_t = 10.0)]
        t1: f64,
        #[arg(long, default_value_t = 0.1)]
        dt_out: f64,
        /// Trajectory from the reduced system
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct MapArgs {
    /// Advection term, e.g. "G3" or "G3 - 2~G3 + ~G1 - G2"
    #[arg(long, default_value = "G3")]
    gmap: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    f: f64,
}

#[derive(Args)]
struct SystemArgs {
    #[arg(long, default_value = "G3")]
    gmap: String,
    #[arg(long)]
    n: usize,
    /// Uniform forcing in the standard form
    #[arg(long, conflicts_with = "params")]
    f: Option<f64>,
    /// Per-site alpha,beta,gamma as CSV rows or a JSON object
    #[arg(long)]
    params: Option<PathBuf>,
    /// Drop dissipation and forcing
    #[arg(long, conflicts_with_all = ["f", "params"])]
    inviscid: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Dopri5,
    Rk4,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    #[arg(long)]
    t1: f64,
    #[arg(long, default_value_t = 0.01)]
    dt_out: f64,
    #[arg(long, value_enum, default_value_t = Solver::Dopri5)]
    solver: Solver,
    /// RK4 step
    #[arg(long, default_value_t = 0.05)]
    dt: f64,
    #[arg(long, default_value_t = 1e-8)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-10)]
    atol: f64,
    /// Initial state; defaults to F e plus seeded noise
    #[arg(long, value_delimiter = ',')]
    x0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Only write samples with t >= this value
    #[arg(long)]
    keep_from: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Param {
    Scalar(f64),
    Sites(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamFile {
    alpha: Param,
    beta: Param,
    gamma: Param,
}

#[derive(Debug, Clone, PartialEq)]
struct SiteParams {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    gamma: Vec<f64>,
}

fn expand(p: &Param, n: usize, name: &str) -> l96::Result<Vec<f64>> {
    match p {
        Param::Scalar(v) => Ok(vec![*v; n]),
        Param::Sites(v) if v.len() == n => Ok(v.clone()),
        Param::Sites(v) => Err(Error::InvalidArgument(format!("{name} has {} entries, expected {n}", v.len()))),
    }
}

/// Per-site `(alpha, beta, gamma)` from a CSV with header `alpha,beta,gamma` and one row per site,
/// or from a JSON object whose fields are scalars or arrays.
fn load_site_params(path: &Path, n: usize) -> Result<SiteParams> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let params = if text.trim_start().starts_with('{') {
        let f: ParamFile = serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        SiteParams { alpha: expand(&f.alpha, n, "alpha")?, beta: expand(&f.beta, n, "beta")?, gamma: expand(&f.gamma, n, "gamma")? }
    } else {
        #[derive(Deserialize)]
        struct Row {
            alpha: f64,
            beta: f64,
            gamma: f64,
        }
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let rows: Vec<Row> = rd
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        if rows.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: rows.len() }.into());
        }
        SiteParams {
            alpha: rows.iter().map(|r| r.alpha).collect(),
            beta: rows.iter().map(|r| r.beta).collect(),
            gamma: rows.iter().map(|r| r.gamma).collect(),
        }
    };
    if params.beta.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::InvalidArgument("beta must be positive at every site".into()).into());
    }
    Ok(params)
}

fn parse_map(expr: &str) -> l96::Result<GMap> {
    Ok(gmap::parse(expr)?.resolved)
}

impl SystemArgs {
    fn build(&self) -> Result<(SystemSpec, f64)> {
        let g = parse_map(&self.gmap)?;
        if self.inviscid {
            return Ok((SystemSpec::inviscid(g, self.n)?, 0.0));
        }
        if let Some(path) = &self.params {
            let p = load_site_params(path, self.n)?;
            let mean = p.gamma.iter().sum::<f64>() / self.n as f64;
            return Ok((SystemSpec::new(g, p.alpha, p.beta, Forcing::Constant(p.gamma))?, mean));
        }
        let f = self.f.unwrap_or(8.0);
        Ok((SystemSpec::homogeneous(g, self.n, f)?, f))
    }
}

impl RunArgs {
    fn integrate(&self, sys: &SystemSpec, f: f64) -> Result<Trajectory> {
        let x0 = match &self.x0 {
            Some(x) => x.clone(),
            None => random_initial(sys.n(), f, self.seed, 0),
        };
        let tr = match self.solver {
            Solver::Dopri5 => {
                let opts = AdaptiveOptions::tolerances(self.rtol, self.atol).with_dt_out(self.dt_out);
                integrate_adaptive(sys, &x0, self.t0, self.t1, &opts)?
            }
            Solver::Rk4 => {
                let stride = (self.dt_out / self.dt).round().max(1.0) as usize;
                l96::dynamics::integrate_rk4_sampled(sys, &x0, self.t0, self.t1, self.dt, stride)?
            }
        };
        Ok(match self.keep_from {
            Some(t) => {
                let k = tr.times.partition_point(|&s| s < t - 1e-9);
                Trajectory { times: tr.times[k..].to_vec(), states: tr.states[k..].to_vec(), meta: tr.meta }
            }
            None => tr,
        })
    }
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn emit_json<T: Serialize>(path: &Option<PathBuf>, value: &T) -> Result<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct BasisEntry {
    name: String,
    map: GMap,
    expression: String,
    energy_preserving: bool,
    exact: bool,
}

#[derive(Serialize)]
struct HopfOutput {
    #[serde(flatten)]
    report: l96::bifurcation::HopfReport,
    waves: Option<l96::bifurcation::WaveDiagnostics>,
}

#[derive(Serialize)]
struct HovmoellerOutput {
    spatial_period: usize,
    temporal_period: Option<f64>,
    crest_velocity: Option<f64>,
    crest_segments: usize,
    from: f64,
    to: f64,
}

#[derive(Serialize)]
struct StationaryOutput {
    complete: bool,
    failure: Option<l96::equilibria::PathFailure>,
    path_points: usize,
    max_residual: f64,
    apriori_bound: f64,
    solution_norm: f64,
    stability: Option<l96::equilibria::StabilityReport>,
}

#[derive(Serialize)]
struct EnsembleOutput {
    #[serde(flatten)]
    summary: l96::experiments::EnsembleSummary,
    bracket: Option<l96::experiments::NsBracket>,
}

#[derive(Serialize)]
struct AuditOutput {
    energy0: f64,
    rk4_loss_percent_per_time: f64,
    rk4_steps: usize,
    adaptive_loss_percent_per_time: f64,
    adaptive: SolverMeta,
}

#[derive(Serialize)]
#[serde(tag = "n")]
enum ReduceOutput {
    #[serde(rename = "4")]
    Four(l96::dynamics::N4Reduction),
    #[serde(rename = "6")]
    Six { reduction: l96::dynamics::N6Reduction, angular_speed: f64 },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Basis { k, out } => {
            let entries: Vec<BasisEntry> = gmap::basis_named(k)?
                .into_iter()
                .map(|(name, map)| {
                    let cert = map.energy_certificate();
                    BasisEntry { expression: map.to_string(), name, map, energy_preserving: cert.preserving, exact: cert.exact }
                })
                .collect();
            emit_json(&out, &entries)
        }
        Command::Eigencurve { map, samples, out, discrete, svg } => {
            let g = parse_map(&map.gmap)?;
            let curve = eigencurve(&laurent_of(&g), map.n, samples);
            let mut w = sink(&out)?;
            curve.write_curve_csv(&mut w)?;
            w.flush()?;
            if let Some(p) = discrete {
                curve.write_discrete_csv(File::create(&p).with_context(|| format!("creating {}", p.display()))?)?;
            }
            if let Some(p) = svg {
                std::fs::write(&p, curve.to_svg()).with_context(|| format!("writing {}", p.display()))?;
            }
            Ok(())
        }
        Command::Hopf { map, out } => {
            let g = parse_map(&map.gmap)?;
            let p = laurent_of(&g);
            let report = match first_lyapunov(&g, map.n) {
                Ok(r) => r,
                Err(Error::Degenerate(_)) => first_hopf(&p, map.n)?,
                Err(e) => return Err(e.into()),
            };
            let waves = wave_diagnostics(&p, map.n, report.f1).ok();
            emit_json(&out, &HopfOutput { report, waves })
        }
        Command::HopfHopf { gmap, n, table, out } => {
            let g = parse_map(&gmap)?;
            if n.len() == 1 && !table {
                return emit_json(&out, &hopf_hopf(&g, n[0])?);
            }
            let rows = n.iter().map(|&n| hopf_hopf_row(&g, n)).collect::<l96::Result<Vec<_>>>()?;
            let mut w = sink(&out)?;
            write_hopf_hopf_csv(&rows, &mut w)?;
            Ok(w.flush()?)
        }
        Command::Simulate { sys, run, out } => {
            let (spec, f) = sys.build()?;
            let tr = run.integrate(&spec, f)?;
            let mut w = sink(&out)?;
            tr.write_csv(&mut w)?;
            Ok(w.flush()?)
        }
        Command::Hovmoeller { sys, run, from, to, refine, max_jump, grid, svg, out } => {
            let (spec, f) = sys.build()?;
            let tr = run.integrate(&spec, f)?;
            let to = to.unwrap_or(run.t1);
            let from = from.unwrap_or(to - 10.0);
            let interp = if refine <= 1 { Interpolation::Nearest } else { Interpolation::Cubic { refine } };
            let hov = hovmoeller_grid(&tr, from, to, interp)?;
            if let Some(p) = &grid {
                let mut w = sink(&Some(p.clone()))?;
                hov.write_csv(&mut w)?;
                w.flush()?;
            }
            if let Some(p) = svg {
                std::fs::write(&p, hov.to_svg()).with_context(|| format!("writing {}", p.display()))?;
            }
            let window = (to - tr.times[0]).min(l96::experiments::PERIOD_WINDOW);
            let fit = crest_velocity(&hov, max_jump, 0.5).ok();
            emit_json(
                &out,
                &HovmoellerOutput {
                    spatial_period: spatial_period(tr.last_state())?.m,
                    temporal_period: temporal_period(&tr, 0, window).ok().flatten(),
                    crest_velocity: fit.as_ref().map(|c| c.velocity),
                    crest_segments: fit.as_ref().map_or(0, |c| c.segments),
                    from,
                    to,
                },
            )
        }
        Command::Stationary { gmap, n, f, step, params, steps, tol, out, path } => {
            let g = parse_map(&gmap)?;
            let prob = if let Some(p) = params {
                let sp = load_site_params(&p, n)?;
                if sp.alpha.iter().any(|&a| a != 1.0) {
                    return Err(Error::InvalidArgument("stationary problems take alpha = 1".into()).into());
                }
                StationaryProblem::new(g, sp.beta, sp.gamma)?
            } else if let Some(m) = step {
                StationaryProblem::unit_dissipation(g, step_forcing(n, m))?
            } else {
                StationaryProblem::unit_dissipation(g, vec![f.unwrap_or(1.0); n])?
            };
            let cp = homotopy_solve(&prob, steps, tol)?;
            let x = cp.solution();
            let stability = if cp.is_complete() { local_stability(&prob, x).ok() } else { None };
            let mut w = sink(&out)?;
            write_stationary_csv(&mut w, prob.forcing(), x)?;
            w.flush()?;
            if let Some(p) = path {
                cp.write_json(File::create(&p).with_context(|| format!("creating {}", p.display()))?)?;
            }
            let summary = StationaryOutput {
                complete: cp.is_complete(),
                failure: cp.failure.clone(),
                path_points: cp.t.len(),
                max_residual: cp.residuals.iter().copied().fold(0.0, f64::max),
                apriori_bound: apriori_bound(&prob),
                solution_norm: prob.weighted_norm(x),
                stability,
            };
            eprintln!("{}", serde_json::to_string(&summary)?);
            if cp.is_complete() {
                Ok(())
            } else {
                Err(Error::NoConvergence { iterations: cp.t.len(), residual: summary.max_residual }.into())
            }
        }
        Command::Ensemble { map, runs, t_end, seed, jobs, rtol, atol, follow, f_lo, tol_f, out } => {
            let g = parse_map(&map.gmap)?;
            let cfg = EnsembleConfig { runs, t_end, seed, rtol, atol, jobs };
            let summary = ensemble_search(&g, map.n, map.f, &cfg)?;
            let bracket = match follow {
                Some(m) => {
                    let fc = FollowConfig { seeds: runs, seed, t_settle: t_end, rtol, atol, ..Default::default() };
                    Some(ns_bracket(&g, map.n, m, f_lo, map.f, tol_f, &fc)?)
                }
                None => None,
            };
            emit_json(&out, &EnsembleOutput { summary, bracket })
        }
        Command::EnergyAudit { gmap, n, energy, t1, dt, rtol, atol, out } => {
            let g = parse_map(&gmap)?;
            let base: Vec<f64> = (0..n).map(|j| 1.0 + (2.0 * std::f64::consts::PI * j as f64 / n as f64).sin()).collect();
            let c = (energy / base.iter().map(|v| v * v).sum::<f64>()).sqrt();
            let x0: Vec<f64> = base.iter().map(|v| c * v).collect();
            let spec = SystemSpec::inviscid(g, n)?;
            let rk = integrate_rk4(&spec, &x0, 0.0, t1, dt)?;
            let ad = integrate_adaptive(&spec, &x0, 0.0, t1, &AdaptiveOptions::tolerances(rtol, atol))?;
            emit_json(
                &out,
                &AuditOutput {
                    energy0: Invariant::Energy.eval(&x0),
                    rk4_loss_percent_per_time: energy_loss_rate(&rk),
                    rk4_steps: rk.meta.steps,
                    adaptive_loss_percent_per_time: energy_loss_rate(&ad),
                    adaptive: ad.meta,
                },
            )
        }
        Command::Invariants { gmap, n, t1, x0, seed, rtol, atol, out } => {
            let spec = SystemSpec::inviscid(parse_map(&gmap)?, n)?;
            let x0 = x0.unwrap_or_else(|| random_state(n, 0.0, 1.0, seed, 0));
            let tr = integrate_adaptive(&spec, &x0, 0.0, t1, &AdaptiveOptions::tolerances(rtol, atol).with_dt_out(0.1))?;
            emit_json(&out, &audit(&tr, &InvariantSet::all_for(n))?)
        }
        Command::Reduce { x0, t1, dt_out, trajectory, out } => {
            let (summary, tr) = match x0.len() {
                4 => {
                    let red = reduce_n4(&x0)?;
                    let opts = AdaptiveOptions::tolerances(1e-12, 1e-14).with_dt_out(dt_out);
                    let tr = if red.degenerate { None } else { Some(red.trajectory(t1, &opts)?) };
                    (ReduceOutput::Four(red), tr)
                }
                6 => {
                    let red = reduce_n6(&x0)?;
                    let steps = (t1 / dt_out).round() as usize;
                    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt_out).collect();
                    let states = times.iter().map(|&t| red.state_at(t).to_vec()).collect();
                    let meta = SolverMeta { solver: "closed-form".into(), steps: 0, rejected: 0 };
                    (ReduceOutput::Six { angular_speed: red.angular_speed(), reduction: red }, Some(Trajectory { times, states, meta }))
                }
                k => return Err(Error::InvalidArgument(format!("closed forms exist for 4 or 6 sites, got {k}")).into()),
            };
            if let (Some(p), Some(tr)) = (trajectory, tr) {
                tr.write_csv(File::create(&p).with_context(|| format!("creating {}", p.display()))?)?;
            }
            emit_json(&out, &summary)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<Error>().is_some_and(Error::is_usage);
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
