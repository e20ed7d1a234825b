//! `spherelab` command-line front end.
//!
//! Exit codes: 0 ok, 1 a checked value was missed, 2 usage or validation
//! error, 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use spherelab::arithmetic::{derive_m_cutoff, enumerate_exceptions, enumerate_without, enumeration_trace, Constraint};
use spherelab::config::Config;
use spherelab::eigensolve::{solve_lowest_with, SolverOptions};
use spherelab::fem::{assemble_mass, assemble_stiffness, Density, Surface};
use spherelab::index::{index_report, sector_form, Sector};
use spherelab::maps::parse_descriptor;
use spherelab::mesh::{chart_grid, icosphere};
use spherelab::optimize::{ascend, family_to_csv, lambda_bar_ceiling, limit_family, random_start, AscentOptions};
use spherelab::report::{run_bundle, traceability};
use spherelab::sequence::{build_sequence, choose_chart_centers, residuals_to_csv, verify_identities, DerivativeBackend};
use spherelab::Error;

/// Relative tolerance of the ascent against its target for k = 1.
const ASCENT_TOL: f64 = 0.02;
/// Slack of family members over the ceiling (discretisation).
const FAMILY_SLACK: f64 = 0.05;
/// Scales of the default degenerating family.
const FAMILY_EPS: [f64; 5] = [0.1, 0.03, 0.01, 0.003, 0.001];

#[derive(Parser)]
#[command(name = "spherelab", version, about = "Laplace spectra and indices of harmonic maps from S2 and RP2")]
struct Cli {
    /// Flat key = value configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed (default 42).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SurfaceArg {
    S2,
    Rp2,
}

impl From<SurfaceArg> for Surface {
    fn from(s: SurfaceArg) -> Self {
        match s {
            SurfaceArg::S2 => Surface::S2,
            SurfaceArg::Rp2 => Surface::RP2,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Ascend,
    Family,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Analytic,
    Fd,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_enum)]
    surface: Option<SurfaceArg>,
    #[arg(long)]
    mesh_level: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Lowest eigenvalues of the Laplacian of ρ·g_round as CSV.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// One density value per icosphere vertex, whitespace separated.
        #[arg(long)]
        density: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Spectral and energy index report of a harmonic map as JSON.
    Index {
        #[command(flatten)]
        common: Common,
        /// Map descriptor: veronese:m, rational:p(z)/q(z) or pad:<map>:<n>.
        #[arg(long)]
        map: String,
    },
    /// Exceptional (m, d) pairs of the case analysis with proof traces.
    Enumerate {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Constraint to drop (even-m, odd-nullity, nullity-at-least-2m+1, minimal-degree, nullity-degree).
        #[arg(long = "drop-constraint")]
        drop: Vec<String>,
    },
    /// Maximise λ̄_k by ascent or follow a degenerating family.
    Maximize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value = "ascend")]
        mode: Mode,
        /// Summary JSON path; standard output when absent.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Residual table of the harmonic-sequence identities.
    SequenceVerify {
        #[arg(long)]
        map: String,
        #[arg(long)]
        charts: Option<usize>,
        #[arg(long, value_enum, default_value = "analytic")]
        backend: Backend,
        /// Finite-difference step for --backend fd.
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full verification bundle of one map as JSON.
    Bundle {
        #[arg(long)]
        map: String,
        #[arg(long)]
        mesh_level: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Result-to-test traceability table as Markdown.
    Traceability {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure of a subcommand, mapped to an exit code.
enum Failure {
    Verification(String),
    Lib(Error),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome = Result<(), Failure>;

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Io(format!("writing {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut c = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Io(format!("reading {}: {e}", p.display())))?;
            Config::parse(&text)?
        }
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    Ok(c)
}

fn apply_common(c: &mut Config, common: &Common) -> Result<(), Failure> {
    if let Some(s) = common.surface {
        c.surface = s.into();
    }
    if let Some(l) = common.mesh_level {
        c.mesh_level = l;
    }
    if let Some(o) = &common.out {
        c.out = Some(o.clone());
    }
    c.validate()?;
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serialisable output") + "\n"
}

fn spectrum(mut c: Config, common: &Common, density: Option<&Path>, count: Option<usize>) -> Outcome {
    if let Some(n) = count {
        c.eigen_count = n;
    }
    apply_common(&mut c, common)?;
    let mesh = icosphere(c.mesh_level)?;
    let rho = match density {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Io(format!("reading {}: {e}", p.display())))?;
            let values = text
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad density value '{t}'"))))
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != mesh.num_vertices() {
                return Err(Error::Validation(format!("density has {} values, mesh has {} vertices", values.len(), mesh.num_vertices())).into());
            }
            Density::new(values)?
        }
        None => Density::constant(mesh.num_vertices(), 1.0)?,
    };
    let sector = match c.surface {
        Surface::S2 => Sector::Full,
        Surface::RP2 => Sector::Even,
    };
    let k = sector_form(&assemble_stiffness(&mesh)?, &mesh, sector)?;
    let m = sector_form(&assemble_mass(&mesh, &rho)?, &mesh, sector)?;
    let opts = SolverOptions { tol: c.eigen_tol, seed: c.seed, lower_bound: Some(0.0), ..Default::default() };
    let spec = solve_lowest_with(&k, &m, c.eigen_count.min(k.dim()), &opts)?;
    emit(c.out.as_deref(), &spec.to_csv())
}

fn index(mut c: Config, common: &Common, map: &str) -> Outcome {
    apply_common(&mut c, common)?;
    let map = parse_descriptor(map)?;
    let mesh = icosphere(c.mesh_level)?;
    let report = index_report(&map, &mesh, c.surface, &c.index_options())?;
    emit(c.out.as_deref(), &to_json(&report))?;
    let failed: Vec<&str> = report.inequalities.iter().filter(|v| !v.pass).map(|v| v.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(Failure::Verification(format!("inequalities failed: {}", failed.join(", "))));
    }
    Ok(())
}

fn enumerate(out: Option<&Path>, drop: &[String]) -> Outcome {
    let dropped = drop.iter().map(|s| Constraint::parse(s)).collect::<Result<Vec<_>, _>>()?;
    let e = enumerate_without(&dropped);
    let cutoff = derive_m_cutoff();
    let doc = json!({
        "dropped": dropped.iter().map(|c| c.name()).collect::<Vec<_>>(),
        "active": e.active.iter().map(|c| c.name()).collect::<Vec<_>>(),
        "max_m": e.max_m,
        "exceptions": e.exceptions,
        "witnesses": e.witnesses,
        "m_cutoff": cutoff,
        "trace": enumeration_trace(&e),
    });
    emit(out, &to_json(&doc))?;
    if dropped.is_empty() && e.exceptions != enumerate_exceptions() {
        return Err(Failure::Verification("exceptional set differs from the full-constraint enumeration".into()));
    }
    if dropped.is_empty() && e.exceptions != [(2, 3), (2, 4), (4, 10)].into_iter().collect() {
        return Err(Failure::Verification(format!("exceptional set {:?} is not {{(2,3),(2,4),(4,10)}}", e.exceptions)));
    }
    Ok(())
}

fn maximize(mut c: Config, common: &Common, k: usize, mode: Mode, summary: Option<&Path>) -> Outcome {
    apply_common(&mut c, common)?;
    if k == 0 {
        return Err(Error::Validation("k must be ≥ 1".into()).into());
    }
    let surface = c.surface;
    let ceiling = lambda_bar_ceiling(surface, k);
    let target_pi = ceiling / std::f64::consts::PI;
    match mode {
        Mode::Family => {
            let points = limit_family(surface, k, &FAMILY_EPS)?;
            emit(c.out.as_deref(), &family_to_csv(&points))?;
            let values: Vec<f64> = points.iter().map(|p| p.lambda_bar).collect();
            let monotone = values.windows(2).all(|w| w[1] >= w[0]);
            let below = values.iter().all(|&v| v <= ceiling * (1.0 + FAMILY_SLACK));
            let last = *values.last().expect("nonempty family");
            let doc = json!({
                "surface": surface, "k": k, "mode": "family",
                "target": format!("{target_pi}π"), "target_value": ceiling,
                "final_lambda_bar": last, "relative_gap": (ceiling - last) / ceiling,
                "monotone": monotone, "below_ceiling": below,
            });
            emit(summary, &to_json(&doc))?;
            if !monotone || !below {
                return Err(Failure::Verification("family is not monotone below the ceiling".into()));
            }
        }
        Mode::Ascend => {
            let mesh = icosphere(c.mesh_level)?;
            let start = random_start(&mesh, surface, 0.3, c.seed);
            let traj = ascend(&mesh, surface, k, start, &AscentOptions::default())?;
            emit(c.out.as_deref(), &traj.to_csv())?;
            // a smooth metric reaches the supremum only for k = 1
            let target = if k == 1 { Some(ceiling) } else { None };
            let best = traj.best.lambda_bar;
            let within = target.map(|t| ((best - t) / t).abs() <= ASCENT_TOL);
            let doc = json!({
                "surface": surface, "k": k, "mode": "ascend", "seed": c.seed, "mesh_level": c.mesh_level,
                "target": format!("{target_pi}π"), "target_value": ceiling,
                "best_lambda_bar": best, "relative_gap": (ceiling - best) / ceiling,
                "iterations": traj.states.len() - 1, "line_search_failures": traj.line_search_failures,
                "within_tolerance": within,
            });
            emit(summary, &to_json(&doc))?;
            if within == Some(false) {
                return Err(Failure::Verification(format!("ascent reached {best:.4}, not within 2% of {ceiling:.4}")));
            }
        }
    }
    Ok(())
}

fn sequence_verify(mut c: Config, map: &str, charts: Option<usize>, backend: Backend, step: f64, out: Option<&Path>) -> Outcome {
    if let Some(n) = charts {
        c.charts = n;
    }
    c.validate()?;
    let map = parse_descriptor(map)?;
    let backend = match backend {
        Backend::Analytic => DerivativeBackend::Analytic,
        Backend::Fd => {
            if !(step > 0.0 && step < 1.0) {
                return Err(Error::Validation(format!("finite-difference step {step} outside (0, 1)")).into());
            }
            DerivativeBackend::FiniteDifference { h: step }
        }
    };
    let mut rows = Vec::new();
    for center in choose_chart_centers(&map, c.charts)? {
        let grid = chart_grid(center, c.chart_radius, c.chart_points)?;
        rows.extend(verify_identities(&build_sequence(&map, &grid, backend)?));
    }
    emit(out, &residuals_to_csv(&rows))?;
    if rows.iter().any(|r| !r.converged) {
        return Err(Failure::Verification("some sequence identity exceeded its tolerance".into()));
    }
    Ok(())
}

fn bundle(mut c: Config, map: &str, mesh_level: Option<usize>, out: Option<&Path>) -> Outcome {
    if let Some(l) = mesh_level {
        c.mesh_level = l;
    }
    let b = run_bundle(map, &c);
    emit(out, &(b.to_json() + "\n"))?;
    if let Some(e) = b.errors.first() {
        let err = if e.usage { Error::Validation(e.message.clone()) } else { Error::Numerical(e.message.clone()) };
        return Err(err.into());
    }
    if !b.all_pass() {
        let names: Vec<String> = b.failed_verdicts().iter().map(|v| format!("{}:{}", v.scope, v.verdict.name)).collect();
        return Err(Failure::Verification(format!("verdicts failed: {}", names.join(", "))));
    }
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    let c = load_config(cli)?;
    match &cli.command {
        Command::Spectrum { common, density, count } => spectrum(c, common, density.as_deref(), *count),
        Command::Index { common, map } => index(c, common, map),
        Command::Enumerate { out, drop } => enumerate(out.as_deref(), drop),
        Command::Maximize { common, k, mode, summary } => maximize(c, common, *k, *mode, summary.as_deref()),
        Command::SequenceVerify { map, charts, backend, step, out } => sequence_verify(c, map, *charts, *backend, *step, out.as_deref()),
        Command::Bundle { map, mesh_level, out } => bundle(c, map, *mesh_level, out.as_deref()),
        Command::Traceability { out } => {
            let t = traceability();
            emit(out.as_deref(), &t.to_markdown())?;
            if !t.complete {
                return Err(Failure::Verification(format!("unmapped results: {:?}", t.unmapped)));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 3 })
        }
    }
}
