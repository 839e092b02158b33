//! `otmesh`: generate, adapt and diagnose optimally transported meshes.
//!
//! Exit status: 0 on success, 2 when the fixed-point iteration stops at its
//! cap without converging (all outputs are still written), 1 on any error.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use otmesh::base::BaseMeshSpec;
use otmesh::cases::Case;
use otmesh::solver::Status;

use config::{monitor_by_name, GeometryKind, ProblemFlags, SolveFlags};

#[derive(Debug, Parser)]
#[command(name = "otmesh", version, about = "Optimally transported meshes on the plane and the sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a computational mesh and export it as `base.vtk`.
    GenBase {
        #[arg(long, value_enum)]
        geometry: GeometryKind,
        /// Cells per side (plane) or icosahedral refinement level (sphere).
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value = "otmesh-base")]
        out: PathBuf,
    },
    /// Solve for an adapted mesh and write meshes and reports.
    Adapt {
        #[command(flatten)]
        problem: ProblemFlags,
        #[command(flatten)]
        solve: SolveFlags,
    },
    /// Recompute the reports of an exported base/adapted mesh pair.
    Diagnose {
        /// The computational mesh (`base.vtk`).
        #[arg(long = "base-mesh")]
        base_mesh: PathBuf,
        /// The adapted mesh with the same connectivity (`mesh.vtk`).
        #[arg(long)]
        mesh: PathBuf,
        #[command(flatten)]
        problem: ProblemFlags,
        /// Force monitor smoothing on or off.
        #[arg(long)]
        smoothing: Option<bool>,
        #[arg(long, default_value = "otmesh-diagnose")]
        out: PathBuf,
    },
    /// Run a named reference case: ring, bell, x2, x4, x8, x16 or precip.
    Repro {
        #[arg(long)]
        case: Case,
        /// Cells per side (plane) or refinement level (sphere, 3 to 6).
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        solve: SolveFlags,
    },
}

fn dispatch(cli: Cli) -> anyhow::Result<Status> {
    match cli.command {
        Command::GenBase { geometry, n, radius, out } => {
            let spec = match geometry {
                GeometryKind::Plane => BaseMeshSpec::SquareGrid { n_per_side: n },
                GeometryKind::Sphere => BaseMeshSpec::HexIcosahedron { refinement: n, radius },
            };
            let path = run::gen_base(spec, &out)?;
            println!("wrote {}", path.display());
            Ok(Status::Converged)
        }
        Command::Adapt { problem, solve } => run::solve(&config::resolve_adapt(&problem, &solve)?),
        Command::Diagnose {
            base_mesh,
            mesh,
            problem,
            smoothing,
            out,
        } => {
            let name = problem
                .monitor
                .as_deref()
                .ok_or_else(|| anyhow::anyhow!("`diagnose` needs `--monitor`"))?;
            let monitor = monitor_by_name(name, problem.grid.as_deref(), problem.p_min, problem.p_max, smoothing)?;
            run::diagnose(&base_mesh, &mesh, &monitor, &out)?;
            Ok(Status::Converged)
        }
        Command::Repro { case, n, solve } => run::solve(&config::resolve_repro(case, n, &solve)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version go to stdout with status 0; usage errors are
            // ordinary errors here because status 2 means "not converged"
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(Status::Converged) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => {
            eprintln!("warning: the fixed-point iteration did not converge; outputs were written");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
