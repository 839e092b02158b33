//! Run configuration: built-in case defaults, then a TOML file, then flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use otmesh::base::BaseMeshSpec;
use otmesh::cases::{Case, PLANE_CELLS_PER_SIDE, SPHERE_DEFAULT_REFINEMENT};
use otmesh::monitor::{GriddedMonitor, LatLonGrid, MonitorSpec};
use otmesh::operators::VertexGradientScheme;
use otmesh::solver::{HessianMode, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Plane,
    Sphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PostProcess {
    #[default]
    None,
    Voronoi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum HessianFlag {
    Fd,
    Geometric,
}

impl From<HessianFlag> for HessianMode {
    fn from(h: HessianFlag) -> Self {
        match h {
            HessianFlag::Fd => HessianMode::FiniteDifference,
            HessianFlag::Geometric => HessianMode::Geometric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum VgradFlag {
    Small,
    Goldilocks,
    Large,
}

impl From<VgradFlag> for VertexGradientScheme {
    fn from(v: VgradFlag) -> Self {
        match v {
            VgradFlag::Small => VertexGradientScheme::Small,
            VgradFlag::Goldilocks => VertexGradientScheme::Goldilocks,
            VgradFlag::Large => VertexGradientScheme::Large,
        }
    }
}

/// Contents of a `--config` file. Every key is optional; the `[solver]`
/// table takes the full solver configuration and `[monitor_spec]` an
/// explicit monitor that replaces the named one.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub geometry: Option<GeometryKind>,
    /// Cells per side (plane) or icosahedral refinement level (sphere).
    pub n: Option<usize>,
    pub radius: Option<f64>,
    /// `ring`, `bell`, `x<s>`, `gridded`, `precip` or `constant`.
    pub monitor: Option<String>,
    pub grid: Option<PathBuf>,
    pub p_min: Option<f64>,
    pub p_max: Option<f64>,
    pub smoothing: Option<bool>,
    pub post: Option<PostProcess>,
    pub out: Option<PathBuf>,
    pub solver: Option<SolverConfig>,
    pub monitor_spec: Option<MonitorSpec>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Flags shared by `adapt` and `repro` that override file values.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct SolveFlags {
    /// Hessian discretisation.
    #[arg(long, value_enum)]
    pub hessian: Option<HessianFlag>,
    /// Vertex-gradient stencil.
    #[arg(long, value_enum)]
    pub vgrad: Option<VgradFlag>,
    /// Post-processing applied after the solve.
    #[arg(long, value_enum)]
    pub post: Option<PostProcess>,
    /// Fixed-point iteration cap.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Stop when the initial residual falls below this.
    #[arg(long)]
    pub stop_residual: Option<f64>,
    /// Force monitor smoothing on or off.
    #[arg(long)]
    pub smoothing: Option<bool>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print only the final summary.
    #[arg(long)]
    pub quiet: bool,
}

/// Flags describing the mesh and monitor of `adapt` and `diagnose`.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ProblemFlags {
    #[arg(long, value_enum)]
    pub geometry: Option<GeometryKind>,
    /// Cells per side (plane) or refinement level (sphere).
    #[arg(long = "base")]
    pub n: Option<usize>,
    /// Sphere radius.
    #[arg(long)]
    pub radius: Option<f64>,
    /// `ring`, `bell`, `x<s>`, `gridded`, `precip` or `constant`.
    #[arg(long)]
    pub monitor: Option<String>,
    /// Lat-lon grid file for `--monitor gridded`.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long)]
    pub p_min: Option<f64>,
    #[arg(long)]
    pub p_max: Option<f64>,
}

/// A fully resolved run.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub base: BaseMeshSpec,
    pub monitor: MonitorSpec,
    pub solver: SolverConfig,
    pub post: PostProcess,
    pub out: PathBuf,
    pub quiet: bool,
}

fn base_spec(geometry: GeometryKind, n: Option<usize>, radius: Option<f64>) -> BaseMeshSpec {
    match geometry {
        GeometryKind::Plane => BaseMeshSpec::SquareGrid {
            n_per_side: n.unwrap_or(PLANE_CELLS_PER_SIDE),
        },
        GeometryKind::Sphere => BaseMeshSpec::HexIcosahedron {
            refinement: n.unwrap_or(SPHERE_DEFAULT_REFINEMENT),
            radius: radius.unwrap_or(1.0),
        },
    }
}

/// Resolves a monitor name; `gridded` reads `grid` and needs `p_min`.
pub fn monitor_by_name(
    name: &str,
    grid: Option<&Path>,
    p_min: Option<f64>,
    p_max: Option<f64>,
    smoothing: Option<bool>,
) -> Result<MonitorSpec> {
    let spec = match name.to_ascii_lowercase().as_str() {
        "constant" | "uniform" => MonitorSpec::Constant { value: 1.0 },
        "gridded" => {
            let path = grid.context("`--monitor gridded` needs `--grid FILE`")?;
            let p_min = p_min.context("`--monitor gridded` needs `--p-min`")?;
            MonitorSpec::Gridded(GriddedMonitor {
                grid: LatLonGrid::read(path)?,
                p_min,
                p_max,
                smoothing: smoothing.unwrap_or(true),
            })
        }
        other => {
            let case: Case = other.parse()?;
            let mut spec = case.setup(None).monitor;
            if let MonitorSpec::Gridded(g) = &mut spec {
                g.p_min = p_min.unwrap_or(g.p_min);
                g.p_max = p_max.or(g.p_max);
                g.smoothing = smoothing.unwrap_or(g.smoothing);
            }
            spec
        }
    };
    spec.validate()?;
    Ok(spec)
}

fn geometry_of(spec: &MonitorSpec) -> Option<GeometryKind> {
    match spec {
        MonitorSpec::PlanarSech { .. } => Some(GeometryKind::Plane),
        MonitorSpec::SphericalTanh { .. } | MonitorSpec::Gridded(_) => Some(GeometryKind::Sphere),
        MonitorSpec::Constant { .. } => None,
    }
}

fn apply_solve_flags(solver: &mut SolverConfig, flags: &SolveFlags) {
    if let Some(h) = flags.hessian {
        solver.hessian_mode = h.into();
    }
    if let Some(v) = flags.vgrad {
        solver.vertex_gradient = v.into();
    }
    if let Some(m) = flags.max_iter {
        solver.max_fixed_point_iterations = m;
    }
    if let Some(r) = flags.stop_residual {
        solver.fixed_point_stop_residual = r;
    }
    if flags.smoothing.is_some() {
        solver.smoothing = flags.smoothing;
    }
}

/// Settings of `adapt`: file values, then flags.
pub fn resolve_adapt(problem: &ProblemFlags, flags: &SolveFlags) -> Result<RunSettings> {
    let file = match &flags.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let grid = problem.grid.clone().or(file.grid.clone());
    let p_min = problem.p_min.or(file.p_min);
    let p_max = problem.p_max.or(file.p_max);
    let smoothing = flags.smoothing.or(file.smoothing);
    let by_name = |name: &str| monitor_by_name(name, grid.as_deref(), p_min, p_max, smoothing);
    // a named monitor on the command line beats an explicit table in the file
    let monitor = if let Some(name) = &problem.monitor {
        by_name(name)?
    } else if let Some(spec) = &file.monitor_spec {
        spec.validate()?;
        spec.clone()
    } else if let Some(name) = &file.monitor {
        by_name(name)?
    } else {
        bail!("no monitor given (use `--monitor` or `monitor = ...` in the config file)");
    };
    let geometry = problem
        .geometry
        .or(file.geometry)
        .or_else(|| geometry_of(&monitor))
        .context("cannot infer the geometry; pass `--geometry plane|sphere`")?;
    let base = base_spec(geometry, problem.n.or(file.n), problem.radius.or(file.radius));
    let mut solver = file.solver.unwrap_or_else(|| {
        let mut s = SolverConfig::default();
        if geometry == GeometryKind::Plane {
            s.vertex_gradient = VertexGradientScheme::Small;
        }
        s
    });
    if let Some(s) = file.smoothing {
        solver.smoothing = Some(s);
    }
    apply_solve_flags(&mut solver, flags);
    Ok(RunSettings {
        base,
        monitor,
        solver,
        post: flags.post.or(file.post).unwrap_or_default(),
        out: flags.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("otmesh-out")),
        quiet: flags.quiet,
    })
}

/// Settings of `repro`: case defaults, then file values, then flags.
pub fn resolve_repro(case: Case, n: Option<usize>, flags: &SolveFlags) -> Result<RunSettings> {
    let file = match &flags.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let setup = case.setup(n.or(file.n));
    let mut solver = file.solver.unwrap_or(setup.config);
    if let Some(s) = file.smoothing {
        solver.smoothing = Some(s);
    }
    apply_solve_flags(&mut solver, flags);
    let out = flags
        .out
        .clone()
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from(format!("otmesh-{case}")));
    Ok(RunSettings {
        base: setup.base,
        monitor: setup.monitor,
        solver,
        post: flags.post.or(file.post).unwrap_or_default(),
        out,
        quiet: flags.quiet,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "monitor = \"x4\"\nn = 3\npost = \"voronoi\"\n[solver]\nmax_fixed_point_iterations = 7\nvertex_gradient = \"large\"\n",
        )
        .unwrap();
        let flags = SolveFlags {
            config: Some(path),
            max_iter: Some(11),
            ..Default::default()
        };
        let s = resolve_adapt(&ProblemFlags::default(), &flags).unwrap();
        assert_eq!(s.solver.max_fixed_point_iterations, 11);
        assert_eq!(s.solver.vertex_gradient, VertexGradientScheme::Large);
        assert_eq!(s.post, PostProcess::Voronoi);
        assert_eq!(
            s.base,
            BaseMeshSpec::HexIcosahedron {
                refinement: 3,
                radius: 1.0
            }
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<FileConfig>("monitr = \"ring\"").unwrap_err();
        assert!(err.to_string().contains("monitr"));
    }

    #[test]
    fn explicit_monitor_table() {
        let cfg: FileConfig = toml::from_str(
            "[monitor_spec]\nkind = \"planar_sech\"\na = 0.1\nalpha1 = 5.0\nalpha2 = 50.0\ncentre = [0.0, 0.0]\n",
        )
        .unwrap();
        assert!(matches!(cfg.monitor_spec, Some(MonitorSpec::PlanarSech { .. })));
    }

    #[test]
    fn geometry_follows_the_monitor() {
        let problem = ProblemFlags {
            monitor: Some("bell".into()),
            ..Default::default()
        };
        let s = resolve_adapt(&problem, &SolveFlags::default()).unwrap();
        assert_eq!(s.base, BaseMeshSpec::SquareGrid { n_per_side: 60 });
        let problem = ProblemFlags {
            monitor: Some("constant".into()),
            ..Default::default()
        };
        assert!(resolve_adapt(&problem, &SolveFlags::default()).is_err());
    }
}
