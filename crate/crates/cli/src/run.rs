//! The work behind each subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

use otmesh::base::BaseMeshSpec;
use otmesh::diagnostics::{cell_max_non_orthogonality, CellShape, MeshQualityReport};
use otmesh::io::{read_vtk, write_csv_reports, write_vtk};
use otmesh::mesh::TransportedMesh;
use otmesh::monitor::MonitorSpec;
use otmesh::solver::{IterationRecord, MaSolver, SolverConfig, Status};
use otmesh::voronoi::{convexity_report, convexity_scan, voronoi_of_cell_centres};
use otmesh::{Mesh, QualityReport};

use crate::config::{PostProcess, RunSettings};

/// Written to `summary.toml` next to the meshes and reports.
#[derive(Debug, Serialize)]
pub struct Summary {
    /// Absent for `diagnose`, which runs no solver.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<Status>,
    pub iterations: usize,
    pub final_initial_residual: f64,
    pub one_plus_alpha: f64,
    pub c: f64,
    pub cells: usize,
    pub min_r: f64,
    pub max_non_orthogonality_deg: f64,
    pub median_non_orthogonality_deg: f64,
    pub max_skewness: f64,
    pub max_equidistribution_deviation: f64,
    pub median_equidistribution_deviation: f64,
    pub non_convex_cells: usize,
    pub tangled_cells: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub voronoi: Option<VoronoiSummary>,
}

#[derive(Debug, Serialize)]
pub struct VoronoiSummary {
    pub non_convex_cells: usize,
    pub connectivity_changed: bool,
    pub max_relative_area_change: f64,
    pub merged_vertices: usize,
}

fn quality_fields(
    transported: &TransportedMesh<f64>,
    quality: &QualityReport,
    monitor: &[f64],
) -> Vec<(&'static str, Vec<f64>)> {
    let mesh = transported.mesh();
    vec![
        ("area", transported.volumes().to_vec()),
        ("area_ratio", quality.equidistribution.iter().map(|e| e.r).collect()),
        ("monitor", monitor.to_vec()),
        ("deviation", quality.equidistribution.iter().map(|e| e.deviation).collect()),
        (
            "max_non_orthogonality",
            cell_max_non_orthogonality(mesh, &quality.non_orthogonality),
        ),
    ]
}

fn write_fields(path: &Path, mesh: &Mesh, fields: &[(&'static str, Vec<f64>)]) -> Result<()> {
    let refs: Vec<(&str, &[f64])> = fields.iter().map(|(n, v)| (*n, v.as_slice())).collect();
    write_vtk(path, mesh, &refs)?;
    Ok(())
}

fn summarise(
    status: Option<Status>,
    records: &[IterationRecord],
    transported: &TransportedMesh<f64>,
    quality: &QualityReport,
) -> Summary {
    let last = records.last();
    let convexity = convexity_report(transported.mesh());
    Summary {
        status,
        iterations: records.len(),
        final_initial_residual: last.map_or(0.0, |r| r.initial_residual),
        one_plus_alpha: last.map_or(1.0, |r| r.one_plus_alpha),
        c: quality.c,
        cells: transported.mesh().num_cells(),
        min_r: quality.equidistribution.iter().map(|e| e.r).fold(f64::INFINITY, f64::min),
        max_non_orthogonality_deg: quality.non_orthogonality_summary.max,
        median_non_orthogonality_deg: quality.non_orthogonality_summary.median,
        max_skewness: quality.skewness_summary.max,
        max_equidistribution_deviation: quality.deviation_summary.max,
        median_equidistribution_deviation: quality.deviation_summary.median,
        non_convex_cells: convexity.non_convex.len(),
        tangled_cells: convexity.tangled.len(),
        voronoi: None,
    }
}

fn write_summary(out: &Path, summary: &Summary) -> Result<()> {
    let path = out.join("summary.toml");
    fs::write(&path, toml::to_string(summary)?).with_context(|| format!("writing {}", path.display()))
}

fn print_summary(summary: &Summary) {
    println!(
        "status {} after {} iterations, initial residual {:.3e}, 1+alpha {:.4e}, c {:.6e}",
        summary.status.map_or("-".into(), |s| format!("{s:?}")),
        summary.iterations, summary.final_initial_residual, summary.one_plus_alpha, summary.c
    );
    println!(
        "equidistribution |r m/c - 1|: max {:.3e} median {:.3e}; non-orthogonality max {:.2} deg",
        summary.max_equidistribution_deviation,
        summary.median_equidistribution_deviation,
        summary.max_non_orthogonality_deg
    );
    println!(
        "non-convex cells {}, tangled cells {}",
        summary.non_convex_cells, summary.tangled_cells
    );
    if let Some(v) = &summary.voronoi {
        println!(
            "voronoi: non-convex cells {}, connectivity changed {}, max relative area change {:.3e}",
            v.non_convex_cells, v.connectivity_changed, v.max_relative_area_change
        );
    }
}

/// Solves, writes meshes and reports, and returns the solver status.
pub fn solve(settings: &RunSettings) -> Result<Status> {
    let base: Mesh = settings.base.build()?;
    ensure!(
        settings.monitor.supports(base.geometry()),
        "the chosen monitor is not defined on this geometry"
    );
    if settings.post == PostProcess::Voronoi && !base.geometry().is_sphere() {
        bail!("Voronoi post-processing is only available on the sphere");
    }
    let solver = MaSolver::new(&base, &settings.monitor, settings.solver)?;
    let out = &settings.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_fields(&out.join("base.vtk"), &base, &[("area", base.volumes().to_vec())])?;

    let quiet = settings.quiet;
    if !quiet {
        println!("n, initial_residual, 1+alpha, c, min_r, max_nonorthogonality_deg");
    }
    let report = solver.run_with_observer(|record, _| {
        if !quiet {
            println!("{}", record.log_line());
        }
    })?;
    let transported = &report.state.x;
    let monitor = &report.monitor.values;
    let quality = MeshQualityReport::new(transported, CellShape::of(&base), &settings.monitor, monitor);
    write_csv_reports(out, base.geometry(), &quality, &report.records)?;
    write_fields(
        &out.join("mesh.vtk"),
        transported.mesh(),
        &quality_fields(transported, &quality, monitor),
    )?;

    let mut summary = summarise(Some(report.status), &report.records, transported, &quality);
    if settings.post == PostProcess::Voronoi {
        let v = voronoi_of_cell_centres(transported)?;
        let old = transported.volumes();
        let relative: Vec<f64> = v.area_change.iter().zip(old).map(|(d, o)| d / o).collect();
        write_fields(
            &out.join("voronoi.vtk"),
            &v.mesh,
            &[("area", v.mesh.volumes().to_vec()), ("relative_area_change", relative)],
        )?;
        summary.voronoi = Some(VoronoiSummary {
            non_convex_cells: convexity_scan(&v.mesh).len(),
            connectivity_changed: v.connectivity_changed,
            max_relative_area_change: v.max_relative_area_change(old),
            merged_vertices: v.merged_vertices,
        });
    }
    write_summary(out, &summary)?;
    print_summary(&summary);
    Ok(report.status)
}

/// Builds a base mesh and writes it as `base.vtk`.
pub fn gen_base(spec: BaseMeshSpec, out: &Path) -> Result<PathBuf> {
    let base: Mesh = spec.build()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("base.vtk");
    write_fields(&path, &base, &[("area", base.volumes().to_vec())])?;
    println!(
        "{} cells, {} faces, {} vertices, total area {:.15e}",
        base.num_cells(),
        base.num_faces(),
        base.num_vertices(),
        base.total_volume()
    );
    Ok(path)
}

/// Recomputes the reports of an exported base/transported mesh pair.
pub fn diagnose(base_path: &Path, mesh_path: &Path, monitor: &MonitorSpec, out: &Path) -> Result<()> {
    let base_vtk = read_vtk(base_path)?;
    let mesh_vtk = read_vtk(mesh_path)?;
    ensure!(
        base_vtk.geometry == mesh_vtk.geometry,
        "{} and {} describe different geometries",
        base_path.display(),
        mesh_path.display()
    );
    ensure!(
        base_vtk.cell_vertices == mesh_vtk.cell_vertices && base_vtk.points.len() == mesh_vtk.points.len(),
        "{} does not have the connectivity of {}",
        mesh_path.display(),
        base_path.display()
    );
    let base = base_vtk.to_mesh()?;
    ensure!(monitor.supports(base.geometry()), "the chosen monitor is not defined on this geometry");
    let transported = TransportedMesh::from_base(&base, mesh_vtk.points)?;
    // evaluate (and smooth) the monitor exactly as the solver does
    let solver = MaSolver::new(&base, monitor, SolverConfig::default())?;
    let m = solver.monitor_at(&transported)?;
    let quality = MeshQualityReport::new(&transported, CellShape::of(&base), monitor, &m.values);
    write_csv_reports(out, base.geometry(), &quality, &[])?;
    let summary = summarise(None, &[], &transported, &quality);
    write_summary(out, &summary)?;
    println!(
        "equidistribution |r m/c - 1|: max {:.3e} median {:.3e}; non-orthogonality max {:.2} deg; skewness max {:.3e}",
        summary.max_equidistribution_deviation,
        summary.median_equidistribution_deviation,
        summary.max_non_orthogonality_deg,
        summary.max_skewness
    );
    println!(
        "non-convex cells {}, tangled cells {}",
        summary.non_convex_cells, summary.tangled_cells
    );
    Ok(())
}
