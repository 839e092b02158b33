//! File exporters: legacy VTK meshes and CSV reports.
//!
//! Numbers are written as `{:.16e}`, which round-trips every `f64` exactly and
//! makes the outputs suitable for golden-file comparison.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::diagnostics::{Location, MeshQualityReport};
use crate::error::{Error, Result};
use crate::mesh::{CentreRule, Geometry, PolygonalSurfaceMesh, Topology};
use crate::scalar::Real;
use crate::solver::IterationRecord;
use crate::vector::Vec3;

/// VTK cell type of a general polygon.
const VTK_POLYGON: u8 = 7;

fn geometry_tag<T: Real>(geometry: &Geometry<T>) -> String {
    match *geometry {
        Geometry::PlanePeriodic {
            half_width,
            half_height,
        } => format!(
            "otmesh plane half_width={:.16e} half_height={:.16e}",
            half_width.as_f64(),
            half_height.as_f64()
        ),
        Geometry::Sphere { radius } => format!("otmesh sphere radius={:.16e}", radius.as_f64()),
    }
}

/// Legacy-format ASCII unstructured grid with polygon cells and named
/// per-cell scalar arrays. The title line records the geometry so the file
/// can be read back into a mesh. Planar points are embedded at `z = 0`.
pub fn vtk_string<T: Real>(mesh: &PolygonalSurfaceMesh<T>, cell_fields: &[(&str, &[T])]) -> Result<String> {
    let nc = mesh.num_cells();
    for (name, values) in cell_fields {
        if values.len() != nc {
            return Err(Error::FieldLength {
                expected: nc,
                got: values.len(),
            });
        }
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::InvalidConfig(format!("VTK array name `{name}` must be one non-empty word")));
        }
    }
    let topo = mesh.topology();
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "{}", geometry_tag(mesh.geometry()));
    let _ = writeln!(out, "ASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(out, "POINTS {} double", mesh.num_vertices());
    for p in mesh.points() {
        let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", p.x.as_f64(), p.y.as_f64(), p.z.as_f64());
    }
    let size: usize = topo.cell_vertices.iter().map(|v| v.len() + 1).sum();
    let _ = writeln!(out, "CELLS {nc} {size}");
    for verts in &topo.cell_vertices {
        let _ = write!(out, "{}", verts.len());
        for v in verts {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "CELL_TYPES {nc}");
    for _ in 0..nc {
        let _ = writeln!(out, "{VTK_POLYGON}");
    }
    if !cell_fields.is_empty() {
        let _ = writeln!(out, "CELL_DATA {nc}");
        for (name, values) in cell_fields {
            let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in values.iter() {
                let _ = writeln!(out, "{:.16e}", v.as_f64());
            }
        }
    }
    Ok(out)
}

pub fn write_vtk<T: Real>(path: &Path, mesh: &PolygonalSurfaceMesh<T>, cell_fields: &[(&str, &[T])]) -> Result<()> {
    let text = vtk_string(mesh, cell_fields)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Contents of a VTK file written by [`write_vtk`].
#[derive(Debug, Clone, PartialEq)]
pub struct VtkMesh {
    pub geometry: Geometry<f64>,
    pub points: Vec<Vec3<f64>>,
    pub cell_vertices: Vec<Vec<usize>>,
    pub cell_fields: Vec<(String, Vec<f64>)>,
}

impl VtkMesh {
    /// Rebuilds a mesh with a fresh topology and centroid cell centres.
    pub fn to_mesh(&self) -> Result<PolygonalSurfaceMesh<f64>> {
        let topo = Topology::from_cell_vertices(self.points.len(), self.cell_vertices.clone())?;
        PolygonalSurfaceMesh::with_topology(self.geometry, Arc::new(topo), self.points.clone(), CentreRule::Centroid)
    }

    pub fn field(&self, name: &str) -> Option<&[f64]> {
        self.cell_fields
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

struct Tokens<'a> {
    path: &'a Path,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    pending: Vec<&'a str>,
    line: usize,
}

impl<'a> Tokens<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            message: message.into(),
        }
    }

    /// Next whole line, trimmed.
    fn line(&mut self) -> Result<&'a str> {
        if !self.pending.is_empty() {
            return Err(self.err("unexpected trailing values"));
        }
        loop {
            let (i, l) = self.lines.next().ok_or_else(|| self.err("unexpected end of file"))?;
            self.line = i + 1;
            let l = l.trim();
            if !l.is_empty() {
                return Ok(l);
            }
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        while self.pending.is_empty() {
            let l = self.line()?;
            self.pending = l.split_whitespace().rev().collect();
        }
        Ok(self.pending.pop().expect("non-empty"))
    }

    fn parse<F: std::str::FromStr>(&mut self) -> Result<F> {
        let t = self.token()?;
        t.parse().map_err(|_| self.err(format!("cannot parse `{t}`")))
    }

    fn keyword(&mut self, word: &str) -> Result<()> {
        let t = self.token()?;
        if t == word {
            Ok(())
        } else {
            Err(self.err(format!("expected `{word}`, found `{t}`")))
        }
    }

    fn at_end(&self) -> bool {
        self.pending.is_empty() && self.lines.clone().all(|(_, l)| l.trim().is_empty())
    }
}

fn parse_geometry(title: &str, tokens: &Tokens) -> Result<Geometry<f64>> {
    let words: Vec<&str> = title.split_whitespace().collect();
    let value = |key: &str| -> Result<f64> {
        words
            .iter()
            .find_map(|w| w.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .ok_or_else(|| tokens.err(format!("title lacks `{key}=`")))?
            .parse()
            .map_err(|_| tokens.err(format!("bad `{key}` value")))
    };
    match words.get(..2) {
        Some(["otmesh", "plane"]) => Ok(Geometry::PlanePeriodic {
            half_width: value("half_width")?,
            half_height: value("half_height")?,
        }),
        Some(["otmesh", "sphere"]) => Ok(Geometry::Sphere {
            radius: value("radius")?,
        }),
        _ => Err(tokens.err("title line does not describe an otmesh geometry")),
    }
}

/// Parses the subset of the legacy format produced by [`vtk_string`].
pub fn parse_vtk(text: &str, origin: &Path) -> Result<VtkMesh> {
    let mut t = Tokens {
        path: origin,
        lines: text.lines().enumerate(),
        pending: Vec::new(),
        line: 0,
    };
    if !t.line()?.starts_with("# vtk DataFile") {
        return Err(t.err("missing VTK header"));
    }
    let title = t.line()?;
    let geometry = parse_geometry(title, &t)?;
    t.keyword("ASCII")?;
    t.keyword("DATASET")?;
    t.keyword("UNSTRUCTURED_GRID")?;
    t.keyword("POINTS")?;
    let np: usize = t.parse()?;
    t.token()?;
    let mut points = Vec::with_capacity(np);
    for _ in 0..np {
        points.push(Vec3::new(t.parse()?, t.parse()?, t.parse()?));
    }
    t.keyword("CELLS")?;
    let nc: usize = t.parse()?;
    let _size: usize = t.parse()?;
    let mut cell_vertices = Vec::with_capacity(nc);
    for _ in 0..nc {
        let k: usize = t.parse()?;
        let verts = (0..k).map(|_| t.parse()).collect::<Result<Vec<usize>>>()?;
        if verts.iter().any(|&v| v >= np) {
            return Err(t.err("cell references a missing point"));
        }
        cell_vertices.push(verts);
    }
    t.keyword("CELL_TYPES")?;
    if t.parse::<usize>()? != nc {
        return Err(t.err("CELL_TYPES count differs from CELLS"));
    }
    for _ in 0..nc {
        if t.parse::<u8>()? != VTK_POLYGON {
            return Err(t.err("only polygon cells are supported"));
        }
    }
    let mut cell_fields = Vec::new();
    if !t.at_end() {
        t.keyword("CELL_DATA")?;
        if t.parse::<usize>()? != nc {
            return Err(t.err("CELL_DATA count differs from CELLS"));
        }
        while !t.at_end() {
            t.keyword("SCALARS")?;
            let name = t.token()?.to_string();
            t.token()?;
            t.parse::<usize>()?;
            t.keyword("LOOKUP_TABLE")?;
            t.token()?;
            let values = (0..nc).map(|_| t.parse()).collect::<Result<Vec<f64>>>()?;
            cell_fields.push((name, values));
        }
    }
    Ok(VtkMesh {
        geometry,
        points,
        cell_vertices,
        cell_fields,
    })
}

pub fn read_vtk(path: &Path) -> Result<VtkMesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vtk(&text, path)
}

fn e<T: Real>(x: T) -> String {
    format!("{:.16e}", x.as_f64())
}

fn location_header<T: Real>(geometry: &Geometry<T>) -> &'static str {
    if geometry.is_sphere() {
        "distance,lon,lat"
    } else {
        "distance,x,y"
    }
}

fn location<T: Real>(l: &Location<T>) -> String {
    format!("{},{},{}", e(l.distance), e(l.coord[0]), e(l.coord[1]))
}

pub const CONVERGENCE_HEADER: &str = "n,initial_residual,one_plus_alpha";

/// `convergence.csv`: one row per fixed-point iteration.
pub fn convergence_csv(records: &[IterationRecord]) -> String {
    let mut out = format!("{CONVERGENCE_HEADER}\n");
    for r in records {
        let _ = writeln!(out, "{},{},{}", r.n, e(r.initial_residual), e(r.one_plus_alpha));
    }
    out
}

/// `equidistribution.csv`: per cell, `cell,distance,lon,lat,v_x,r,c_over_m,deviation`
/// (`x,y` replace `lon,lat` on the plane); `deviation = r·m/c − 1`.
pub fn equidistribution_csv<T: Real>(geometry: &Geometry<T>, report: &MeshQualityReport<T>) -> String {
    let mut out = format!("cell,{},v_x,r,c_over_m,deviation\n", location_header(geometry));
    for (i, row) in report.equidistribution.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{}",
            location(&row.location),
            e(row.v_x),
            e(row.r),
            e(row.c_over_m),
            e(row.deviation)
        );
    }
    out
}

/// `spacing.csv`: per face, `face,distance,lon,lat,spacing,reference`.
pub fn spacing_csv<T: Real>(geometry: &Geometry<T>, report: &MeshQualityReport<T>) -> String {
    let mut out = format!("face,{},spacing,reference\n", location_header(geometry));
    for (f, row) in report.spacing.iter().enumerate() {
        let _ = writeln!(out, "{f},{},{},{}", location(&row.location), e(row.spacing), e(row.reference));
    }
    out
}

/// `orthogonality.csv`: per face, `face,distance,lon,lat,non_orthogonality_deg`.
pub fn orthogonality_csv<T: Real>(geometry: &Geometry<T>, report: &MeshQualityReport<T>) -> String {
    let mut out = format!("face,{},non_orthogonality_deg\n", location_header(geometry));
    for (f, (l, v)) in report.face_locations.iter().zip(&report.non_orthogonality).enumerate() {
        let _ = writeln!(out, "{f},{},{}", location(l), e(*v));
    }
    out
}

/// `skewness.csv`: per face, `face,distance,lon,lat,skewness,fallback`, where
/// `fallback` is 1 when the centre line misses the face.
pub fn skewness_csv<T: Real>(geometry: &Geometry<T>, report: &MeshQualityReport<T>) -> String {
    let mut out = format!("face,{},skewness,fallback\n", location_header(geometry));
    for (f, (l, s)) in report.face_locations.iter().zip(&report.skewness).enumerate() {
        let _ = writeln!(out, "{f},{},{},{}", location(l), e(s.value), u8::from(s.fallback));
    }
    out
}

/// Writes the five CSV reports into `dir` and returns their paths.
pub fn write_csv_reports<T: Real>(
    dir: &Path,
    geometry: &Geometry<T>,
    report: &MeshQualityReport<T>,
    records: &[IterationRecord],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        ("convergence.csv", convergence_csv(records)),
        ("equidistribution.csv", equidistribution_csv(geometry, report)),
        ("spacing.csv", spacing_csv(geometry, report)),
        ("orthogonality.csv", orthogonality_csv(geometry, report)),
        ("skewness.csv", skewness_csv(geometry, report)),
    ];
    files
        .into_iter()
        .map(|(name, text)| {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
