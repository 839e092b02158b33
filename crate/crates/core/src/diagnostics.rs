//! Mesh-quality and equidistribution diagnostics.
//!
//! All functions are pure in the mesh: recomputing them on a mesh re-read
//! from disk gives the same values.

use crate::mesh::{Geometry, PolygonalSurfaceMesh, TransportedMesh};
use crate::monitor::MonitorSpec;
use crate::scalar::Real;
use crate::solver::equidistribution_constant;
use crate::sphere::{central_angle, lat_lon_deg};
use crate::vector::Vec3;

/// Angle in degrees between `S_f` and `d_f` on every face, in `[0, 180]`.
///
/// Both vectors are tangent at the face centre, so on the sphere this is the
/// angle measured in that tangent plane. The `atan2` form keeps full relative
/// precision for nearly parallel vectors, where `acos` loses half the digits.
pub fn non_orthogonality<T: Real>(mesh: &PolygonalSurfaceMesh<T>) -> Vec<T> {
    let g = mesh.cached();
    g.face_area_vectors
        .iter()
        .zip(&g.face_deltas)
        .map(|(&s, &d)| s.cross(d).norm().atan2(s.dot(d)).to_degrees())
        .collect()
}

pub fn max_non_orthogonality<T: Real>(mesh: &PolygonalSurfaceMesh<T>) -> T {
    non_orthogonality(mesh).into_iter().fold(T::zero(), T::max)
}

/// Largest non-orthogonality among the faces of each cell.
pub fn cell_max_non_orthogonality<T: Real>(mesh: &PolygonalSurfaceMesh<T>, per_face: &[T]) -> Vec<T> {
    mesh.topology()
        .cell_faces
        .iter()
        .map(|faces| faces.iter().map(|&f| per_face[f]).fold(T::zero(), T::max))
        .collect()
}

/// Skewness `d_s / |d_f|` of one face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceSkewness<T> {
    pub value: T,
    /// The centre-to-centre line misses the face; `d_s` is then the distance
    /// from the face centre to the endpoint nearest the crossing.
    pub fallback: bool,
}

/// Distance from the face centre to where the centre-to-centre line (a great
/// circle on the sphere) crosses the face, over the centre distance.
pub fn face_skewness<T: Real>(mesh: &PolygonalSurfaceMesh<T>) -> Vec<FaceSkewness<T>> {
    let g = mesh.cached();
    let geometry = mesh.geometry();
    let points = mesh.points();
    mesh.topology()
        .faces
        .iter()
        .enumerate()
        .map(|(f, face)| {
            let (p1, p2) = (points[face.vertices[0]], points[face.vertices[1]]);
            let (co, cn) = (g.cell_centres[face.owner], g.cell_centres[face.neighbour]);
            let (ds, fallback) = match *geometry {
                Geometry::PlanePeriodic { .. } => planar_crossing(geometry, p1, p2, co, g.face_deltas[f]),
                Geometry::Sphere { radius } => spherical_crossing(p1, p2, co, cn, radius),
            };
            FaceSkewness {
                value: ds / g.face_delta_lengths[f],
                fallback,
            }
        })
        .collect()
}

fn planar_crossing<T: Real>(geometry: &Geometry<T>, p1: Vec3<T>, p2: Vec3<T>, co: Vec3<T>, d: Vec3<T>) -> (T, bool) {
    let e = geometry.min_image(p2 - p1);
    let half = e.norm() / T::lit(2.0);
    // owner centre relative to p1, unwrapped next to the face
    let o = geometry.min_image(co - p1);
    let denom = e.cross(d).z;
    if denom == T::zero() {
        return (half, true);
    }
    // o + t d = s e
    let s = o.cross(d).z / denom;
    let ds = (s - T::lit(0.5)).abs() * e.norm();
    if (T::zero()..=T::one()).contains(&s) {
        (ds, false)
    } else {
        (half, true)
    }
}

fn spherical_crossing<T: Real>(p1: Vec3<T>, p2: Vec3<T>, co: Vec3<T>, cn: Vec3<T>, radius: T) -> (T, bool) {
    let (u1, u2) = (p1.normalized(), p2.normalized());
    let mid = (u1 + u2).normalized();
    let half = radius * central_angle(u1, mid);
    let axis = co.cross(cn).cross(u1.cross(u2));
    if axis.norm() == T::zero() {
        return (half, true);
    }
    let mut x = axis.normalized();
    if x.dot(mid) < T::zero() {
        x = -x;
    }
    let span = central_angle(u1, u2);
    let on_face = central_angle(u1, x) + central_angle(x, u2) <= span * (T::one() + T::lit(1e-12));
    if on_face {
        (radius * central_angle(mid, x), false)
    } else {
        (half, true)
    }
}

/// Base-mesh cell shape used to choose the spacing reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellShape {
    Quadrilateral,
    Hexagonal,
}

impl CellShape {
    /// Quadrilateral if every cell has four vertices.
    pub fn of<T: Real>(mesh: &PolygonalSurfaceMesh<T>) -> Self {
        if mesh.topology().cell_vertices.iter().all(|v| v.len() == 4) {
            CellShape::Quadrilateral
        } else {
            CellShape::Hexagonal
        }
    }

    /// Centre spacing of a regular cell with area `area`.
    pub fn reference_spacing<T: Real>(self, area: T) -> T {
        match self {
            CellShape::Quadrilateral => area.sqrt(),
            CellShape::Hexagonal => (T::lit(2.0) * area * T::lit(3.0f64.sqrt()) / T::lit(3.0)).sqrt(),
        }
    }
}

/// `c` measured on the mesh itself: the constant for which `r·m = c` holds in
/// the mean, with `r = V_x / V_ξ`.
pub fn mesh_equidistribution_constant<T: Real>(transported: &TransportedMesh<T>, monitor: &[T]) -> T {
    let r = volume_ratios(transported);
    equidistribution_constant(&r, monitor, transported.base_volumes())
}

pub fn volume_ratios<T: Real>(transported: &TransportedMesh<T>) -> Vec<T> {
    transported
        .volumes()
        .iter()
        .zip(transported.base_volumes())
        .map(|(&vx, &vb)| vx / vb)
        .collect()
}

/// Location columns of a row: distance to the monitor centre and either
/// `(lon, lat)` in degrees (sphere) or `(x, y)` (plane).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location<T> {
    pub distance: T,
    pub coord: [T; 2],
}

fn locate<T: Real>(geometry: &Geometry<T>, monitor: &MonitorSpec, p: Vec3<T>) -> Location<T> {
    let coord = match geometry {
        Geometry::Sphere { .. } => {
            let (lat, lon) = lat_lon_deg(p);
            [lon, lat]
        }
        Geometry::PlanePeriodic { .. } => [p.x, p.y],
    };
    let distance = match *geometry {
        Geometry::Sphere { radius } => radius * monitor.distance_to_centre(geometry, p),
        Geometry::PlanePeriodic { .. } => monitor.distance_to_centre(geometry, p),
    };
    Location { distance, coord }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquidistributionRow<T> {
    pub location: Location<T>,
    pub v_x: T,
    pub r: T,
    pub c_over_m: T,
    /// `r·m/c − 1`
    pub deviation: T,
}

/// Per-cell comparison of the volume ratio with `c/m`.
pub fn equidistribution_scatter<T: Real>(
    transported: &TransportedMesh<T>,
    spec: &MonitorSpec,
    monitor: &[T],
    c: T,
) -> Vec<EquidistributionRow<T>> {
    let geometry = transported.mesh().geometry();
    volume_ratios(transported)
        .into_iter()
        .enumerate()
        .map(|(i, r)| EquidistributionRow {
            location: locate(geometry, spec, transported.centroids()[i]),
            v_x: transported.volumes()[i],
            r,
            c_over_m: c / monitor[i],
            deviation: r * monitor[i] / c - T::one(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacingRow<T> {
    pub location: Location<T>,
    pub spacing: T,
    pub reference: T,
}

/// Per-face centre spacing against the spacing of a regular cell whose area
/// is the target `V_ξ·c/m`, averaged over the two cells of the face.
pub fn spacing_scatter<T: Real>(
    transported: &TransportedMesh<T>,
    shape: CellShape,
    spec: &MonitorSpec,
    monitor: &[T],
    c: T,
) -> Vec<SpacingRow<T>> {
    let mesh = transported.mesh();
    let g = mesh.cached();
    let base = transported.base_volumes();
    let target = |i: usize| base[i] * c / monitor[i];
    mesh.topology()
        .faces
        .iter()
        .enumerate()
        .map(|(f, face)| SpacingRow {
            location: locate(mesh.geometry(), spec, g.face_centres[f]),
            spacing: g.face_delta_lengths[f],
            reference: shape.reference_spacing((target(face.owner) + target(face.neighbour)) / T::lit(2.0)),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary<T> {
    pub max: T,
    pub median: T,
}

impl<T: Real> Summary<T> {
    /// Summary of a non-empty sample; `None` for an empty one.
    pub fn of(values: impl IntoIterator<Item = T>) -> Option<Self> {
        let mut v: Vec<T> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
        };
        Some(Self { max: v[n - 1], median })
    }
}

/// Maximum over minimum spacing within each distance bin, a measure of the
/// anisotropy of the mesh at a fixed distance from the refinement centre.
pub fn spacing_anisotropy<T: Real>(rows: &[SpacingRow<T>], bins: usize) -> Vec<T> {
    let bins = bins.max(1);
    let far = rows.iter().map(|r| r.location.distance).fold(T::zero(), T::max);
    let mut extremes = vec![(T::infinity(), T::zero()); bins];
    for row in rows {
        let k = if far > T::zero() {
            ((row.location.distance / far) * T::lit(bins as f64)).to_usize().unwrap_or(0).min(bins - 1)
        } else {
            0
        };
        let (lo, hi) = &mut extremes[k];
        *lo = lo.min(row.spacing);
        *hi = hi.max(row.spacing);
    }
    extremes
        .into_iter()
        .map(|(lo, hi)| if lo.is_finite() && lo > T::zero() { hi / lo } else { T::one() })
        .collect()
}

/// Every per-face and per-cell quality measure of a transported mesh.
#[derive(Debug, Clone)]
pub struct MeshQualityReport<T> {
    pub c: T,
    pub non_orthogonality: Vec<T>,
    pub skewness: Vec<FaceSkewness<T>>,
    pub face_locations: Vec<Location<T>>,
    pub spacing: Vec<SpacingRow<T>>,
    pub equidistribution: Vec<EquidistributionRow<T>>,
    pub non_orthogonality_summary: Summary<T>,
    pub skewness_summary: Summary<T>,
    pub spacing_summary: Summary<T>,
    pub area_summary: Summary<T>,
    /// Of `|r·m/c − 1|`.
    pub deviation_summary: Summary<T>,
    pub skewness_fallbacks: usize,
}

impl<T: Real> MeshQualityReport<T> {
    /// Builds the report with `c` measured on the mesh itself (see
    /// [`mesh_equidistribution_constant`]).
    pub fn new(transported: &TransportedMesh<T>, shape: CellShape, spec: &MonitorSpec, monitor: &[T]) -> Self {
        let c = mesh_equidistribution_constant(transported, monitor);
        Self::with_constant(transported, shape, spec, monitor, c)
    }

    pub fn with_constant(
        transported: &TransportedMesh<T>,
        shape: CellShape,
        spec: &MonitorSpec,
        monitor: &[T],
        c: T,
    ) -> Self {
        let mesh = transported.mesh();
        let non_orthogonality = non_orthogonality(mesh);
        let skewness = face_skewness(mesh);
        let face_locations = mesh
            .cached()
            .face_centres
            .iter()
            .map(|&p| locate(mesh.geometry(), spec, p))
            .collect();
        let spacing = spacing_scatter(transported, shape, spec, monitor, c);
        let equidistribution = equidistribution_scatter(transported, spec, monitor, c);
        let summary = |v: Vec<T>| Summary::of(v).expect("meshes have cells and faces");
        Self {
            c,
            non_orthogonality_summary: summary(non_orthogonality.clone()),
            skewness_summary: summary(skewness.iter().map(|s| s.value).collect()),
            spacing_summary: summary(spacing.iter().map(|s| s.spacing).collect()),
            area_summary: summary(transported.volumes().to_vec()),
            deviation_summary: summary(equidistribution.iter().map(|e| e.deviation.abs()).collect()),
            skewness_fallbacks: skewness.iter().filter(|s| s.fallback).count(),
            non_orthogonality,
            skewness,
            face_locations,
            spacing,
            equidistribution,
        }
    }
}
