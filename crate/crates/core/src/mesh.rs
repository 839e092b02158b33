//! Polygonal surface meshes on the periodic plane and on the sphere.
//!
//! Faces of a surface mesh are edges. "Volume" means cell area throughout.
//! Topology is shared behind an [`Arc`] so that a transported mesh provably
//! keeps the connectivity of the mesh it was moved from.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sphere::{central_angle, tangent_basis_unit, unit_triangle_excess};
use crate::vector::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Geometry<T> {
    /// Doubly periodic rectangle `[-half_width, half_width) × [-half_height, half_height)`.
    PlanePeriodic { half_width: T, half_height: T },
    Sphere { radius: T },
}

impl<T: Real> Geometry<T> {
    pub fn is_sphere(&self) -> bool {
        matches!(self, Geometry::Sphere { .. })
    }

    /// Total area of the domain.
    pub fn area(&self) -> T {
        match *self {
            Geometry::PlanePeriodic {
                half_width,
                half_height,
            } => T::lit(4.0) * half_width * half_height,
            Geometry::Sphere { radius } => T::lit(4.0) * T::PI() * radius * radius,
        }
    }

    /// Shortest representative of a displacement (minimum image on the plane,
    /// identity on the sphere).
    #[inline]
    pub fn min_image(&self, d: Vec3<T>) -> Vec3<T> {
        match *self {
            Geometry::PlanePeriodic {
                half_width,
                half_height,
            } => {
                let (wx, wy) = (half_width + half_width, half_height + half_height);
                Vec3::planar(d.x - wx * (d.x / wx).round(), d.y - wy * (d.y / wy).round())
            }
            Geometry::Sphere { .. } => d,
        }
    }

    /// Maps a position back into the fundamental domain (plane) or onto the
    /// sphere surface.
    #[inline]
    pub fn wrap(&self, p: Vec3<T>) -> Vec3<T> {
        match *self {
            Geometry::PlanePeriodic {
                half_width,
                half_height,
            } => {
                let (wx, wy) = (half_width + half_width, half_height + half_height);
                Vec3::planar(
                    p.x - wx * ((p.x + half_width) / wx).floor(),
                    p.y - wy * ((p.y + half_height) / wy).floor(),
                )
            }
            Geometry::Sphere { radius } => p.normalized() * radius,
        }
    }

    /// Like [`Geometry::wrap`] but leaves points already on the surface
    /// untouched, so rebuilding a mesh from its own points is bit-exact.
    #[inline]
    pub fn settle(&self, p: Vec3<T>) -> Vec3<T> {
        match *self {
            Geometry::Sphere { radius } => {
                let off = (p.norm() - radius).abs();
                if off <= T::lit(8.0) * T::epsilon() * radius {
                    p
                } else {
                    self.wrap(p)
                }
            }
            Geometry::PlanePeriodic { .. } => self.wrap(p),
        }
    }

    /// Unit normal of the surface at `p`.
    #[inline]
    pub fn normal(&self, p: Vec3<T>) -> Vec3<T> {
        match self {
            Geometry::PlanePeriodic { .. } => Vec3::unit_z(),
            Geometry::Sphere { .. } => p.normalized(),
        }
    }

    /// Orthonormal tangent basis at `p`.
    #[inline]
    pub fn tangent_basis(&self, p: Vec3<T>) -> (Vec3<T>, Vec3<T>) {
        match self {
            Geometry::PlanePeriodic { .. } => (Vec3::unit_x(), Vec3::unit_y()),
            Geometry::Sphere { .. } => tangent_basis_unit(p.normalized()),
        }
    }

    /// Surface distance between two points (geodesic on the sphere).
    #[inline]
    pub fn distance(&self, p: Vec3<T>, q: Vec3<T>) -> T {
        match *self {
            Geometry::PlanePeriodic { .. } => self.min_image(q - p).norm(),
            Geometry::Sphere { radius } => radius * central_angle(p, q),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Face {
    /// Endpoints in the owner's counter-clockwise order.
    pub vertices: [usize; 2],
    pub owner: usize,
    pub neighbour: usize,
}

static NEXT_TOPOLOGY_ID: AtomicU64 = AtomicU64::new(1);

/// Cell–face–vertex incidence. Immutable once built.
#[derive(Debug)]
pub struct Topology {
    id: u64,
    pub faces: Vec<Face>,
    /// Faces of each cell; face `k` is the edge from vertex `k` to `k + 1`.
    pub cell_faces: Vec<Vec<usize>>,
    /// Counter-clockwise vertex loop of each cell (seen from outside).
    pub cell_vertices: Vec<Vec<usize>>,
    pub vertex_faces: Vec<Vec<usize>>,
    pub vertex_cells: Vec<Vec<usize>>,
}

impl PartialEq for Topology {
    /// Structural equality of the incidence arrays (the id is ignored).
    fn eq(&self, o: &Self) -> bool {
        self.faces == o.faces
            && self.cell_faces == o.cell_faces
            && self.cell_vertices == o.cell_vertices
            && self.vertex_faces == o.vertex_faces
            && self.vertex_cells == o.vertex_cells
    }
}

impl Topology {
    /// Derives faces from counter-clockwise cell loops. Every edge must be
    /// shared by exactly two cells traversing it in opposite directions; the
    /// lower cell id owns the face.
    pub fn from_cell_vertices(n_vertices: usize, cell_vertices: Vec<Vec<usize>>) -> Result<Self> {
        let mut faces: Vec<Face> = Vec::new();
        let mut pending: HashMap<(usize, usize), usize> = HashMap::new();
        let mut cell_faces = Vec::with_capacity(cell_vertices.len());
        let mut vertex_cells = vec![Vec::new(); n_vertices];

        for (cell, verts) in cell_vertices.iter().enumerate() {
            if verts.len() < 3 {
                return Err(Error::InvalidPolygon(verts.len()));
            }
            let mut own = Vec::with_capacity(verts.len());
            for k in 0..verts.len() {
                let (a, b) = (verts[k], verts[(k + 1) % verts.len()]);
                if a >= n_vertices || b >= n_vertices {
                    return Err(Error::InvalidMesh(format!("cell {cell} references missing vertex")));
                }
                if a == b {
                    return Err(Error::InvalidMesh(format!("cell {cell} repeats vertex {a}")));
                }
                if let Some(face) = pending.remove(&(b, a)) {
                    if faces[face].owner == cell {
                        return Err(Error::InvalidMesh(format!("cell {cell} folds onto itself")));
                    }
                    faces[face].neighbour = cell;
                    own.push(face);
                } else {
                    if pending.contains_key(&(a, b)) {
                        return Err(Error::InvalidMesh(format!(
                            "edge ({a}, {b}) traversed twice in the same direction"
                        )));
                    }
                    let id = faces.len();
                    faces.push(Face {
                        vertices: [a, b],
                        owner: cell,
                        neighbour: usize::MAX,
                    });
                    pending.insert((a, b), id);
                    own.push(id);
                }
                vertex_cells[a].push(cell);
            }
            cell_faces.push(own);
        }
        if !pending.is_empty() {
            return Err(Error::InvalidMesh(format!(
                "{} boundary edges; surface must be closed or periodic",
                pending.len()
            )));
        }
        let mut vertex_faces = vec![Vec::new(); n_vertices];
        for (f, face) in faces.iter().enumerate() {
            vertex_faces[face.vertices[0]].push(f);
            vertex_faces[face.vertices[1]].push(f);
        }
        if let Some(v) = vertex_faces.iter().position(Vec::is_empty) {
            return Err(Error::InvalidMesh(format!("vertex {v} is not used by any cell")));
        }
        Ok(Self {
            id: NEXT_TOPOLOGY_ID.fetch_add(1, Ordering::Relaxed),
            faces,
            cell_faces,
            cell_vertices,
            vertex_faces,
            vertex_cells,
        })
    }

    /// Identifier used to bind fields to meshes sharing this topology.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn num_cells(&self) -> usize {
        self.cell_vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertex_faces.len()
    }

    /// The cell across `face` from `cell`.
    #[inline]
    pub fn across(&self, face: usize, cell: usize) -> usize {
        let f = &self.faces[face];
        if f.owner == cell {
            f.neighbour
        } else {
            f.owner
        }
    }

    /// Sorted list of `(owner, neighbour)` pairs, a connectivity fingerprint
    /// independent of face and vertex numbering.
    pub fn adjacency_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<_> = self
            .faces
            .iter()
            .map(|f| (f.owner.min(f.neighbour), f.owner.max(f.neighbour)))
            .collect();
        pairs.sort_unstable();
        pairs
    }
}

/// How cell centres (the end points of `d_f`) are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum CentreRule<T> {
    /// Centre of mass of every cell.
    Centroid,
    /// Fixed points, e.g. Voronoi generators of an orthogonal dual mesh.
    Fixed(Vec<Vec3<T>>),
}

/// Cached geometric quantities, recomputed in full whenever vertices move.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshGeometry<T> {
    pub cell_volumes: Vec<T>,
    pub cell_centroids: Vec<Vec3<T>>,
    pub cell_centres: Vec<Vec3<T>>,
    /// `S_f`: outward from the owner, tangent at the face centre, magnitude the
    /// face (edge) length.
    pub face_area_vectors: Vec<Vec3<T>>,
    pub face_centres: Vec<Vec3<T>>,
    /// `d_f`: owner centre to neighbour centre, tangent at the face centre, with
    /// magnitude the (geodesic) centre distance.
    pub face_deltas: Vec<Vec3<T>>,
    pub face_delta_lengths: Vec<T>,
    /// `λ_f`, the weight of the owner value in linear face interpolation.
    pub face_weights: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct PolygonalSurfaceMesh<T> {
    geometry: Geometry<T>,
    topology: Arc<Topology>,
    points: Vec<Vec3<T>>,
    centre_rule: CentreRule<T>,
    cache: MeshGeometry<T>,
}

impl<T: Real> PolygonalSurfaceMesh<T> {
    pub fn new(
        geometry: Geometry<T>,
        points: Vec<Vec3<T>>,
        cell_vertices: Vec<Vec<usize>>,
        centre_rule: CentreRule<T>,
    ) -> Result<Self> {
        let topology = Arc::new(Topology::from_cell_vertices(points.len(), cell_vertices)?);
        Self::with_topology(geometry, topology, points, centre_rule)
    }

    /// Builds a mesh that shares an existing topology.
    pub fn with_topology(
        geometry: Geometry<T>,
        topology: Arc<Topology>,
        points: Vec<Vec3<T>>,
        centre_rule: CentreRule<T>,
    ) -> Result<Self> {
        if points.len() != topology.num_vertices() {
            return Err(Error::InvalidMesh(format!(
                "{} points for {} topology vertices",
                points.len(),
                topology.num_vertices()
            )));
        }
        if let CentreRule::Fixed(c) = &centre_rule {
            if c.len() != topology.num_cells() {
                return Err(Error::FieldLength {
                    expected: topology.num_cells(),
                    got: c.len(),
                });
            }
        }
        let points: Vec<_> = points.into_iter().map(|p| geometry.settle(p)).collect();
        let cache = build_face_geometry(&geometry, &topology, &points, &centre_rule)?;
        Ok(Self {
            geometry,
            topology,
            points,
            centre_rule,
            cache,
        })
    }

    /// Same topology and centre rule, new vertex positions.
    pub fn moved(&self, points: Vec<Vec3<T>>) -> Result<Self> {
        Self::with_topology(self.geometry, self.topology.clone(), points, self.centre_rule.clone())
    }

    /// Same topology and vertices, different centre rule.
    pub fn with_centre_rule(&self, centre_rule: CentreRule<T>) -> Result<Self> {
        Self::with_topology(self.geometry, self.topology.clone(), self.points.clone(), centre_rule)
    }

    pub fn geometry(&self) -> &Geometry<T> {
        &self.geometry
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn points(&self) -> &[Vec3<T>] {
        &self.points
    }

    pub fn centre_rule(&self) -> &CentreRule<T> {
        &self.centre_rule
    }

    pub fn cached(&self) -> &MeshGeometry<T> {
        &self.cache
    }

    pub fn num_cells(&self) -> usize {
        self.topology.num_cells()
    }

    pub fn num_faces(&self) -> usize {
        self.topology.num_faces()
    }

    pub fn num_vertices(&self) -> usize {
        self.topology.num_vertices()
    }

    pub fn volumes(&self) -> &[T] {
        &self.cache.cell_volumes
    }

    pub fn centres(&self) -> &[Vec3<T>] {
        &self.cache.cell_centres
    }

    pub fn total_volume(&self) -> T {
        self.cache.cell_volumes.iter().copied().sum()
    }

    /// Vertex positions of `cell`, unwrapped (plane) so that the polygon is
    /// contiguous around its first vertex.
    pub fn cell_polygon(&self, cell: usize) -> Vec<Vec3<T>> {
        unwrapped_polygon(&self.geometry, &self.points, &self.topology.cell_vertices[cell])
    }

    /// Per-cell areas, signed by orientation (inverted cells are negative).
    pub fn cell_volumes(&self) -> Vec<T> {
        self.cache.cell_volumes.clone()
    }

    /// Centre of mass of `cell`.
    pub fn centroid(&self, cell: usize) -> Result<Vec3<T>> {
        let poly = self.cell_polygon(cell);
        let (area, centroid) = polygon_area_centroid(&self.geometry, &poly);
        if area == T::zero() || !area.is_finite() {
            return Err(Error::ZeroAreaCell { cell });
        }
        Ok(centroid)
    }

    /// Sum over each cell of its outward `S_f`. Zero on the plane; on the
    /// sphere the tangential defect (measured in the cell's tangent plane) is
    /// `O(V/a)`.
    pub fn closure_defects(&self) -> Vec<T> {
        (0..self.num_cells())
            .map(|c| {
                let n = self.geometry.normal(self.cache.cell_centres[c]);
                let sum: Vec3<T> = self.topology.cell_faces[c]
                    .iter()
                    .map(|&f| self.outward_area_vector(f, c))
                    .sum();
                sum.reject(n).norm()
            })
            .collect()
    }

    /// `S_f` oriented outward from `cell`.
    #[inline]
    pub fn outward_area_vector(&self, face: usize, cell: usize) -> Vec3<T> {
        let s = self.cache.face_area_vectors[face];
        if self.topology.faces[face].owner == cell {
            s
        } else {
            -s
        }
    }

    pub fn perimeter(&self, cell: usize) -> T {
        self.topology.cell_faces[cell]
            .iter()
            .map(|&f| self.cache.face_area_vectors[f].norm())
            .sum()
    }
}

fn unwrapped_polygon<T: Real>(geometry: &Geometry<T>, points: &[Vec3<T>], verts: &[usize]) -> Vec<Vec3<T>> {
    let p0 = points[verts[0]];
    match geometry {
        Geometry::PlanePeriodic { .. } => verts
            .iter()
            .map(|&v| p0 + geometry.min_image(points[v] - p0))
            .collect(),
        Geometry::Sphere { .. } => verts.iter().map(|&v| points[v]).collect(),
    }
}

/// Signed area and centroid of an (unwrapped) polygon.
fn polygon_area_centroid<T: Real>(geometry: &Geometry<T>, poly: &[Vec3<T>]) -> (T, Vec3<T>) {
    let n = poly.len();
    match *geometry {
        Geometry::PlanePeriodic { .. } => {
            let p0 = poly[0];
            let mut twice_area = T::zero();
            let (mut cx, mut cy) = (T::zero(), T::zero());
            for k in 0..n {
                let a = poly[k] - p0;
                let b = poly[(k + 1) % n] - p0;
                let cross = a.x * b.y - b.x * a.y;
                twice_area = twice_area + cross;
                cx = cx + (a.x + b.x) * cross;
                cy = cy + (a.y + b.y) * cross;
            }
            let area = twice_area / T::lit(2.0);
            let centroid = if twice_area != T::zero() {
                let s = T::lit(3.0) * twice_area;
                p0 + Vec3::planar(cx / s, cy / s)
            } else {
                p0 + poly.iter().map(|&p| p - p0).sum::<Vec3<T>>() / T::from_count(n)
            };
            (area, geometry.wrap(centroid))
        }
        Geometry::Sphere { radius } => {
            let units: Vec<Vec3<T>> = poly.iter().map(|p| p.normalized()).collect();
            let hint = units.iter().copied().sum::<Vec3<T>>().normalized();
            let mut weighted = Vec3::zero();
            let mut excess = T::zero();
            for k in 0..n {
                let (a, b) = (units[k], units[(k + 1) % n]);
                let e = unit_triangle_excess(hint, a, b);
                excess = excess + e;
                weighted += (hint + a + b).normalized() * e;
            }
            let centroid = if weighted.norm() > T::zero() {
                weighted.normalized()
            } else {
                hint
            };
            (radius * radius * excess, centroid * radius)
        }
    }
}

/// Recomputes every cached geometric quantity of a mesh.
pub fn build_face_geometry<T: Real>(
    geometry: &Geometry<T>,
    topology: &Topology,
    points: &[Vec3<T>],
    centre_rule: &CentreRule<T>,
) -> Result<MeshGeometry<T>> {
    let nc = topology.num_cells();
    let mut cell_volumes = Vec::with_capacity(nc);
    let mut cell_centroids = Vec::with_capacity(nc);
    for verts in &topology.cell_vertices {
        let poly = unwrapped_polygon(geometry, points, verts);
        let (area, centroid) = polygon_area_centroid(geometry, &poly);
        cell_volumes.push(area);
        cell_centroids.push(centroid);
    }
    let cell_centres = match centre_rule {
        CentreRule::Centroid => cell_centroids.clone(),
        CentreRule::Fixed(c) => c.iter().map(|&p| geometry.wrap(p)).collect(),
    };

    let nf = topology.num_faces();
    let mut face_area_vectors = Vec::with_capacity(nf);
    let mut face_centres = Vec::with_capacity(nf);
    let mut face_deltas = Vec::with_capacity(nf);
    let mut face_delta_lengths = Vec::with_capacity(nf);
    let mut face_weights = Vec::with_capacity(nf);

    for (f, face) in topology.faces.iter().enumerate() {
        let (p1, p2) = (points[face.vertices[0]], points[face.vertices[1]]);
        let (co, cn) = (cell_centres[face.owner], cell_centres[face.neighbour]);
        match *geometry {
            Geometry::PlanePeriodic { .. } => {
                let e = geometry.min_image(p2 - p1);
                if e.norm() == T::zero() {
                    return Err(Error::DegenerateFace { face: f });
                }
                let centre = geometry.wrap(p1 + e / T::lit(2.0));
                let d = geometry.min_image(cn - co);
                let dl = d.norm();
                face_area_vectors.push(Vec3::planar(e.y, -e.x));
                face_centres.push(centre);
                face_deltas.push(d);
                face_delta_lengths.push(dl);
                face_weights.push(geometry.min_image(cn - centre).norm() / dl);
            }
            Geometry::Sphere { radius } => {
                let (u1, u2) = (p1.normalized(), p2.normalized());
                let len = radius * central_angle(u1, u2);
                if len == T::zero() {
                    return Err(Error::DegenerateFace { face: f });
                }
                let m = (u1 + u2).normalized();
                let t = (u2 - u1).reject(m).normalized();
                face_area_vectors.push(t.cross(m) * len);
                face_centres.push(m * radius);
                let dl = radius * central_angle(co, cn);
                let dir = (cn - co).reject(m).normalized();
                face_deltas.push(dir * dl);
                face_delta_lengths.push(dl);
                face_weights.push(radius * central_angle(m, cn) / dl);
            }
        }
    }
    Ok(MeshGeometry {
        cell_volumes,
        cell_centroids,
        cell_centres,
        face_area_vectors,
        face_centres,
        face_deltas,
        face_delta_lengths,
        face_weights,
    })
}

/// One value per cell of a mesh topology.
#[derive(Debug, Clone, PartialEq)]
pub struct CellScalarField<T> {
    mesh_id: u64,
    pub values: Vec<T>,
}

impl<T: Real> CellScalarField<T> {
    pub fn new(mesh: &PolygonalSurfaceMesh<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != mesh.num_cells() {
            return Err(Error::FieldLength {
                expected: mesh.num_cells(),
                got: values.len(),
            });
        }
        Ok(Self {
            mesh_id: mesh.topology().id(),
            values,
        })
    }

    pub fn zeros(mesh: &PolygonalSurfaceMesh<T>) -> Self {
        Self::constant(mesh, T::zero())
    }

    pub fn constant(mesh: &PolygonalSurfaceMesh<T>, value: T) -> Self {
        Self {
            mesh_id: mesh.topology().id(),
            values: vec![value; mesh.num_cells()],
        }
    }

    pub fn from_fn(mesh: &PolygonalSurfaceMesh<T>, f: impl FnMut(usize) -> T) -> Self {
        Self {
            mesh_id: mesh.topology().id(),
            values: (0..mesh.num_cells()).map(f).collect(),
        }
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn is_bound_to(&self, mesh: &PolygonalSurfaceMesh<T>) -> bool {
        self.mesh_id == mesh.topology().id() && self.values.len() == mesh.num_cells()
    }

    pub(crate) fn check(&self, mesh: &PolygonalSurfaceMesh<T>) -> Result<()> {
        if self.is_bound_to(mesh) {
            Ok(())
        } else {
            Err(Error::FieldLength {
                expected: mesh.num_cells(),
                got: self.values.len(),
            })
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `Σ vᵢ Vᵢ / Σ Vᵢ`
    pub fn volume_weighted_mean(&self, volumes: &[T]) -> T {
        let num: T = self.values.iter().zip(volumes).map(|(&v, &w)| v * w).sum();
        let den: T = volumes.iter().copied().sum();
        num / den
    }
}

/// One tangent (or planar) vector per mesh vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexVectorField<T> {
    mesh_id: u64,
    pub values: Vec<Vec3<T>>,
}

impl<T: Real> VertexVectorField<T> {
    pub fn new(mesh: &PolygonalSurfaceMesh<T>, values: Vec<Vec3<T>>) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return Err(Error::FieldLength {
                expected: mesh.num_vertices(),
                got: values.len(),
            });
        }
        Ok(Self {
            mesh_id: mesh.topology().id(),
            values,
        })
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }
}

/// A computational mesh with moved vertices. The topology is the base mesh's
/// own `Arc`, so connectivity cannot change; cell centres are centroids.
#[derive(Debug, Clone)]
pub struct TransportedMesh<T> {
    mesh: PolygonalSurfaceMesh<T>,
    base_volumes: Vec<T>,
}

impl<T: Real> TransportedMesh<T> {
    pub fn identity(base: &PolygonalSurfaceMesh<T>) -> Result<Self> {
        Self::from_base(base, base.points().to_vec())
    }

    pub fn from_base(base: &PolygonalSurfaceMesh<T>, moved_vertices: Vec<Vec3<T>>) -> Result<Self> {
        let mesh = PolygonalSurfaceMesh::with_topology(
            *base.geometry(),
            base.topology().clone(),
            moved_vertices,
            CentreRule::Centroid,
        )?;
        Ok(Self {
            mesh,
            base_volumes: base.volumes().to_vec(),
        })
    }

    pub fn mesh(&self) -> &PolygonalSurfaceMesh<T> {
        &self.mesh
    }

    pub fn into_mesh(self) -> PolygonalSurfaceMesh<T> {
        self.mesh
    }

    pub fn moved_vertices(&self) -> &[Vec3<T>] {
        self.mesh.points()
    }

    pub fn base_volumes(&self) -> &[T] {
        &self.base_volumes
    }

    pub fn volumes(&self) -> &[T] {
        self.mesh.volumes()
    }

    pub fn centroids(&self) -> &[Vec3<T>] {
        &self.mesh.cached().cell_centroids
    }

    /// `true` when this mesh shares the topology of `base`.
    pub fn shares_topology_with(&self, base: &PolygonalSurfaceMesh<T>) -> bool {
        Arc::ptr_eq(self.mesh.topology(), base.topology())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane() -> Geometry<f64> {
        Geometry::PlanePeriodic {
            half_width: 1.0,
            half_height: 1.0,
        }
    }

    /// 4×4 periodic grid on [-1,1]².
    fn grid4(points: Option<Vec<Vec3<f64>>>) -> PolygonalSurfaceMesh<f64> {
        let n = 4;
        let h = 0.5;
        let pts = points.unwrap_or_else(|| {
            (0..n * n)
                .map(|k| Vec3::planar(-1.0 + h * (k % n) as f64, -1.0 + h * (k / n) as f64))
                .collect()
        });
        let v = |i: usize, j: usize| (j % n) * n + (i % n);
        let cells = (0..n * n)
            .map(|c| {
                let (i, j) = (c % n, c / n);
                vec![v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)]
            })
            .collect();
        PolygonalSurfaceMesh::new(plane(), pts, cells, CentreRule::Centroid).unwrap()
    }

    #[test]
    fn square_faces() {
        let m = grid4(None);
        assert_eq!(m.num_faces(), 32);
        let g = m.cached();
        for f in 0..m.num_faces() {
            assert!((g.face_area_vectors[f].norm() - 0.5).abs() < 1e-15);
            assert!((g.face_delta_lengths[f] - 0.5).abs() < 1e-15);
            assert!((g.face_weights[f] - 0.5).abs() < 1e-15);
            let face = m.topology().faces[f];
            let e = plane().min_image(m.points()[face.vertices[1]] - m.points()[face.vertices[0]]);
            assert_eq!(g.face_area_vectors[f].dot(e), 0.0);
            // outward from owner: points along d_f
            assert!(g.face_area_vectors[f].dot(g.face_deltas[f]) > 0.0);
        }
        assert!(m.closure_defects().iter().all(|&d| d < 1e-12));
    }

    #[test]
    fn periodic_wrap_adjacency() {
        let m = grid4(None);
        // cells 0 (x = -0.75) and 3 (x = 0.75) are adjacent through the boundary
        let shared = m.topology().cell_faces[0]
            .iter()
            .find(|&&f| m.topology().across(f, 0) == 3)
            .copied()
            .expect("wrap face");
        assert!((m.cached().face_delta_lengths[shared] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn volumes_and_inverted_cell() {
        let m = grid4(None);
        assert!(m.volumes().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!((m.total_volume() - 4.0).abs() < 1e-14);

        // swap two vertices of a single quad's loop to invert it
        let pts = vec![
            Vec3::planar(0.0, 0.0),
            Vec3::planar(1.0, 0.0),
            Vec3::planar(1.0, 1.0),
            Vec3::planar(0.0, 1.0),
        ];
        let g = plane();
        let inverted = [pts[0], pts[3], pts[2], pts[1]];
        let (area, _) = polygon_area_centroid(&g, &inverted);
        assert!(area < 0.0);
    }

    #[test]
    fn centroid_of_irregular_quad_matches_triangle_oracle() {
        let g = plane();
        let quad = [
            Vec3::planar(-0.3, -0.2),
            Vec3::planar(0.4, -0.25),
            Vec3::planar(0.5, 0.35),
            Vec3::planar(-0.1, 0.3),
        ];
        let (_, c) = polygon_area_centroid(&g, &quad);
        // oracle: split along a diagonal, area-weight the triangle centroids
        let tri = |a: Vec3<f64>, b: Vec3<f64>, c: Vec3<f64>| {
            let area = 0.5 * (b - a).cross(c - a).z;
            (area, (a + b + c) / 3.0)
        };
        let (a1, c1) = tri(quad[0], quad[1], quad[2]);
        let (a2, c2) = tri(quad[0], quad[2], quad[3]);
        let oracle = (c1 * a1 + c2 * a2) / (a1 + a2);
        assert!((c - oracle).norm() < 1e-12);
    }

    #[test]
    fn zero_area_cell_centroid_errors() {
        let m = grid4(None);
        assert!(m.centroid(5).is_ok());
        let g = plane();
        let (area, _) = polygon_area_centroid(&g, &[Vec3::planar(0.0, 0.0), Vec3::planar(1.0, 0.0), Vec3::planar(2.0, 0.0)]);
        assert_eq!(area, 0.0);
    }

    #[test]
    fn boundary_edges_rejected() {
        let pts = vec![Vec3::planar(0.0, 0.0), Vec3::planar(0.5, 0.0), Vec3::planar(0.0, 0.5)];
        let err = PolygonalSurfaceMesh::new(plane(), pts, vec![vec![0, 1, 2]], CentreRule::Centroid);
        assert!(matches!(err, Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn degenerate_face_detected() {
        let mut pts: Vec<_> = grid4(None).points().to_vec();
        pts[1] = pts[0];
        let m = grid4(None);
        let err = m.moved(pts);
        assert!(matches!(err, Err(Error::DegenerateFace { .. })));
    }

    #[test]
    fn transported_shares_topology() {
        let base = grid4(None);
        let t = TransportedMesh::identity(&base).unwrap();
        assert!(t.shares_topology_with(&base));
        assert_eq!(t.moved_vertices(), base.points());
        assert_eq!(**t.mesh().topology(), **base.topology());
    }

    #[test]
    fn fields_bind_to_topology() {
        let m = grid4(None);
        let f = CellScalarField::constant(&m, 1.0);
        assert!(f.is_bound_to(&m));
        assert!(CellScalarField::new(&m, vec![0.0; 3]).is_err());
        let other = grid4(None);
        assert!(!f.is_bound_to(&other));
    }
}
