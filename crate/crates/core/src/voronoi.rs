//! Spherical Voronoi tessellation of generator points and convexity checks.
//!
//! The Delaunay triangulation of points on a sphere is the boundary of their
//! convex hull, built here incrementally with conflict lists and exact
//! orientation predicates.

use std::collections::{HashMap, VecDeque};

use crate::base::{circumcentre, triangle_fans};
use crate::error::{Error, Result};
use crate::mesh::{CellScalarField, CentreRule, Geometry, PolygonalSurfaceMesh, TransportedMesh};
use crate::operators::cell_centre_gradient_volume_weighted;
use crate::scalar::Real;
use crate::sphere::{central_angle, exp_map_raw};
use crate::vector::Vec3;

/// Circumcentres of adjacent triangles closer than this (radians) are one
/// Voronoi vertex.
const MERGE_ANGLE: f64 = 1e-12;

#[inline]
fn arr(p: Vec3<f64>) -> robust::Coord3D<f64> {
    robust::Coord3D { x: p.x, y: p.y, z: p.z }
}

/// Positive when `d` lies on the inner side of the counter-clockwise (seen
/// from outside) triangle `abc`.
#[inline]
fn orient(a: Vec3<f64>, b: Vec3<f64>, c: Vec3<f64>, d: Vec3<f64>) -> f64 {
    robust::orient3d(arr(a), arr(b), arr(c), arr(d))
}

struct HullFace {
    v: [usize; 3],
    alive: bool,
    conflicts: Vec<usize>,
}

/// Outward-oriented triangles of the convex hull of `points`, every point
/// being a hull vertex (true for distinct points on a sphere).
pub fn convex_hull_triangles(points: &[Vec3<f64>]) -> Result<Vec<[usize; 3]>> {
    let n = points.len();
    if n < 4 {
        return Err(Error::Hull(format!("need at least 4 points, got {n}")));
    }
    let p = |i: usize| points[i];
    // initial tetrahedron from well-separated, non-coplanar points
    let i0 = 0;
    let i1 = (1..n)
        .max_by(|&a, &b| (p(a) - p(i0)).norm().total_cmp(&(p(b) - p(i0)).norm()))
        .unwrap();
    let i2 = (0..n)
        .filter(|&k| k != i0 && k != i1)
        .max_by(|&a, &b| {
            let area = |k: usize| (p(i1) - p(i0)).cross(p(k) - p(i0)).norm();
            area(a).total_cmp(&area(b))
        })
        .unwrap();
    let i3 = (0..n)
        .filter(|&k| k != i0 && k != i1 && k != i2)
        .max_by(|&a, &b| orient(p(i0), p(i1), p(i2), p(a)).abs().total_cmp(&orient(p(i0), p(i1), p(i2), p(b)).abs()))
        .unwrap();
    if orient(p(i0), p(i1), p(i2), p(i3)) == 0.0 {
        return Err(Error::Hull("all points are coplanar".into()));
    }
    let mut faces: Vec<HullFace> = Vec::new();
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    let simplex = [i0, i1, i2, i3];
    for skip in 0..4 {
        let mut tri: Vec<usize> = simplex.iter().copied().enumerate().filter(|&(k, _)| k != skip).map(|(_, v)| v).collect();
        if orient(p(tri[0]), p(tri[1]), p(tri[2]), p(simplex[skip])) < 0.0 {
            tri.swap(1, 2);
        }
        let id = faces.len();
        for k in 0..3 {
            edges.insert((tri[k], tri[(k + 1) % 3]), id);
        }
        faces.push(HullFace {
            v: [tri[0], tri[1], tri[2]],
            alive: true,
            conflicts: Vec::new(),
        });
    }

    let sees = |faces: &[HullFace], f: usize, q: usize| {
        let v = faces[f].v;
        orient(p(v[0]), p(v[1]), p(v[2]), p(q)) < 0.0
    };

    let mut point_face = vec![usize::MAX; n];
    for q in 0..n {
        if simplex.contains(&q) {
            continue;
        }
        match (0..4).find(|&f| sees(&faces, f, q)) {
            Some(f) => {
                point_face[q] = f;
                faces[f].conflicts.push(q);
            }
            None => return Err(Error::Hull(format!("point {q} is not a hull vertex"))),
        }
    }

    let mut visible_mark: Vec<bool> = vec![false; 4];
    for q in 0..n {
        if simplex.contains(&q) {
            continue;
        }
        let start = point_face[q];
        if start == usize::MAX || !faces[start].alive {
            return Err(Error::Hull(format!("lost conflict for point {q}")));
        }
        // visible region by flood fill from the conflict face
        let mut visible = vec![start];
        visible_mark[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(f) = queue.pop_front() {
            let v = faces[f].v;
            for k in 0..3 {
                let g = edges[&(v[(k + 1) % 3], v[k])];
                if !visible_mark[g] && sees(&faces, g, q) {
                    visible_mark[g] = true;
                    visible.push(g);
                    queue.push_back(g);
                }
            }
        }
        let mut horizon = Vec::new();
        for &f in &visible {
            let v = faces[f].v;
            for k in 0..3 {
                let (a, b) = (v[k], v[(k + 1) % 3]);
                if !visible_mark[edges[&(b, a)]] {
                    horizon.push((a, b));
                }
            }
        }
        let mut orphans = Vec::new();
        for &f in &visible {
            faces[f].alive = false;
            orphans.append(&mut faces[f].conflicts);
            let v = faces[f].v;
            for k in 0..3 {
                let key = (v[k], v[(k + 1) % 3]);
                if edges.get(&key) == Some(&f) {
                    edges.remove(&key);
                }
            }
        }
        let first_new = faces.len();
        for &(a, b) in &horizon {
            let id = faces.len();
            for e in [(a, b), (b, q), (q, a)] {
                edges.insert(e, id);
            }
            faces.push(HullFace {
                v: [a, b, q],
                alive: true,
                conflicts: Vec::new(),
            });
            visible_mark.push(false);
        }
        for &f in &visible {
            visible_mark[f] = false;
        }
        for o in orphans {
            if o == q {
                continue;
            }
            let target = (first_new..faces.len())
                .find(|&f| sees(&faces, f, o))
                .or_else(|| (0..faces.len()).find(|&f| faces[f].alive && sees(&faces, f, o)));
            match target {
                Some(f) => {
                    point_face[o] = f;
                    faces[f].conflicts.push(o);
                }
                None => return Err(Error::Hull(format!("point {o} fell inside the hull"))),
            }
        }
    }
    Ok(faces.into_iter().filter(|f| f.alive).map(|f| f.v).collect())
}

/// Generator pairs that coincide; the lexicographic sort puts exact and
/// near-exact duplicates next to each other.
fn find_duplicate(units: &[Vec3<f64>]) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..units.len()).collect();
    order.sort_by(|&a, &b| {
        let (p, q) = (units[a], units[b]);
        p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)).then(p.z.total_cmp(&q.z))
    });
    order
        .windows(2)
        .find(|w| central_angle(units[w[0]], units[w[1]]) <= MERGE_ANGLE)
        .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
}

#[derive(Debug, Clone)]
pub struct VoronoiResult<T> {
    pub mesh: PolygonalSurfaceMesh<T>,
    /// Cell of each generator (the identity: cell `i` belongs to generator `i`).
    pub generator_to_cell: Vec<usize>,
    pub connectivity_changed: bool,
    /// `V_new − V_old` per cell; empty when there is no input mesh.
    pub area_change: Vec<T>,
    /// Delaunay triangles that were merged into a neighbour's vertex.
    pub merged_vertices: usize,
}

impl<T: Real> VoronoiResult<T> {
    /// `max |V_new − V_old| / V_old`
    pub fn max_relative_area_change(&self, old_volumes: &[T]) -> T {
        self.area_change
            .iter()
            .zip(old_volumes)
            .map(|(&d, &v)| (d / v).abs())
            .fold(T::zero(), T::max)
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

/// Spherical Voronoi mesh of `generators` on a sphere of `radius`; the cell
/// centres are the generators, so the mesh is orthogonal.
pub fn spherical_voronoi<T: Real>(generators: &[Vec3<T>], radius: T) -> Result<(PolygonalSurfaceMesh<T>, usize)> {
    let units: Vec<Vec3<f64>> = generators.iter().map(|g| g.cast::<f64>().normalized()).collect();
    if let Some((a, b)) = find_duplicate(&units) {
        return Err(Error::DuplicateGenerators(a, b));
    }
    let tris = convex_hull_triangles(&units)?;
    let centres: Vec<Vec3<f64>> = tris
        .iter()
        .map(|t| circumcentre(units[t[0]], units[t[1]], units[t[2]]))
        .collect();

    // cocircular generators give coincident circumcentres on adjacent triangles
    let mut uf = UnionFind((0..tris.len()).collect());
    let mut by_edge = HashMap::with_capacity(3 * tris.len());
    for (t, tri) in tris.iter().enumerate() {
        for k in 0..3 {
            by_edge.insert((tri[k], tri[(k + 1) % 3]), t);
        }
    }
    for (t, tri) in tris.iter().enumerate() {
        for k in 0..3 {
            let u = by_edge[&(tri[(k + 1) % 3], tri[k])];
            if central_angle(centres[t], centres[u]) <= MERGE_ANGLE {
                uf.union(t, u);
            }
        }
    }
    let mut vertex_of = vec![usize::MAX; tris.len()];
    let mut points = Vec::new();
    for t in 0..tris.len() {
        let r = uf.find(t);
        if vertex_of[r] == usize::MAX {
            vertex_of[r] = points.len();
            let c = centres[r];
            points.push(Vec3::new(T::lit(c.x), T::lit(c.y), T::lit(c.z)) * radius);
        }
        vertex_of[t] = vertex_of[r];
    }
    let merged = tris.len() - points.len();

    let fans = triangle_fans(units.len(), &tris)?;
    let cells: Vec<Vec<usize>> = fans
        .into_iter()
        .map(|fan| {
            let mut poly: Vec<usize> = fan.iter().map(|&t| vertex_of[t]).collect();
            poly.dedup();
            while poly.len() > 1 && poly.first() == poly.last() {
                poly.pop();
            }
            poly
        })
        .collect();
    if let Some(g) = cells.iter().position(|c| c.len() < 3) {
        return Err(Error::Hull(format!("generator {g} has a degenerate Voronoi cell")));
    }
    let centres_fixed = units
        .iter()
        .map(|u| Vec3::new(T::lit(u.x), T::lit(u.y), T::lit(u.z)) * radius)
        .collect();
    let mesh = PolygonalSurfaceMesh::new(Geometry::Sphere { radius }, points, cells, CentreRule::Fixed(centres_fixed))?;
    Ok((mesh, merged))
}

fn result_against<T: Real>(
    reference: &PolygonalSurfaceMesh<T>,
    mesh: PolygonalSurfaceMesh<T>,
    merged: usize,
) -> VoronoiResult<T> {
    let connectivity_changed = mesh.topology().adjacency_pairs() != reference.topology().adjacency_pairs();
    let area_change = mesh
        .volumes()
        .iter()
        .zip(reference.volumes())
        .map(|(&a, &b)| a - b)
        .collect();
    VoronoiResult {
        generator_to_cell: (0..mesh.num_cells()).collect(),
        mesh,
        connectivity_changed,
        area_change,
        merged_vertices: merged,
    }
}

/// Voronoi tessellation generated by the centroids of a transported mesh.
pub fn voronoi_of_cell_centres<T: Real>(transported: &TransportedMesh<T>) -> Result<VoronoiResult<T>> {
    let mesh = transported.mesh();
    let Geometry::Sphere { radius } = *mesh.geometry() else {
        return Err(Error::UnsupportedGeometry("Voronoi post-processing is spherical only"));
    };
    let (voronoi, merged) = spherical_voronoi(transported.centroids(), radius)?;
    Ok(result_against(mesh, voronoi, merged))
}

/// Moves the generators of a Voronoi mesh along great circles by the
/// volume-weighted cell-centre gradient of `phi`, then re-tessellates.
pub fn move_generators_and_retessellate<T: Real>(
    mesh: &PolygonalSurfaceMesh<T>,
    phi: &CellScalarField<T>,
) -> Result<VoronoiResult<T>> {
    let Geometry::Sphere { radius } = *mesh.geometry() else {
        return Err(Error::UnsupportedGeometry("Voronoi post-processing is spherical only"));
    };
    let grad = cell_centre_gradient_volume_weighted(phi, mesh)?;
    let moved: Vec<Vec3<T>> = mesh
        .centres()
        .iter()
        .zip(&grad)
        .map(|(&c, &g)| exp_map_raw(c, g, radius))
        .collect();
    let (voronoi, merged) = spherical_voronoi(&moved, radius)?;
    Ok(result_against(mesh, voronoi, merged))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConvexityReport {
    /// Cells with a reflex corner.
    pub non_convex: Vec<usize>,
    /// Cells with non-positive (inverted) area.
    pub tangled: Vec<usize>,
}

impl ConvexityReport {
    pub fn is_clean(&self) -> bool {
        self.non_convex.is_empty() && self.tangled.is_empty()
    }

    /// Sorted union of both lists.
    pub fn flagged(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.non_convex.iter().chain(&self.tangled).copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// Corner test in the tangent plane at each cell centroid: a cell is
/// non-convex when consecutive edge cross products change sign.
pub fn convexity_report<T: Real>(mesh: &PolygonalSurfaceMesh<T>) -> ConvexityReport {
    let geometry = mesh.geometry();
    let mut report = ConvexityReport::default();
    for c in 0..mesh.num_cells() {
        if !(mesh.volumes()[c] > T::zero()) {
            report.tangled.push(c);
            continue;
        }
        let poly = mesh.cell_polygon(c);
        let n = geometry.normal(mesh.cached().cell_centroids[c]);
        let k = poly.len();
        let flat: Vec<Vec3<T>> = if geometry.is_sphere() {
            poly.iter().map(|p| p.reject(n)).collect()
        } else {
            poly
        };
        let reflex = (0..k).any(|i| {
            let e1 = flat[(i + 1) % k] - flat[i];
            let e2 = flat[(i + 2) % k] - flat[(i + 1) % k];
            e1.cross(e2).dot(n) < T::zero()
        });
        if reflex {
            report.non_convex.push(c);
        }
    }
    report
}

/// Non-convex and tangled cells, sorted.
pub fn convexity_scan<T: Real>(mesh: &PolygonalSurfaceMesh<T>) -> Vec<usize> {
    convexity_report(mesh).flagged()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::{build_hex_icosahedron, build_square_grid, icosahedral_triangulation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_units(n: usize, seed: u64) -> Vec<Vec3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z: f64 = rng.gen_range(-1.0..1.0);
                let t: f64 = rng.gen_range(0.0..2.0 * PI);
                let s = (1.0 - z * z).sqrt();
                Vec3::new(s * t.cos(), s * t.sin(), z)
            })
            .collect()
    }

    #[test]
    fn hull_of_random_points_is_closed_and_delaunay() {
        let pts = random_units(300, 7);
        let tris = convex_hull_triangles(&pts).unwrap();
        assert_eq!(tris.len(), 2 * pts.len() - 4);
        // empty circumcircle: no generator lies strictly outside any face plane
        for t in &tris {
            for (q, &p) in pts.iter().enumerate() {
                if !t.contains(&q) {
                    assert!(orient(pts[t[0]], pts[t[1]], pts[t[2]], p) >= 0.0);
                }
            }
        }
    }

    #[test]
    fn octahedron_has_cocircular_faces() {
        let pts = vec![
            Vec3::unit_x(),
            -Vec3::unit_x(),
            Vec3::unit_y(),
            -Vec3::unit_y(),
            Vec3::unit_z(),
            -Vec3::unit_z(),
        ];
        let (mesh, merged) = spherical_voronoi(&pts, 1.0).unwrap();
        assert_eq!(merged, 0);
        assert_eq!(mesh.num_cells(), 6);
        assert!(mesh.topology().cell_vertices.iter().all(|c| c.len() == 4));
        // a cube's eight vertices are cocircular in fours: Voronoi cells are triangles
        let s = 1.0 / 3f64.sqrt();
        let cube: Vec<Vec3<f64>> = (0..8)
            .map(|k| Vec3::new(if k & 1 == 0 { s } else { -s }, if k & 2 == 0 { s } else { -s }, if k & 4 == 0 { s } else { -s }))
            .collect();
        let (mesh, merged) = spherical_voronoi(&cube, 1.0).unwrap();
        assert_eq!(merged, 6);
        assert_eq!(mesh.num_vertices(), 6);
        assert!(mesh.topology().cell_vertices.iter().all(|c| c.len() == 3));
        assert!(((mesh.total_volume() - 4.0 * PI) / (4.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn duplicate_generators_are_rejected() {
        let mut pts = random_units(20, 1);
        pts[13] = pts[4];
        assert!(matches!(spherical_voronoi(&pts, 1.0), Err(Error::DuplicateGenerators(4, 13))));
    }

    #[test]
    fn voronoi_of_icosahedral_vertices_is_the_base_mesh() {
        let base = build_hex_icosahedron::<f64>(3, 2.0).unwrap();
        let (gens, _) = icosahedral_triangulation::<f64>(3);
        let scaled: Vec<_> = gens.iter().map(|&g| g * 2.0).collect();
        let (mesh, _) = spherical_voronoi(&scaled, 2.0).unwrap();
        assert_eq!(mesh.topology().adjacency_pairs(), base.topology().adjacency_pairs());
        for (a, b) in mesh.volumes().iter().zip(base.volumes()) {
            assert!((a - b).abs() < 1e-12 * b);
        }
        assert!(convexity_scan(&mesh).is_empty());
    }

    #[test]
    fn voronoi_partitions_and_is_convex() {
        for seed in 0..3 {
            let pts = random_units(500, seed);
            let (mesh, _) = spherical_voronoi(&pts, 6.371).unwrap();
            let area = 4.0 * PI * 6.371 * 6.371;
            assert!(((mesh.total_volume() - area) / area).abs() < 1e-10);
            assert!(convexity_report(&mesh).is_clean());
        }
    }

    #[test]
    fn retessellate_with_zero_potential_is_identity() {
        let base = build_hex_icosahedron::<f64>(2, 1.0).unwrap();
        let r = move_generators_and_retessellate(&base, &CellScalarField::zeros(&base)).unwrap();
        assert!(!r.connectivity_changed);
        let t = TransportedMesh::identity(&base).unwrap();
        let v = voronoi_of_cell_centres(&t).unwrap();
        assert!(!v.connectivity_changed);
        let change = v.max_relative_area_change(base.volumes());
        assert!(change > 0.0 && change < 0.05, "{change}");
    }

    #[test]
    fn strong_distortion_changes_connectivity() {
        let base = build_hex_icosahedron::<f64>(2, 1.0).unwrap();
        // grid-scale noise in φ jitters generators by a sizeable fraction of
        // the spacing, forcing edge swaps
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = CellScalarField::from_fn(&base, |_| rng.gen_range(-0.03..0.03));
        let r = move_generators_and_retessellate(&base, &phi).unwrap();
        assert!(r.connectivity_changed);
        assert!(convexity_scan(&r.mesh).is_empty());
    }

    #[test]
    fn base_meshes_are_convex_and_dart_is_not() {
        assert!(convexity_scan(&build_square_grid::<f64>(6).unwrap()).is_empty());
        assert!(convexity_scan(&build_hex_icosahedron::<f64>(3, 1.0).unwrap()).is_empty());
        // push the shared corner of four squares deep into its upper-right cell
        let grid = build_square_grid::<f64>(4).unwrap();
        let mut pts = grid.points().to_vec();
        let v = 5;
        pts[v] = pts[v] + Vec3::planar(0.4, 0.4);
        let dart = grid.moved(pts).unwrap();
        let report = convexity_report(&dart);
        assert_eq!(report.non_convex, vec![5]);
        assert!(report.tangled.is_empty());
        // pushing it through the opposite corner inverts the cell
        let mut pts = grid.points().to_vec();
        pts[v] = pts[v] + Vec3::planar(0.7, 0.7);
        assert!(convexity_report(&grid.moved(pts).unwrap()).tangled.contains(&5));
    }
}
