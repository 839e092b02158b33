//! Computational meshes: periodic square grids and hexagonal icosahedra.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{CentreRule, Geometry, PolygonalSurfaceMesh};
use crate::scalar::Real;
use crate::vector::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseMeshSpec {
    SquareGrid { n_per_side: usize },
    HexIcosahedron { refinement: usize, radius: f64 },
}

impl BaseMeshSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BaseMeshSpec::SquareGrid { n_per_side } if n_per_side < 4 => Err(Error::InvalidConfig(format!(
                "square grid needs at least 4 cells per side, got {n_per_side}"
            ))),
            BaseMeshSpec::HexIcosahedron { refinement, .. } if !(1..=8).contains(&refinement) => Err(
                Error::InvalidConfig(format!("icosahedral refinement must be in 1..=8, got {refinement}")),
            ),
            BaseMeshSpec::HexIcosahedron { radius, .. } if !(radius > 0.0 && radius.is_finite()) => {
                Err(Error::InvalidConfig(format!("sphere radius must be positive, got {radius}")))
            }
            _ => Ok(()),
        }
    }

    pub fn build<T: Real>(&self) -> Result<PolygonalSurfaceMesh<T>> {
        self.validate()?;
        match *self {
            BaseMeshSpec::SquareGrid { n_per_side } => build_square_grid(n_per_side),
            BaseMeshSpec::HexIcosahedron { refinement, radius } => build_hex_icosahedron(refinement, T::lit(radius)),
        }
    }
}

/// `n × n` uniform squares tiling the periodic square `[-1, 1]²`.
///
/// Cell `(i, j)` has id `j·n + i` and lower-left vertex `(i, j)`.
pub fn build_square_grid<T: Real>(n: usize) -> Result<PolygonalSurfaceMesh<T>> {
    if n < 4 {
        return Err(Error::InvalidConfig(format!(
            "square grid needs at least 4 cells per side, got {n}"
        )));
    }
    let h = T::lit(2.0) / T::from_count(n);
    let points = (0..n * n)
        .map(|k| {
            Vec3::planar(
                -T::one() + h * T::from_count(k % n),
                -T::one() + h * T::from_count(k / n),
            )
        })
        .collect();
    let v = |i: usize, j: usize| (j % n) * n + (i % n);
    let cells = (0..n * n)
        .map(|c| {
            let (i, j) = (c % n, c / n);
            vec![v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)]
        })
        .collect();
    PolygonalSurfaceMesh::new(
        Geometry::PlanePeriodic {
            half_width: T::one(),
            half_height: T::one(),
        },
        points,
        cells,
        CentreRule::Centroid,
    )
}

/// Icosahedral triangulation bisected `n` times and projected to the unit
/// sphere. Returns unit vertex positions and counter-clockwise triangles.
///
/// The first 12 vertices are the icosahedron's, with vertex 0 at the north
/// pole and vertex 1 at longitude 0.
pub fn icosahedral_triangulation<T: Real>(n: usize) -> (Vec<Vec3<T>>, Vec<[usize; 3]>) {
    let z = T::one() / T::lit(5.0).sqrt();
    let r = T::lit(2.0) * z;
    let mut verts = vec![Vec3::unit_z()];
    for k in 0..5 {
        let lon = T::lit(72.0).to_radians() * T::from_count(k);
        verts.push(Vec3::new(r * lon.cos(), r * lon.sin(), z));
    }
    for k in 0..5 {
        let lon = T::lit(72.0).to_radians() * T::from_count(k) + T::lit(36.0).to_radians();
        verts.push(Vec3::new(r * lon.cos(), r * lon.sin(), -z));
    }
    verts.push(-Vec3::unit_z());

    let mut tris = Vec::with_capacity(20);
    for k in 0..5 {
        let (u0, u1) = (1 + k, 1 + (k + 1) % 5);
        let (l0, l1) = (6 + k, 6 + (k + 1) % 5);
        tris.push([0, u0, u1]);
        tris.push([u0, l0, u1]);
        tris.push([u1, l0, l1]);
        tris.push([11, l1, l0]);
    }

    for _ in 0..n {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3<T>>| -> usize {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push((verts[a] + verts[b]).normalized());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(tris.len() * 4);
        for &[a, b, c] in &tris {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        tris = next;
    }
    for t in &mut tris {
        let (a, b, c) = (verts[t[0]], verts[t[1]], verts[t[2]]);
        if (b - a).cross(c - a).dot(a) < T::zero() {
            t.swap(1, 2);
        }
    }
    (verts, tris)
}

/// Circumcentre direction of a counter-clockwise spherical triangle.
#[inline]
pub(crate) fn circumcentre<T: Real>(a: Vec3<T>, b: Vec3<T>, c: Vec3<T>) -> Vec3<T> {
    (b - a).cross(c - a).normalized()
}

/// Orders the triangles around each vertex counter-clockwise.
pub(crate) fn triangle_fans(n_vertices: usize, tris: &[[usize; 3]]) -> Result<Vec<Vec<usize>>> {
    // for vertex g and triangle (g, b, c) in CCW order, the next triangle round g
    // is the one containing the directed edge (g, c)
    let mut by_edge: HashMap<(usize, usize), usize> = HashMap::with_capacity(tris.len() * 3);
    let mut first = vec![usize::MAX; n_vertices];
    for (t, tri) in tris.iter().enumerate() {
        for k in 0..3 {
            by_edge.insert((tri[k], tri[(k + 1) % 3]), t);
            if first[tri[k]] == usize::MAX {
                first[tri[k]] = t;
            }
        }
    }
    let mut fans = Vec::with_capacity(n_vertices);
    for g in 0..n_vertices {
        let start = first[g];
        if start == usize::MAX {
            return Err(Error::InvalidMesh(format!("triangulation vertex {g} is isolated")));
        }
        let mut fan = vec![start];
        let mut t = start;
        loop {
            let tri = tris[t];
            let k = tri.iter().position(|&v| v == g).expect("vertex in its triangle");
            let prev = tri[(k + 2) % 3];
            // the triangle with directed edge (g, prev) follows in CCW order
            t = *by_edge
                .get(&(g, prev))
                .ok_or_else(|| Error::InvalidMesh(format!("triangulation is open at vertex {g}")))?;
            if t == start {
                break;
            }
            fan.push(t);
            if fan.len() > tris.len() {
                return Err(Error::InvalidMesh(format!("non-manifold fan at vertex {g}")));
            }
        }
        fans.push(fan);
    }
    Ok(fans)
}

/// Hexagonal icosahedron: the dual of the `n`-times bisected icosahedral
/// triangulation, with polygon vertices at triangle circumcentres. Cell `i` is
/// centred on triangulation vertex `i`; cells `0..12` are the pentagons. The
/// triangulation vertices are kept as the cell centres, so the mesh is
/// orthogonal.
pub fn build_hex_icosahedron<T: Real>(n: usize, radius: T) -> Result<PolygonalSurfaceMesh<T>> {
    if n < 1 {
        return Err(Error::InvalidConfig("icosahedral refinement must be at least 1".into()));
    }
    let (generators, tris) = icosahedral_triangulation::<T>(n);
    dual_mesh(&generators, &tris, radius)
}

/// Dual polygon mesh of a closed spherical triangulation of unit vectors.
pub(crate) fn dual_mesh<T: Real>(
    generators: &[Vec3<T>],
    tris: &[[usize; 3]],
    radius: T,
) -> Result<PolygonalSurfaceMesh<T>> {
    let points: Vec<Vec3<T>> = tris
        .iter()
        .map(|t| circumcentre(generators[t[0]], generators[t[1]], generators[t[2]]) * radius)
        .collect();
    let cells = triangle_fans(generators.len(), tris)?;
    PolygonalSurfaceMesh::new(
        Geometry::Sphere { radius },
        points,
        cells,
        CentreRule::Fixed(generators.iter().map(|&g| g * radius).collect()),
    )
}
