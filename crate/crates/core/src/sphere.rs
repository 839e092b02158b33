//! Geometric primitives on a sphere of radius `a` centred at the origin.
//!
//! Angles are computed with `atan2` forms wherever a dot-product `acos` would
//! lose precision near 0 or π.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vector::Vec3;

/// A point on a sphere; the position is renormalised to the radius on
/// construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint<T> {
    position: Vec3<T>,
    radius: T,
}

impl<T: Real> SpherePoint<T> {
    /// Projects `position` radially onto the sphere of radius `radius`.
    pub fn new(position: Vec3<T>, radius: T) -> Self {
        Self {
            position: position.normalized() * radius,
            radius,
        }
    }

    /// Point from latitude/longitude in degrees.
    pub fn from_lat_lon_deg(lat: T, lon: T, radius: T) -> Self {
        let (lat, lon) = (lat.to_radians(), lon.to_radians());
        Self::new(
            Vec3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()),
            radius,
        )
    }

    #[inline]
    pub fn position(&self) -> Vec3<T> {
        self.position
    }

    #[inline]
    pub fn radius(&self) -> T {
        self.radius
    }

    #[inline]
    pub fn unit(&self) -> Vec3<T> {
        self.position / self.radius
    }

    /// Latitude and longitude in degrees, longitude in (−180, 180].
    pub fn lat_lon_deg(&self) -> (T, T) {
        lat_lon_deg(self.position)
    }
}

/// Latitude and longitude (degrees) of an arbitrary non-zero Cartesian vector.
pub fn lat_lon_deg<T: Real>(p: Vec3<T>) -> (T, T) {
    let horizontal = (p.x * p.x + p.y * p.y).sqrt();
    (p.z.atan2(horizontal).to_degrees(), p.y.atan2(p.x).to_degrees())
}

/// A displacement in the tangent plane at `base`; its magnitude is the
/// geodesic length of the displacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVector<T> {
    pub base: SpherePoint<T>,
    pub direction: Vec3<T>,
}

impl<T: Real> TangentVector<T> {
    /// Builds a tangent vector, removing any radial component of `direction`.
    pub fn new(base: SpherePoint<T>, direction: Vec3<T>) -> Self {
        let n = base.unit();
        Self {
            base,
            direction: direction.reject(n),
        }
    }
}

/// Central angle between two directions, robust at all separations.
#[inline]
pub fn central_angle<T: Real>(p: Vec3<T>, q: Vec3<T>) -> T {
    p.cross(q).norm().atan2(p.dot(q))
}

/// Great-circle distance `a·θ`.
pub fn geodesic_distance<T: Real>(p: &SpherePoint<T>, q: &SpherePoint<T>) -> T {
    p.radius * central_angle(p.position, q.position)
}

/// Signed area of the spherical triangle on the unit sphere spanned by the unit
/// vectors `a`, `b`, `c`: positive when counter-clockwise seen from outside.
///
/// Uses the Van Oosterom–Strackee form `tan(E/2) = a·(b×c) / (1 + a·b + b·c + c·a)`
/// of the spherical excess, which equals `A + B + C − π` for positively oriented
/// triangles.
#[inline]
pub fn unit_triangle_excess<T: Real>(a: Vec3<T>, b: Vec3<T>, c: Vec3<T>) -> T {
    let triple = a.dot(b.cross(c));
    let denom = T::one() + a.dot(b) + b.dot(c) + c.dot(a);
    T::lit(2.0) * triple.atan2(denom)
}

/// Area of a spherical triangle (Girard excess scaled by `a²`), signed by
/// orientation. Coincident or great-circle-collinear vertices give 0.
pub fn spherical_triangle_area<T: Real>(p: &SpherePoint<T>, q: &SpherePoint<T>, r: &SpherePoint<T>) -> T {
    let a = p.radius;
    a * a * unit_triangle_excess(p.unit(), q.unit(), r.unit())
}

/// Area of a spherical polygon by fan triangulation about `interior_hint`.
pub fn spherical_polygon_area<T: Real>(
    vertices: &[SpherePoint<T>],
    interior_hint: &SpherePoint<T>,
) -> Result<T> {
    if vertices.len() < 3 {
        return Err(Error::InvalidPolygon(vertices.len()));
    }
    let a = interior_hint.radius;
    let units: Vec<Vec3<T>> = vertices.iter().map(SpherePoint::unit).collect();
    Ok(a * a * fan_excess(&units, interior_hint.unit()))
}

/// Sum of signed fan-triangle excesses on the unit sphere.
pub(crate) fn fan_excess<T: Real>(units: &[Vec3<T>], hint: Vec3<T>) -> T {
    let n = units.len();
    (0..n)
        .map(|k| unit_triangle_excess(hint, units[k], units[(k + 1) % n]))
        .sum()
}

/// Rotates `v.base` along the great circle in the direction of `v.direction`
/// through the angle `|direction| / a`.
pub fn exp_map<T: Real>(v: &TangentVector<T>) -> SpherePoint<T> {
    let a = v.base.radius;
    let len = v.direction.norm();
    if len == T::zero() {
        return v.base;
    }
    let theta = len / a;
    let p = v.base.position;
    let t = v.direction / len;
    SpherePoint::new(p * theta.cos() + t * (a * theta.sin()), a)
}

/// Exponential map on raw vectors: `position` on the sphere of radius `a`,
/// `direction` tangent at `position`.
pub(crate) fn exp_map_raw<T: Real>(position: Vec3<T>, direction: Vec3<T>, a: T) -> Vec3<T> {
    let len = direction.norm();
    if len == T::zero() {
        return position;
    }
    let theta = len / a;
    let t = direction / len;
    (position * theta.cos() + t * (a * theta.sin())).normalized() * a
}

/// Inverse of [`exp_map`]: the tangent vector at `base` whose exponential
/// map reaches `p`. Zero at the antipode, where the direction is undefined.
pub fn log_map<T: Real>(base: &SpherePoint<T>, p: &SpherePoint<T>) -> TangentVector<T> {
    TangentVector {
        base: *base,
        direction: log_map_raw(base.position, p.position, base.radius),
    }
}

pub(crate) fn log_map_raw<T: Real>(base: Vec3<T>, p: Vec3<T>, a: T) -> Vec3<T> {
    let n = base.normalized();
    let u = p.normalized();
    let t = u.reject(n);
    let s = t.norm();
    if s == T::zero() {
        return Vec3::zero();
    }
    t * (a * s.atan2(n.dot(u)) / s)
}

/// Orthonormal basis `(e1, e2)` of the tangent plane at `p`, with
/// `e1 ∥ p × ẑ` away from the poles and `e1 ∥ p × x̂` within them.
pub fn tangent_basis<T: Real>(p: &SpherePoint<T>) -> (Vec3<T>, Vec3<T>) {
    tangent_basis_unit(p.unit())
}

pub(crate) fn tangent_basis_unit<T: Real>(n: Vec3<T>) -> (Vec3<T>, Vec3<T>) {
    let axis = if n.z.abs() > T::lit(0.99) {
        Vec3::unit_x()
    } else {
        Vec3::unit_z()
    };
    let e1 = n.cross(axis).normalized();
    let e2 = n.cross(e1);
    (e1, e2)
}
