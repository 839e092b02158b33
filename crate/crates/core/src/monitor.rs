//! Monitor functions: the prescribed mesh density.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{CellScalarField, Geometry, PolygonalSurfaceMesh};
use crate::scalar::Real;
use crate::sphere::{central_angle, lat_lon_deg};
use crate::vector::Vec3;

/// Latitude/longitude samples of a positive field `p` on a regular grid.
///
/// Text form: a header line `nlat nlon lat0 lon0 dlat dlon` (degrees) then
/// `nlat·nlon` values, row-major with longitude varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatLonGrid {
    pub nlat: usize,
    pub nlon: usize,
    pub lat0: f64,
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    pub values: Vec<f64>,
}

impl LatLonGrid {
    pub fn new(nlat: usize, nlon: usize, lat0: f64, lon0: f64, dlat: f64, dlon: f64, values: Vec<f64>) -> Result<Self> {
        let grid = Self {
            nlat,
            nlon,
            lat0,
            lon0,
            dlat,
            dlon,
            values,
        };
        grid.validate()?;
        Ok(grid)
    }

    fn validate(&self) -> Result<()> {
        if self.nlat == 0 || self.nlon == 0 {
            return Err(Error::InvalidMonitor("empty lat-lon grid".into()));
        }
        if self.values.len() != self.nlat * self.nlon {
            return Err(Error::InvalidMonitor(format!(
                "lat-lon grid expects {} values, found {}",
                self.nlat * self.nlon,
                self.values.len()
            )));
        }
        if !(self.dlat != 0.0 && self.dlat.is_finite() && self.dlon > 0.0 && self.dlon.is_finite()) {
            return Err(Error::InvalidMonitor("grid spacing must be finite and non-zero".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidMonitor(format!("grid value {v} is not a finite non-negative number")));
        }
        Ok(())
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 6 {
            return Err(parse_err(hl + 1, "header must be `nlat nlon lat0 lon0 dlat dlon`".into()));
        }
        let count = |s: &str| s.parse::<usize>().map_err(|e| parse_err(hl + 1, format!("{s}: {e}")));
        let real = |s: &str| s.parse::<f64>().map_err(|e| parse_err(hl + 1, format!("{s}: {e}")));
        let (nlat, nlon) = (count(head[0])?, count(head[1])?);
        let (lat0, lon0, dlat, dlon) = (real(head[2])?, real(head[3])?, real(head[4])?, real(head[5])?);
        let mut values = Vec::with_capacity(nlat * nlon);
        for (l, line) in lines {
            for tok in line.split_whitespace() {
                values.push(tok.parse::<f64>().map_err(|e| parse_err(l + 1, format!("{tok}: {e}")))?);
            }
        }
        Self::new(nlat, nlon, lat0, lon0, dlat, dlon, values).map_err(|e| parse_err(0, e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{} {} {} {} {} {}\n",
            self.nlat, self.nlon, self.lat0, self.lon0, self.dlat, self.dlon
        );
        for row in self.values.chunks(self.nlon) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear interpolation; periodic in longitude, clamped in latitude.
    pub fn sample(&self, lat_deg: f64, lon_deg: f64) -> f64 {
        let t = ((lat_deg - self.lat0) / self.dlat).clamp(0.0, (self.nlat - 1) as f64);
        let i0 = (t.floor() as usize).min(self.nlat - 1);
        let i1 = (i0 + 1).min(self.nlat - 1);
        let ft = t - i0 as f64;
        let s = ((lon_deg - self.lon0) / self.dlon).rem_euclid(self.nlon as f64);
        let j0 = (s.floor() as usize) % self.nlon;
        let j1 = (j0 + 1) % self.nlon;
        let fs = s - s.floor();
        let at = |i: usize, j: usize| self.values[i * self.nlon + j];
        let lo = at(i0, j0) * (1.0 - fs) + at(i0, j1) * fs;
        let hi = at(i1, j0) * (1.0 - fs) + at(i1, j1) * fs;
        lo * (1.0 - ft) + hi * ft
    }
}

/// Gridded data normalised as `m = (p + p_min) / (p_max + p_min)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GriddedMonitor {
    pub grid: LatLonGrid,
    pub p_min: f64,
    /// Defaults to the largest grid value.
    pub p_max: Option<f64>,
    pub smoothing: bool,
}

impl GriddedMonitor {
    pub fn p_max(&self) -> f64 {
        self.p_max.unwrap_or_else(|| self.grid.max_value())
    }

    /// Smallest value the normalisation can produce.
    pub fn floor(&self) -> f64 {
        self.p_min / (self.p_max() + self.p_min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MonitorSpec {
    /// `m ≡ value` on either geometry.
    Constant { value: f64 },
    /// `1 + α₁ sech²(α₂(R² − a²))` with `R` the periodic distance to `centre`.
    PlanarSech {
        a: f64,
        alpha1: f64,
        alpha2: f64,
        centre: [f64; 2],
    },
    /// `sqrt((tanh((β − θ)/α) + 1) / (2(1 + γ)) + γ)` with `θ` the angle to
    /// the centre.
    SphericalTanh {
        alpha: f64,
        beta: f64,
        gamma: f64,
        centre_lat_deg: f64,
        centre_lon_deg: f64,
    },
    Gridded(GriddedMonitor),
}

impl MonitorSpec {
    pub fn ring() -> Self {
        MonitorSpec::PlanarSech {
            a: 0.25,
            alpha1: 10.0,
            alpha2: 200.0,
            centre: [0.0, 0.0],
        }
    }

    pub fn bell() -> Self {
        MonitorSpec::PlanarSech {
            a: 0.0,
            alpha1: 50.0,
            alpha2: 100.0,
            centre: [0.0, 0.0],
        }
    }

    /// The `X<s>` family: spacing ratio `s`, refined around 30°N 90°E.
    pub fn spherical_x(s: f64) -> Self {
        MonitorSpec::SphericalTanh {
            alpha: std::f64::consts::PI / 20.0,
            beta: std::f64::consts::PI / 6.0,
            gamma: s.recip().powi(4),
            centre_lat_deg: 30.0,
            centre_lon_deg: 90.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |vals: &[f64]| vals.iter().all(|v| v.is_finite());
        match self {
            MonitorSpec::Constant { value } if !(*value > 0.0 && value.is_finite()) => {
                Err(Error::InvalidMonitor(format!("constant monitor must be positive, got {value}")))
            }
            MonitorSpec::PlanarSech { a, alpha1, alpha2, centre } => {
                if !finite(&[*a, *alpha1, *alpha2, centre[0], centre[1]]) {
                    Err(Error::InvalidMonitor("planar monitor parameters must be finite".into()))
                } else if *alpha1 <= -1.0 {
                    Err(Error::InvalidMonitor("alpha1 must exceed -1 to keep m positive".into()))
                } else {
                    Ok(())
                }
            }
            MonitorSpec::SphericalTanh {
                alpha,
                beta,
                gamma,
                centre_lat_deg,
                centre_lon_deg,
            } => {
                if !finite(&[*alpha, *beta, *gamma, *centre_lat_deg, *centre_lon_deg]) {
                    Err(Error::InvalidMonitor("spherical monitor parameters must be finite".into()))
                } else if *gamma <= 0.0 || *alpha == 0.0 {
                    Err(Error::InvalidMonitor("spherical monitor needs gamma > 0 and alpha != 0".into()))
                } else {
                    Ok(())
                }
            }
            MonitorSpec::Gridded(g) => {
                g.grid.validate()?;
                if !(g.p_min > 0.0 && g.p_min.is_finite()) {
                    return Err(Error::InvalidMonitor(format!("p_min must be positive, got {}", g.p_min)));
                }
                let p_max = g.p_max();
                if !(p_max.is_finite() && p_max + g.p_min > 0.0) {
                    return Err(Error::InvalidMonitor(format!("invalid p_max {p_max}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// True when `m` is the same everywhere, so the identity map is exact.
    pub fn is_uniform(&self) -> bool {
        match self {
            MonitorSpec::Constant { .. } => true,
            MonitorSpec::PlanarSech { alpha1, .. } => *alpha1 == 0.0,
            MonitorSpec::SphericalTanh { .. } => false,
            MonitorSpec::Gridded(g) => g.grid.values.iter().all(|&v| v == g.grid.values[0]),
        }
    }

    pub fn smoothing_enabled(&self) -> bool {
        matches!(self, MonitorSpec::Gridded(GriddedMonitor { smoothing: true, .. }))
    }

    /// Lower bound used to clamp smoothed values.
    pub fn positivity_floor(&self) -> f64 {
        match self {
            MonitorSpec::Gridded(g) => g.floor(),
            _ => f64::MIN_POSITIVE,
        }
    }

    pub fn supports(&self, geometry: &Geometry<impl Real>) -> bool {
        match self {
            MonitorSpec::Constant { .. } => true,
            MonitorSpec::PlanarSech { .. } => !geometry.is_sphere(),
            MonitorSpec::SphericalTanh { .. } | MonitorSpec::Gridded(_) => geometry.is_sphere(),
        }
    }

    /// Geodesic angle (sphere) or periodic distance (plane) from the
    /// refinement centre; zero for monitors without one.
    pub fn distance_to_centre<T: Real>(&self, geometry: &Geometry<T>, x: Vec3<T>) -> T {
        match self {
            MonitorSpec::PlanarSech { centre, .. } => {
                geometry.min_image(x - Vec3::planar(T::lit(centre[0]), T::lit(centre[1]))).norm()
            }
            MonitorSpec::SphericalTanh {
                centre_lat_deg,
                centre_lon_deg,
                ..
            } => central_angle(unit_from_lat_lon(*centre_lat_deg, *centre_lon_deg), x),
            _ => T::zero(),
        }
    }

    pub fn eval_planar<T: Real>(&self, geometry: &Geometry<T>, x: Vec3<T>) -> Result<T> {
        match self {
            MonitorSpec::PlanarSech { a, alpha1, alpha2, .. } => {
                let r = self.distance_to_centre(geometry, x);
                let arg = T::lit(*alpha2) * (r * r - T::lit(a * a));
                let sech = T::one() / arg.cosh();
                Ok(T::one() + T::lit(*alpha1) * sech * sech)
            }
            MonitorSpec::Constant { value } => Ok(T::lit(*value)),
            _ => Err(Error::UnsupportedGeometry("monitor is not defined on the plane")),
        }
    }

    pub fn eval_spherical<T: Real>(&self, x: Vec3<T>) -> Result<T> {
        match self {
            MonitorSpec::SphericalTanh {
                alpha, beta, gamma, ..
            } => {
                let theta = self.distance_to_centre(&Geometry::Sphere { radius: T::one() }, x);
                let g = T::lit(*gamma);
                let two = T::lit(2.0);
                let t = ((T::lit(*beta) - theta) / T::lit(*alpha)).tanh();
                Ok(((t + T::one()) / (two * (T::one() + g)) + g).sqrt())
            }
            MonitorSpec::Gridded(g) => {
                let (lat, lon) = lat_lon_deg(x);
                let p = g.grid.sample(lat.as_f64(), lon.as_f64());
                Ok(T::lit((p + g.p_min) / (g.p_max() + g.p_min)))
            }
            MonitorSpec::Constant { value } => Ok(T::lit(*value)),
            MonitorSpec::PlanarSech { .. } => Err(Error::UnsupportedGeometry("planar monitor on the sphere")),
        }
    }

    pub fn eval<T: Real>(&self, geometry: &Geometry<T>, x: Vec3<T>) -> Result<T> {
        if geometry.is_sphere() {
            self.eval_spherical(x)
        } else {
            self.eval_planar(geometry, x)
        }
    }

    /// `m` at each point, rejecting non-positive or non-finite values.
    pub fn eval_points<T: Real>(&self, geometry: &Geometry<T>, points: &[Vec3<T>]) -> Result<Vec<T>> {
        points
            .iter()
            .enumerate()
            .map(|(cell, &p)| {
                let m = self.eval(geometry, p)?;
                if m > T::zero() && m.is_finite() {
                    Ok(m)
                } else {
                    Err(Error::NonPositiveMonitor {
                        cell,
                        value: m.as_f64(),
                    })
                }
            })
            .collect()
    }
}

fn unit_from_lat_lon<T: Real>(lat_deg: f64, lon_deg: f64) -> Vec3<T> {
    let (lat, lon) = (lat_deg.to_radians(), lon_deg.to_radians());
    Vec3::new(T::lit(lat.cos() * lon.cos()), T::lit(lat.cos() * lon.sin()), T::lit(lat.sin()))
}

/// One Laplacian smoothing pass `m = m′ + ¼ ∇·(|d_f|² ∇m′)` on the
/// computational mesh. The divergence form conserves `Σ m V`.
pub fn smooth_on_computational_grid<T: Real>(
    m: &CellScalarField<T>,
    mesh: &PolygonalSurfaceMesh<T>,
) -> Result<CellScalarField<T>> {
    let out = smooth_raw(m, mesh)?;
    if let Some((cell, &value)) = out.values.iter().enumerate().find(|(_, v)| !(**v > T::zero())) {
        return Err(Error::NonPositiveMonitor {
            cell,
            value: value.as_f64(),
        });
    }
    Ok(out)
}

/// As [`smooth_on_computational_grid`] but values below `floor` are raised
/// to it. Returns the field and the number of clamped cells.
pub fn smooth_clamped<T: Real>(
    m: &CellScalarField<T>,
    mesh: &PolygonalSurfaceMesh<T>,
    floor: T,
) -> Result<(CellScalarField<T>, usize)> {
    let mut out = smooth_raw(m, mesh)?;
    let mut clamped = 0;
    for v in &mut out.values {
        if !(*v >= floor) {
            *v = floor;
            clamped += 1;
        }
    }
    if clamped > 0 {
        log::warn!("monitor smoothing clamped {clamped} cells to {}", floor.as_f64());
    }
    Ok((out, clamped))
}

fn smooth_raw<T: Real>(m: &CellScalarField<T>, mesh: &PolygonalSurfaceMesh<T>) -> Result<CellScalarField<T>> {
    m.check(mesh)?;
    let g = mesh.cached();
    let mut flux_sum = vec![T::zero(); mesh.num_cells()];
    for (f, face) in mesh.topology().faces.iter().enumerate() {
        // |d|² · (Δm/|d|) · |S|
        let flux = g.face_delta_lengths[f] * g.face_area_vectors[f].norm() * (m.values[face.neighbour] - m.values[face.owner]);
        flux_sum[face.owner] = flux_sum[face.owner] + flux;
        flux_sum[face.neighbour] = flux_sum[face.neighbour] - flux;
    }
    let quarter = T::lit(0.25);
    let values = m
        .values
        .iter()
        .zip(&flux_sum)
        .zip(mesh.volumes())
        .map(|((&mi, &fs), &v)| mi + quarter * fs / v)
        .collect();
    CellScalarField::new(mesh, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::{build_hex_icosahedron, build_square_grid};
    use crate::operators::face_normal_gradient;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const PLANE: Geometry<f64> = Geometry::PlanePeriodic {
        half_width: 1.0,
        half_height: 1.0,
    };

    #[test]
    fn planar_examples() {
        let ring = MonitorSpec::ring();
        assert!((ring.eval_planar(&PLANE, Vec3::planar(0.25, 0.0)).unwrap() - 11.0).abs() < 1e-12);
        assert!((ring.eval_planar(&PLANE, Vec3::planar(0.0, -0.25)).unwrap() - 11.0).abs() < 1e-12);
        let bell = MonitorSpec::bell();
        assert_eq!(bell.eval_planar(&PLANE, Vec3::zero()).unwrap(), 51.0);
        // a corner of the periodic square is the farthest point from the centre
        let far = bell.eval_planar(&PLANE, Vec3::planar(0.999, 0.999)).unwrap();
        assert!((far - 1.0).abs() < 1e-12);
        // periodic distance: x = 0.9 is 0.2 away from x = -0.9
        let shifted = MonitorSpec::PlanarSech {
            a: 0.0,
            alpha1: 1.0,
            alpha2: 1.0,
            centre: [-0.9, 0.0],
        };
        let expect = 1.0 + 1.0 / (0.04_f64).cosh().powi(2);
        assert!((shifted.eval_planar(&PLANE, Vec3::planar(0.9, 0.0)).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn spherical_examples() {
        let x16 = MonitorSpec::spherical_x(16.0);
        let centre = unit_from_lat_lon::<f64>(30.0, 90.0);
        let g = (1.0_f64 / 16.0).powi(4);
        let expect = (((10.0_f64 / 3.0).tanh() + 1.0) / (2.0 * (1.0 + g)) + g).sqrt();
        let m = x16.eval_spherical(centre).unwrap();
        assert!((m - expect).abs() < 1e-14);
        assert!((m - 0.9994).abs() < 5e-5);
        // far field ratio for X4 approaches γ^{-1/2} = 16
        let x4 = MonitorSpec::spherical_x(4.0);
        let near = x4.eval_spherical(centre).unwrap();
        let far = x4.eval_spherical(-centre).unwrap();
        assert!((near / far - 16.0).abs() < 0.1, "{}", near / far);
        // large γ flattens the monitor
        let flat = MonitorSpec::SphericalTanh {
            alpha: PI / 20.0,
            beta: PI / 6.0,
            gamma: 1e12,
            centre_lat_deg: 30.0,
            centre_lon_deg: 90.0,
        };
        let r = flat.eval_spherical(centre).unwrap() / flat.eval_spherical(-centre).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    fn band_grid(p: impl Fn(f64) -> f64) -> LatLonGrid {
        let (nlat, nlon) = (37, 72);
        let values = (0..nlat * nlon).map(|k| p(-90.0 + 5.0 * (k / nlon) as f64)).collect();
        LatLonGrid::new(nlat, nlon, -90.0, 0.0, 5.0, 5.0, values).unwrap()
    }

    #[test]
    fn gridded_examples() {
        let g = GriddedMonitor {
            grid: band_grid(|_| 0.0),
            p_min: 1e-5,
            p_max: Some(8.73e-4),
            smoothing: false,
        };
        let spec = MonitorSpec::Gridded(g);
        spec.validate().unwrap();
        let m: f64 = spec.eval_spherical(Vec3::new(0.3, 0.4, 0.5)).unwrap();
        assert!((m - 1e-5 / 8.83e-4).abs() < 1e-15);
        assert!((m - 1.133e-2).abs() < 1e-5);
        assert!(spec.is_uniform());

        let peak = MonitorSpec::Gridded(GriddedMonitor {
            grid: band_grid(|lat| if lat == 0.0 { 2.0 } else { 1.0 }),
            p_min: 1e-5,
            p_max: None,
            smoothing: true,
        });
        let eq: f64 = peak.eval_spherical(Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(eq, 1.0);
        // poles clamp to the end rows
        let pole: f64 = peak.eval_spherical(Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert!((pole - (1.0 + 1e-5) / (2.0 + 1e-5)).abs() < 1e-15);
    }

    #[test]
    fn bilinear_interpolation_and_wraparound() {
        // p = lon on a coarse grid is reproduced between nodes; the seam
        // interpolates between the last column and the first
        let grid = LatLonGrid::new(2, 4, -45.0, 0.0, 90.0, 90.0, vec![0.0, 1.0, 2.0, 3.0, 0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((grid.sample(10.0, 45.0) - 0.5).abs() < 1e-15);
        assert!((grid.sample(0.0, 315.0) - 1.5).abs() < 1e-15);
        assert!((grid.sample(0.0, -45.0) - 1.5).abs() < 1e-15);
        assert_eq!(grid.sample(80.0, 180.0), 2.0);
        let lat = LatLonGrid::new(2, 1, 0.0, 0.0, 10.0, 360.0, vec![1.0, 3.0]).unwrap();
        assert!((lat.sample(2.5, 0.0) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn grid_text_round_trip_and_errors() {
        let grid = band_grid(|lat| lat.abs() * 1e-4);
        let back = LatLonGrid::parse(&grid.to_text(), Path::new("mem")).unwrap();
        assert_eq!(back, grid);
        assert!(matches!(
            LatLonGrid::parse("2 2 0 0 1 1\n1 2 3\n", Path::new("short")),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            LatLonGrid::parse("2 2 0 0 1\n", Path::new("header")),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            LatLonGrid::parse("1 2 0 0 1 1\n1 x\n", Path::new("token")),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn validation() {
        assert!(MonitorSpec::Constant { value: 0.0 }.validate().is_err());
        assert!(MonitorSpec::spherical_x(4.0).validate().is_ok());
        let mut bad = MonitorSpec::spherical_x(4.0);
        if let MonitorSpec::SphericalTanh { gamma, .. } = &mut bad {
            *gamma = 0.0;
        }
        assert!(bad.validate().is_err());
        let g = MonitorSpec::Gridded(GriddedMonitor {
            grid: band_grid(|_| 1.0),
            p_min: 0.0,
            p_max: None,
            smoothing: false,
        });
        assert!(g.validate().is_err());
        let sphere = Geometry::Sphere { radius: 1.0 };
        assert!(MonitorSpec::ring().eval(&sphere, Vec3::unit_x()).is_err());
        assert!(MonitorSpec::spherical_x(2.0).eval(&PLANE, Vec3::zero()).is_err());
        assert!(!MonitorSpec::ring().supports(&sphere));
    }

    #[test]
    fn smoothing_identities() {
        let m = build_square_grid::<f64>(8).unwrap();
        let c = CellScalarField::constant(&m, 2.0);
        assert_eq!(smooth_on_computational_grid(&c, &m).unwrap(), c);
        let mut spike = CellScalarField::constant(&m, 1.0);
        spike.values[27] = 5.0;
        let s = smooth_on_computational_grid(&spike, &m).unwrap();
        assert!(s.values[27] < 5.0);
        for &f in &m.topology().cell_faces[27] {
            assert!(s.values[m.topology().across(f, 27)] > 1.0);
        }
        let before: f64 = spike.values.iter().zip(m.volumes()).map(|(a, b)| a * b).sum();
        let after: f64 = s.values.iter().zip(m.volumes()).map(|(a, b)| a * b).sum();
        assert!(((after - before) / before).abs() < 1e-12);
        // with unit spacing the ¼ five-point update is exactly the neighbour mean
        assert!((s.values[27] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smoothing_reduces_x16_gradients() {
        let mesh = build_hex_icosahedron::<f64>(4, 1.0).unwrap();
        let spec = MonitorSpec::spherical_x(16.0);
        let raw = CellScalarField::new(&mesh, spec.eval_points(mesh.geometry(), mesh.centres()).unwrap()).unwrap();
        let smooth = smooth_on_computational_grid(&raw, &mesh).unwrap();
        let max_grad = |f: &CellScalarField<f64>| {
            face_normal_gradient(f, &mesh)
                .unwrap()
                .into_iter()
                .map(f64::abs)
                .fold(0.0, f64::max)
        };
        assert!(max_grad(&smooth) < max_grad(&raw));
        let sum = |f: &CellScalarField<f64>| f.values.iter().zip(mesh.volumes()).map(|(a, b)| a * b).sum::<f64>();
        assert!(((sum(&smooth) - sum(&raw)) / sum(&raw)).abs() < 1e-12);
    }

    #[test]
    fn clamping_guard() {
        let m = build_square_grid::<f64>(4).unwrap();
        // a deep negative-going oscillation the ¼ pass cannot keep positive
        let raw = CellScalarField::from_fn(&m, |c| if (c + c / 4) % 2 == 0 { 1e-6 } else { 1.0 });
        assert!(matches!(
            smooth_on_computational_grid(&raw, &m),
            Ok(_) | Err(Error::NonPositiveMonitor { .. })
        ));
        let (out, _) = smooth_clamped(&raw, &m, 1e-3).unwrap();
        assert!(out.values.iter().all(|&v| v >= 1e-3));
    }

    proptest! {
        #[test]
        fn spherical_monitor_is_positive_and_monotone(
            s in 1.5f64..20.0, t1 in 0.0f64..PI, t2 in 0.0f64..PI
        ) {
            let spec = MonitorSpec::spherical_x(s);
            let centre = unit_from_lat_lon::<f64>(30.0, 90.0);
            let axis = centre.cross(Vec3::unit_z()).normalized();
            let at = |t: f64| centre * t.cos() + axis.cross(centre) * t.sin();
            let (a, b) = (t1.min(t2), t1.max(t2));
            let (ma, mb) = (spec.eval_spherical(at(a)).unwrap(), spec.eval_spherical(at(b)).unwrap());
            prop_assert!(mb > 0.0);
            prop_assert!(ma >= mb);
        }

        #[test]
        fn planar_monitor_at_least_one(x in -1.0f64..1.0, y in -1.0f64..1.0) {
            for spec in [MonitorSpec::ring(), MonitorSpec::bell()] {
                prop_assert!(spec.eval_planar(&PLANE, Vec3::planar(x, y)).unwrap() >= 1.0);
            }
        }

        #[test]
        fn gridded_monitor_in_unit_interval(lat in -90.0f64..90.0, lon in -360.0f64..720.0) {
            let spec = MonitorSpec::Gridded(GriddedMonitor {
                grid: band_grid(|l| (l.to_radians().cos() * 3.0).max(0.0)),
                p_min: 1e-5,
                p_max: None,
                smoothing: false,
            });
            let m = spec.eval_spherical(unit_from_lat_lon::<f64>(lat, lon)).unwrap();
            prop_assert!(m > 0.0 && m <= 1.0 + 1e-15);
        }
    }
}
