//! Named reference cases: planar ring and bell, the spherical X-meshes and a
//! synthetic precipitation band.

use std::fmt;
use std::str::FromStr;

use crate::base::BaseMeshSpec;
use crate::error::{Error, Result};
use crate::monitor::{GriddedMonitor, LatLonGrid, MonitorSpec};
use crate::operators::VertexGradientScheme;
use crate::solver::SolverConfig;

/// Cells per side of the planar reference grids.
pub const PLANE_CELLS_PER_SIDE: usize = 60;
/// Refinement level giving 2,562 cells.
pub const SPHERE_DEFAULT_REFINEMENT: usize = 4;

/// Peak rate of the synthetic precipitation field (kg m⁻² s⁻¹).
pub const BAND_PEAK: f64 = 8.73e-4;
/// Floor added before normalising precipitation (kg m⁻² s⁻¹).
pub const BAND_P_MIN: f64 = 1e-5;
/// Latitude of the band axis (degrees).
pub const BAND_LATITUDE: f64 = 5.0;
/// Gaussian e-folding half-width of the band (degrees latitude).
pub const BAND_HALF_WIDTH: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Case {
    Ring,
    Bell,
    /// Spherical tanh monitor with finest-to-coarsest spacing ratio `s`.
    X(f64),
    Precip,
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "ring" => Ok(Case::Ring),
            "bell" => Ok(Case::Bell),
            "precip" => Ok(Case::Precip),
            _ => {
                let ratio = lower
                    .strip_prefix('x')
                    .and_then(|r| r.parse::<f64>().ok())
                    .filter(|r| *r >= 1.0 && r.is_finite());
                ratio
                    .map(Case::X)
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown case `{s}` (ring, bell, x<s>, precip)")))
            }
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Case::Ring => f.write_str("ring"),
            Case::Bell => f.write_str("bell"),
            Case::X(s) => write!(f, "x{s}"),
            Case::Precip => f.write_str("precip"),
        }
    }
}

/// Everything needed to run a case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseSetup {
    pub base: BaseMeshSpec,
    pub monitor: MonitorSpec,
    pub config: SolverConfig,
}

impl Case {
    pub fn is_spherical(&self) -> bool {
        matches!(self, Case::X(_) | Case::Precip)
    }

    /// Default setup; `refinement` picks the icosahedral level (sphere) or
    /// cells per side (plane).
    pub fn setup(&self, refinement: Option<usize>) -> CaseSetup {
        let mut config = SolverConfig::default();
        let base = if self.is_spherical() {
            BaseMeshSpec::HexIcosahedron {
                refinement: refinement.unwrap_or(SPHERE_DEFAULT_REFINEMENT),
                radius: 1.0,
            }
        } else {
            // the least-squares stencils tangle geometric-Hessian runs on squares
            config.vertex_gradient = VertexGradientScheme::Small;
            BaseMeshSpec::SquareGrid {
                n_per_side: refinement.unwrap_or(PLANE_CELLS_PER_SIDE),
            }
        };
        let monitor = match *self {
            Case::Ring => MonitorSpec::ring(),
            Case::Bell => MonitorSpec::bell(),
            Case::X(s) => MonitorSpec::spherical_x(s),
            Case::Precip => MonitorSpec::Gridded(GriddedMonitor {
                grid: synthetic_band_grid(),
                p_min: BAND_P_MIN,
                p_max: None,
                smoothing: true,
            }),
        };
        CaseSetup { base, monitor, config }
    }
}

/// A 2° lat-lon field with one zonal Gaussian rain band, standing in for a
/// daily precipitation analysis with an intertropical convergence zone.
pub fn synthetic_band_grid() -> LatLonGrid {
    let (nlat, nlon, dlat, dlon) = (91, 180, 2.0, 2.0);
    let mut values = Vec::with_capacity(nlat * nlon);
    for i in 0..nlat {
        let lat = -90.0 + dlat * i as f64;
        let p = BAND_PEAK * (-((lat - BAND_LATITUDE) / BAND_HALF_WIDTH).powi(2)).exp();
        values.extend(std::iter::repeat_n(p, nlon));
    }
    LatLonGrid::new(nlat, nlon, -90.0, 0.0, dlat, dlon, values).expect("valid synthetic grid")
}
