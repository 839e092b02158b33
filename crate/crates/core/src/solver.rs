//! Semi-implicit fixed-point solver for the mesh potential.
//!
//! Each iteration solves
//! `(1+α)∇²φⁿ⁺¹ = (1+α)∇²φⁿ − h(φⁿ) + cⁿ/m(xⁿ)` on the computational mesh,
//! where `h` is `det(I + H)` (finite differences, plane only) or the volume
//! ratio `V_x/V_ξ` (geometric). Vertices then move to `ξ + ∇φ` on the plane
//! or along great circles on the sphere.

use serde::{Deserialize, Serialize};

use crate::diagnostics::max_non_orthogonality;
use crate::error::{Error, Result};
use crate::linalg::{pcg, residual_metric, CsrMatrix, LinearSolverSettings};
use crate::mesh::{CellScalarField, Geometry, PolygonalSurfaceMesh, TransportedMesh, VertexVectorField};
use crate::monitor::{smooth_clamped, MonitorSpec};
use crate::operators::{
    assemble_laplacian, fd_hessian_determinant_term, geometric_hessian_ratio, vertex_gradient_with,
    VertexGradientScheme, VertexStencils,
};
use crate::scalar::Real;
use crate::sphere::exp_map_raw;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HessianMode {
    FiniteDifference,
    #[default]
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub hessian_mode: HessianMode,
    pub vertex_gradient: VertexGradientScheme,
    pub max_fixed_point_iterations: usize,
    pub fixed_point_stop_residual: f64,
    /// Inner tolerance is `max(factor × initial residual, floor)`.
    pub inner_tolerance_factor: f64,
    pub inner_tolerance_floor: f64,
    /// `None` smooths exactly when the monitor asks for it.
    pub smoothing: Option<bool>,
    pub alpha_floor_ratio: f64,
    pub alpha_source_floor: f64,
    pub linear_solver: LinearSolverSettings,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            hessian_mode: HessianMode::Geometric,
            vertex_gradient: VertexGradientScheme::Goldilocks,
            max_fixed_point_iterations: 2000,
            fixed_point_stop_residual: 1e-8,
            inner_tolerance_factor: 1e-3,
            inner_tolerance_floor: 1e-8,
            smoothing: None,
            alpha_floor_ratio: 4.0,
            alpha_source_floor: 0.25,
            linear_solver: LinearSolverSettings::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate<T: Real>(&self, geometry: &Geometry<T>) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive("fixed_point_stop_residual", self.fixed_point_stop_residual)?;
        positive("inner_tolerance_factor", self.inner_tolerance_factor)?;
        positive("inner_tolerance_floor", self.inner_tolerance_floor)?;
        positive("alpha_floor_ratio", self.alpha_floor_ratio)?;
        positive("alpha_source_floor", self.alpha_source_floor)?;
        if self.max_fixed_point_iterations == 0 {
            return Err(Error::InvalidConfig("max_fixed_point_iterations must be at least 1".into()));
        }
        if self.linear_solver.max_iterations == 0 {
            return Err(Error::InvalidConfig("linear solver needs at least one iteration".into()));
        }
        if geometry.is_sphere() && self.hessian_mode == HessianMode::FiniteDifference {
            return Err(Error::InvalidConfig(
                "the finite-difference Hessian is only available on the plane".into(),
            ));
        }
        Ok(())
    }

    fn smoothing_for(&self, monitor: &MonitorSpec) -> bool {
        self.smoothing.unwrap_or_else(|| monitor.smoothing_enabled())
    }
}

/// One line of the convergence log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n: usize,
    pub initial_residual: f64,
    pub one_plus_alpha: f64,
    pub c: f64,
    pub min_r: f64,
    pub max_nonorthogonality_deg: f64,
    pub max_abs_source: f64,
    pub inner_iterations: usize,
}

impl IterationRecord {
    pub fn log_line(&self) -> String {
        format!(
            "{}, {:.6e}, {:.6e}, {:.6e}, {:.6e}, {:.3}",
            self.n, self.initial_residual, self.one_plus_alpha, self.c, self.min_r, self.max_nonorthogonality_deg
        )
    }
}

#[derive(Debug, Clone)]
pub struct SolverState<T> {
    /// Completed fixed-point iterations.
    pub n: usize,
    pub phi: CellScalarField<T>,
    pub alpha: T,
    pub c: T,
    pub x: TransportedMesh<T>,
    pub residual_history: Vec<T>,
    pub alpha_history: Vec<T>,
}

impl<T: Real> SolverState<T> {
    pub fn one_plus_alpha(&self) -> T {
        T::one() + self.alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    NotConverged,
}

#[derive(Debug, Clone)]
pub struct RunReport<T> {
    pub state: SolverState<T>,
    pub status: Status,
    pub records: Vec<IterationRecord>,
    /// Monitor at the final transported centroids (smoothed if enabled).
    pub monitor: CellScalarField<T>,
}

impl<T: Real> RunReport<T> {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}

/// What happened in one call to [`MaSolver::step`].
#[derive(Debug, Clone)]
pub struct StepOutcome<T> {
    pub state: SolverState<T>,
    pub record: IterationRecord,
    pub converged: bool,
}

/// Pieces of one iteration before the inner solve.
#[derive(Debug, Clone)]
pub struct SourceTerms<T> {
    pub hessian: Vec<T>,
    pub monitor: CellScalarField<T>,
    pub c: T,
    pub source: Vec<T>,
}

pub struct MaSolver<'a, T> {
    base: &'a PolygonalSurfaceMesh<T>,
    monitor: &'a MonitorSpec,
    config: SolverConfig,
    laplacian: CsrMatrix<T>,
    stencils: VertexStencils<T>,
}

impl<'a, T: Real> MaSolver<'a, T> {
    pub fn new(base: &'a PolygonalSurfaceMesh<T>, monitor: &'a MonitorSpec, config: SolverConfig) -> Result<Self> {
        config.validate(base.geometry())?;
        monitor.validate()?;
        if !monitor.supports(base.geometry()) {
            return Err(Error::InvalidConfig(format!(
                "monitor {monitor:?} does not apply to this geometry"
            )));
        }
        Ok(Self {
            base,
            monitor,
            config,
            laplacian: assemble_laplacian(base).integrated().clone(),
            stencils: VertexStencils::new(base, config.vertex_gradient)?,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn base(&self) -> &PolygonalSurfaceMesh<T> {
        self.base
    }

    /// `φ⁰ = 0`, `α⁰ = 0`, mesh unmoved.
    pub fn initial_state(&self) -> Result<SolverState<T>> {
        Ok(SolverState {
            n: 0,
            phi: CellScalarField::zeros(self.base),
            alpha: T::zero(),
            c: T::one(),
            x: TransportedMesh::identity(self.base)?,
            residual_history: Vec::new(),
            alpha_history: Vec::new(),
        })
    }

    /// Monitor at the transported centroids, smoothed on the computational
    /// mesh when enabled.
    pub fn monitor_at(&self, x: &TransportedMesh<T>) -> Result<CellScalarField<T>> {
        let values = self.monitor.eval_points(x.mesh().geometry(), x.centroids())?;
        let raw = CellScalarField::new(self.base, values)?;
        if self.config.smoothing_for(self.monitor) {
            Ok(smooth_clamped(&raw, self.base, T::lit(self.monitor.positivity_floor()))?.0)
        } else {
            Ok(raw)
        }
    }

    pub fn hessian_term(&self, state: &SolverState<T>) -> Result<Vec<T>> {
        match self.config.hessian_mode {
            HessianMode::FiniteDifference => Ok(fd_hessian_determinant_term(&state.phi, self.base)?.values),
            HessianMode::Geometric => Ok(geometric_hessian_ratio(&state.x).values),
        }
    }

    pub fn source_terms(&self, state: &SolverState<T>) -> Result<SourceTerms<T>> {
        let hessian = self.hessian_term(state)?;
        let monitor = self.monitor_at(&state.x)?;
        let c = equidistribution_constant(&hessian, &monitor.values, self.base.volumes());
        let source = hessian
            .iter()
            .zip(&monitor.values)
            .map(|(&h, &m)| h - c / m)
            .collect();
        Ok(SourceTerms {
            hessian,
            monitor,
            c,
            source,
        })
    }

    /// `1+αⁿ⁺¹ = max(1+αⁿ, ratio · max(floor, max|s|))`
    pub fn update_alpha(&self, alpha: T, source: &[T]) -> T {
        let max_s = source.iter().fold(T::zero(), |a, &s| a.max(s.abs()));
        let candidate = T::lit(self.config.alpha_floor_ratio) * max_s.max(T::lit(self.config.alpha_source_floor));
        (T::one() + alpha).max(candidate) - T::one()
    }

    /// Moves the computational vertices by the vertex gradient of `φ`.
    pub fn transport(&self, phi: &CellScalarField<T>) -> Result<(TransportedMesh<T>, VertexVectorField<T>)> {
        let grad = vertex_gradient_with(phi, self.base, &self.stencils)?;
        let geometry = self.base.geometry();
        let moved = self
            .base
            .points()
            .iter()
            .zip(&grad.values)
            .map(|(&xi, &g)| match *geometry {
                Geometry::PlanePeriodic { .. } => geometry.wrap(xi + g),
                Geometry::Sphere { radius } => exp_map_raw(xi, g, radius),
            })
            .collect();
        Ok((TransportedMesh::from_base(self.base, moved)?, grad))
    }

    pub fn step(&self, state: &SolverState<T>) -> Result<StepOutcome<T>> {
        let terms = self.source_terms(state)?;
        let alpha = self.update_alpha(state.alpha, &terms.source);
        let opa = T::one() + alpha;
        let volumes = self.base.volumes();

        let a = self.laplacian.scaled(opa);
        let a_phi = a.mul_vec(&state.phi.values);
        let mut b: Vec<T> = a_phi
            .iter()
            .zip(&terms.source)
            .zip(volumes)
            .map(|((&l, &s), &v)| l - v * s)
            .collect();
        // the scale Σb is compared against is that of the terms that cancel in it
        let scale: T = a_phi.iter().map(|v| v.abs()).sum::<T>()
            + terms
                .hessian
                .iter()
                .zip(&terms.monitor.values)
                .zip(volumes)
                .map(|((&h, &m), &v)| v * (h.abs() + terms.c / m))
                .sum::<T>();
        project_compatible(&mut b, volumes, scale)?;
        let initial_residual = residual_metric(&b, &a_phi);

        let r = geometric_hessian_ratio(&state.x);
        let mut record = IterationRecord {
            n: state.n + 1,
            initial_residual: initial_residual.as_f64(),
            one_plus_alpha: opa.as_f64(),
            c: terms.c.as_f64(),
            min_r: r.values.iter().fold(T::infinity(), |m, &v| m.min(v)).as_f64(),
            max_nonorthogonality_deg: max_non_orthogonality(state.x.mesh()).as_f64(),
            max_abs_source: terms.source.iter().fold(T::zero(), |m, &v| m.max(v.abs())).as_f64(),
            inner_iterations: 0,
        };

        let mut next = state.clone();
        next.n += 1;
        next.alpha = alpha;
        next.c = terms.c;
        next.residual_history.push(initial_residual);
        next.alpha_history.push(alpha);

        if initial_residual < T::lit(self.config.fixed_point_stop_residual) {
            return Ok(StepOutcome {
                state: next,
                record,
                converged: true,
            });
        }

        let tolerance = (T::lit(self.config.inner_tolerance_factor) * initial_residual)
            .max(T::lit(self.config.inner_tolerance_floor));
        let (phi, iterations) = solve_poisson_integrated(&a, &b, &state.phi.values, tolerance, volumes, &self.config.linear_solver)?;
        record.inner_iterations = iterations;
        next.phi = CellScalarField::new(self.base, phi)?;
        next.x = self.transport(&next.phi)?.0;
        Ok(StepOutcome {
            state: next,
            record,
            converged: false,
        })
    }

    pub fn run(&self) -> Result<RunReport<T>> {
        self.run_with_observer(|_, _| {})
    }

    /// Runs to convergence or the iteration cap, calling `observer` after
    /// every iteration with its log record and the updated state.
    pub fn run_with_observer(
        &self,
        mut observer: impl FnMut(&IterationRecord, &SolverState<T>),
    ) -> Result<RunReport<T>> {
        let mut state = self.initial_state()?;
        let mut records = Vec::new();
        let mut status = Status::NotConverged;
        for _ in 0..self.config.max_fixed_point_iterations {
            let out = self.step(&state)?;
            log::info!("{}", out.record.log_line());
            observer(&out.record, &out.state);
            records.push(out.record);
            state = out.state;
            if out.converged {
                status = Status::Converged;
                break;
            }
        }
        if status == Status::NotConverged {
            log::warn!(
                "not converged after {} iterations, last initial residual {:e}",
                state.n,
                records.last().map_or(f64::NAN, |r| r.initial_residual)
            );
        }
        let monitor = self.monitor_at(&state.x)?;
        Ok(RunReport {
            state,
            status,
            records,
            monitor,
        })
    }
}

/// `cⁿ = Σ hᵢ V_ξ,i / Σ V_ξ,i / mᵢ`
///
/// Evaluated as `m̂ Σ hV / Σ V(m̂/m)` with `m̂ = max m`, which is exact for a
/// constant monitor and keeps the identity map an exact fixed point.
pub fn equidistribution_constant<T: Real>(hessian: &[T], monitor: &[T], volumes: &[T]) -> T {
    let m_ref = monitor.iter().copied().fold(T::zero(), T::max);
    let num: T = hessian.iter().zip(volumes).map(|(&h, &v)| h * v).sum();
    let den: T = monitor.iter().zip(volumes).map(|(&m, &v)| v * (m_ref / m)).sum();
    m_ref * (num / den)
}

/// Removes the round-off part of `Σ bᵢ` in proportion to the volumes, after
/// checking it is small against `norm`.
fn project_compatible<T: Real>(b: &mut [T], volumes: &[T], norm: T) -> Result<()> {
    let sum: T = b.iter().copied().sum();
    let slack = if T::epsilon().as_f64() > 1e-10 {
        // single precision cannot meet the double-precision bound
        T::epsilon() * T::lit(16.0)
    } else {
        T::lit(1e-10)
    };
    if sum.abs() > slack * norm {
        return Err(Error::IncompatibleRhs {
            mean: sum.as_f64(),
            norm: norm.as_f64(),
        });
    }
    let total: T = volumes.iter().copied().sum();
    for (bi, &v) in b.iter_mut().zip(volumes) {
        *bi = *bi - sum * v / total;
    }
    Ok(())
}

/// Solves `A φ = b` for the integrated (negative semidefinite) Laplacian `A`
/// and returns `φ` with zero volume-weighted mean plus the PCG iteration count.
pub fn solve_poisson_integrated<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    guess: &[T],
    tolerance: T,
    volumes: &[T],
    settings: &LinearSolverSettings,
) -> Result<(Vec<T>, usize)> {
    let mut rhs = b.to_vec();
    let norm = rhs.iter().map(|v| v.abs()).sum();
    project_compatible(&mut rhs, volumes, norm)?;
    let neg_a = a.scaled(-T::one());
    let neg_b: Vec<T> = rhs.iter().map(|&v| -v).collect();
    let mut phi = guess.to_vec();
    let stats = pcg(&neg_a, &neg_b, &mut phi, tolerance, settings)?;
    pin_mean(&mut phi, volumes);
    Ok((phi, stats.iterations))
}

/// Solves `∇²φ = rhs` (per-volume form) on `mesh` with zero-mean pinning.
pub fn solve_poisson<T: Real>(
    rhs: &CellScalarField<T>,
    mesh: &PolygonalSurfaceMesh<T>,
    guess: &CellScalarField<T>,
    tolerance: T,
    settings: &LinearSolverSettings,
) -> Result<CellScalarField<T>> {
    let lap = assemble_laplacian(mesh);
    let b: Vec<T> = rhs.values.iter().zip(mesh.volumes()).map(|(&r, &v)| r * v).collect();
    let (phi, _) = solve_poisson_integrated(lap.integrated(), &b, &guess.values, tolerance, mesh.volumes(), settings)?;
    CellScalarField::new(mesh, phi)
}

fn pin_mean<T: Real>(phi: &mut [T], volumes: &[T]) {
    let num: T = phi.iter().zip(volumes).map(|(&p, &v)| p * v).sum();
    let den: T = volumes.iter().copied().sum();
    let mean = num / den;
    for p in phi.iter_mut() {
        *p = *p - mean;
    }
}
