//! Discrete differential operators on the fixed computational mesh.
//!
//! Vectors are Cartesian 3-vectors: planar fields have `z = 0`, spherical
//! fields are tangent to the sphere. Least-squares systems are formed in a
//! local 2D tangent basis at the point where the result lives.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::mesh::{CellScalarField, Geometry, PolygonalSurfaceMesh, TransportedMesh, VertexVectorField};
use crate::scalar::Real;
use crate::sphere::{log_map_raw, unit_triangle_excess};
use crate::vector::{Mat2, Vec3};

/// Condition number above which a 2×2 least-squares system is rejected.
pub const MAX_STENCIL_CONDITION: f64 = 1e8;

/// The finite-volume Laplacian. Rows of the integrated matrix hold
/// `|S_f|/|d_f|` per neighbour and the negated sum on the diagonal; the
/// operator itself divides by the cell volume.
#[derive(Debug, Clone)]
pub struct SparseOperator<T> {
    integrated: CsrMatrix<T>,
    volumes: Vec<T>,
}

impl<T: Real> SparseOperator<T> {
    /// `Σ_f ∇_nf φ |S_f|`, symmetric because faces contribute symmetrically.
    pub fn integrated(&self) -> &CsrMatrix<T> {
        &self.integrated
    }

    pub fn volumes(&self) -> &[T] {
        &self.volumes
    }

    pub fn is_symmetric(&self) -> bool {
        self.integrated.is_symmetric(T::zero())
    }

    /// `(∇²φ)_i`
    pub fn apply(&self, phi: &[T]) -> Vec<T> {
        let mut y = self.integrated.mul_vec(phi);
        for (yi, &v) in y.iter_mut().zip(&self.volumes) {
            *yi = *yi / v;
        }
        y
    }

    /// Triplets of the volume-scaled operator.
    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        self.integrated
            .triplets()
            .into_iter()
            .map(|(r, c, v)| (r, c, v / self.volumes[r]))
            .collect()
    }
}

pub fn assemble_laplacian<T: Real>(mesh: &PolygonalSurfaceMesh<T>) -> SparseOperator<T> {
    let g = mesh.cached();
    let mut triplets = Vec::with_capacity(4 * mesh.num_faces());
    for (f, face) in mesh.topology().faces.iter().enumerate() {
        let k = g.face_area_vectors[f].norm() / g.face_delta_lengths[f];
        let (o, n) = (face.owner, face.neighbour);
        triplets.push((o, n, k));
        triplets.push((n, o, k));
        triplets.push((o, o, -k));
        triplets.push((n, n, -k));
    }
    SparseOperator {
        integrated: CsrMatrix::from_triplets(mesh.num_cells(), &triplets),
        volumes: mesh.volumes().to_vec(),
    }
}

/// `∇_nf φ = (φ_neighbour − φ_owner) / |d_f|` on every face.
pub fn face_normal_gradient<T: Real>(phi: &CellScalarField<T>, mesh: &PolygonalSurfaceMesh<T>) -> Result<Vec<T>> {
    phi.check(mesh)?;
    Ok(sn_grad(&phi.values, mesh))
}

fn sn_grad<T: Real>(phi: &[T], mesh: &PolygonalSurfaceMesh<T>) -> Vec<T> {
    let d = &mesh.cached().face_delta_lengths;
    mesh.topology()
        .faces
        .iter()
        .enumerate()
        .map(|(f, face)| (phi[face.neighbour] - phi[face.owner]) / d[f])
        .collect()
}

/// Matrix-free Laplacian `(1/V_i) Σ_f ∇_nf φ |S_f|`.
pub fn laplacian<T: Real>(phi: &CellScalarField<T>, mesh: &PolygonalSurfaceMesh<T>) -> Result<Vec<T>> {
    phi.check(mesh)?;
    let sn = sn_grad(&phi.values, mesh);
    let g = mesh.cached();
    let mut acc = vec![T::zero(); mesh.num_cells()];
    for (f, face) in mesh.topology().faces.iter().enumerate() {
        let flux = sn[f] * g.face_area_vectors[f].norm();
        acc[face.owner] = acc[face.owner] + flux;
        acc[face.neighbour] = acc[face.neighbour] - flux;
    }
    Ok(acc.iter().zip(mesh.volumes()).map(|(&a, &v)| a / v).collect())
}

/// 2D coordinates of `v` in the tangent basis `(e1, e2)`.
#[inline]
fn coords<T: Real>(v: Vec3<T>, basis: &(Vec3<T>, Vec3<T>)) -> [T; 2] {
    [v.dot(basis.0), v.dot(basis.1)]
}

#[inline]
fn from_coords<T: Real>(c: [T; 2], basis: &(Vec3<T>, Vec3<T>)) -> Vec3<T> {
    basis.0 * c[0] + basis.1 * c[1]
}

fn cell_gradients_from_sn<T: Real>(sn: &[T], mesh: &PolygonalSurfaceMesh<T>) -> Result<Vec<Vec3<T>>> {
    let g = mesh.cached();
    let geometry = mesh.geometry();
    let limit = T::lit(MAX_STENCIL_CONDITION);
    (0..mesh.num_cells())
        .map(|c| {
            let basis = geometry.tangent_basis(g.cell_centres[c]);
            let mut m = Mat2::zero();
            let mut rhs = [T::zero(); 2];
            for &f in &mesh.topology().cell_faces[c] {
                // the sign of S_f and of ∇_nf flip together between the two sides
                let s = g.face_area_vectors[f];
                let s2 = coords(s, &basis);
                let s_hat = coords(s / s.norm(), &basis);
                m = m.add(Mat2::outer(s_hat, s2, T::one()));
                rhs[0] = rhs[0] + sn[f] * s2[0];
                rhs[1] = rhs[1] + sn[f] * s2[1];
            }
            if m.condition_number() > limit {
                return Err(Error::DegenerateCellGeometry { cell: c });
            }
            let x = m.solve(rhs).ok_or(Error::DegenerateCellGeometry { cell: c })?;
            Ok(from_coords(x, &basis))
        })
        .collect()
}

/// Least-squares cell-centred gradient `(Σ Ŝ_f S_fᵀ)⁻¹ Σ ∇_nf φ S_f`.
pub fn cell_lsq_gradient<T: Real>(phi: &CellScalarField<T>, mesh: &PolygonalSurfaceMesh<T>) -> Result<Vec<Vec3<T>>> {
    phi.check(mesh)?;
    cell_gradients_from_sn(&sn_grad(&phi.values, mesh), mesh)
}

fn face_gradients_from<T: Real>(sn: &[T], cell_grad: &[Vec3<T>], mesh: &PolygonalSurfaceMesh<T>) -> Vec<Vec3<T>> {
    let g = mesh.cached();
    let sphere = mesh.geometry().is_sphere();
    mesh.topology()
        .faces
        .iter()
        .enumerate()
        .map(|(f, face)| {
            let w = g.face_weights[f];
            let mut interp = cell_grad[face.owner] * w + cell_grad[face.neighbour] * (T::one() - w);
            if sphere {
                interp = interp.reject(g.face_centres[f].normalized());
            }
            let s_hat = g.face_area_vectors[f].normalized();
            interp + s_hat * (sn[f] - interp.dot(s_hat))
        })
        .collect()
}

/// Full face gradient: linear interpolation of the cell gradients with the
/// normal component replaced by `∇_nf φ`.
pub fn face_full_gradient<T: Real>(phi: &CellScalarField<T>, mesh: &PolygonalSurfaceMesh<T>) -> Result<Vec<Vec3<T>>> {
    phi.check(mesh)?;
    let sn = sn_grad(&phi.values, mesh);
    let cg = cell_gradients_from_sn(&sn, mesh)?;
    Ok(face_gradients_from(&sn, &cg, mesh))
}

/// One 2×2 tensor per cell, in the global `(x, y)` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTensorField<T> {
    pub values: Vec<Mat2<T>>,
}

/// Gauss-theorem Hessian `(1/V_i) Σ_f ∇_f φ S_fᵀ` (plane only). Its trace is
/// the discrete Laplacian; the tensor is generally not symmetric.
pub fn fd_hessian<T: Real>(phi: &CellScalarField<T>, mesh: &PolygonalSurfaceMesh<T>) -> Result<CellTensorField<T>> {
    if mesh.geometry().is_sphere() {
        return Err(Error::UnsupportedGeometry("fd_hessian"));
    }
    let grad_f = face_full_gradient(phi, mesh)?;
    let g = mesh.cached();
    let mut h = vec![Mat2::zero(); mesh.num_cells()];
    for (f, face) in mesh.topology().faces.iter().enumerate() {
        let gf = [grad_f[f].x, grad_f[f].y];
        let s = [g.face_area_vectors[f].x, g.face_area_vectors[f].y];
        h[face.owner] = h[face.owner].add(Mat2::outer(gf, s, T::one()));
        h[face.neighbour] = h[face.neighbour].add(Mat2::outer(gf, s, -T::one()));
    }
    Ok(CellTensorField {
        values: h
            .into_iter()
            .zip(mesh.volumes())
            .map(|(m, &v)| m.scale(T::one() / v))
            .collect(),
    })
}

/// `det(I + H_i)` per cell.
pub fn fd_hessian_determinant_term<T: Real>(
    phi: &CellScalarField<T>,
    mesh: &PolygonalSurfaceMesh<T>,
) -> Result<CellScalarField<T>> {
    let h = fd_hessian(phi, mesh)?;
    CellScalarField::new(mesh, h.values.iter().map(|m| Mat2::identity().add(*m).det()).collect())
}

/// Volume ratio `r_i = V_x,i / V_ξ,i`.
pub fn geometric_hessian_ratio<T: Real>(transported: &TransportedMesh<T>) -> CellScalarField<T> {
    let values = transported
        .volumes()
        .iter()
        .zip(transported.base_volumes())
        .map(|(&vx, &vxi)| vx / vxi)
        .collect();
    CellScalarField::new(transported.mesh(), values).expect("transported mesh shares the base topology")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VertexGradientScheme {
    /// Least squares over the faces sharing the vertex.
    Small,
    /// Least squares over faces sharing the vertex (weight 3) and the faces
    /// that touch those faces' end points (weight 1).
    #[default]
    Goldilocks,
    /// Average of the full face gradients of the faces sharing the vertex.
    Large,
}

/// Per-vertex face lists and, for the least-squares schemes, the
/// precomputed fit so that `∇_v φ = Σ_f k_f (φ_neighbour − φ_owner)`.
#[derive(Debug, Clone)]
pub struct VertexStencils<T> {
    pub scheme: VertexGradientScheme,
    /// `(face, weight)` per vertex.
    pub stencils: Vec<Vec<(usize, f64)>>,
    coefficients: Vec<Vec<Vec3<T>>>,
}

/// Offsets of the two cell centres of face `f` as seen from vertex `v`: on
/// the sphere the difference of their log-map images in the tangent plane at
/// `v`, which makes the fit exact for fields linear in normal coordinates.
fn stencil_delta<T: Real>(mesh: &PolygonalSurfaceMesh<T>, v: usize, f: usize) -> Vec3<T> {
    let g = mesh.cached();
    match *mesh.geometry() {
        Geometry::PlanePeriodic { .. } => g.face_deltas[f],
        Geometry::Sphere { radius } => {
            let face = &mesh.topology().faces[f];
            let p = mesh.points()[v];
            log_map_raw(p, g.cell_centres[face.neighbour], radius) - log_map_raw(p, g.cell_centres[face.owner], radius)
        }
    }
}

impl<T: Real> VertexStencils<T> {
    pub fn new(mesh: &PolygonalSurfaceMesh<T>, scheme: VertexGradientScheme) -> Result<Self> {
        let topo = mesh.topology();
        let stencils: Vec<Vec<(usize, f64)>> = (0..mesh.num_vertices())
            .map(|v| {
                let central = &topo.vertex_faces[v];
                match scheme {
                    VertexGradientScheme::Small | VertexGradientScheme::Large => {
                        central.iter().map(|&f| (f, 1.0)).collect()
                    }
                    VertexGradientScheme::Goldilocks => {
                        let mut list: Vec<(usize, f64)> = central.iter().map(|&f| (f, 3.0)).collect();
                        let mut outer = BTreeSet::new();
                        for &f in central {
                            for &vp in &topo.faces[f].vertices {
                                if vp == v {
                                    continue;
                                }
                                for &fo in &topo.vertex_faces[vp] {
                                    if !central.contains(&fo) {
                                        outer.insert(fo);
                                    }
                                }
                            }
                        }
                        list.extend(outer.into_iter().map(|f| (f, 1.0)));
                        list
                    }
                }
            })
            .collect();
        let coefficients = if scheme == VertexGradientScheme::Large {
            Vec::new()
        } else {
            lsq_coefficients(mesh, &stencils)?
        };
        Ok(Self {
            scheme,
            stencils,
            coefficients,
        })
    }

    /// Cells whose values enter the gradient at `vertex`.
    pub fn cells(&self, mesh: &PolygonalSurfaceMesh<T>, vertex: usize) -> BTreeSet<usize> {
        let topo = mesh.topology();
        let mut cells = BTreeSet::new();
        for &(f, _) in &self.stencils[vertex] {
            let face = &topo.faces[f];
            cells.insert(face.owner);
            cells.insert(face.neighbour);
        }
        if self.scheme == VertexGradientScheme::Large {
            // cell gradients pull in each cell's face neighbours
            let direct: Vec<usize> = cells.iter().copied().collect();
            for c in direct {
                for &f in &topo.cell_faces[c] {
                    cells.insert(topo.across(f, c));
                }
            }
        }
        cells
    }
}

/// `k_f = E M⁻¹ w_f d_f` with `M = Σ w d dᵀ` in the vertex tangent basis `E`.
fn lsq_coefficients<T: Real>(
    mesh: &PolygonalSurfaceMesh<T>,
    stencils: &[Vec<(usize, f64)>],
) -> Result<Vec<Vec<Vec3<T>>>> {
    let geometry = mesh.geometry();
    let limit = T::lit(MAX_STENCIL_CONDITION);
    mesh.points()
        .iter()
        .enumerate()
        .map(|(v, &p)| {
            let basis = geometry.tangent_basis(p);
            let deltas: Vec<[T; 2]> = stencils[v]
                .iter()
                .map(|&(f, _)| coords(stencil_delta(mesh, v, f), &basis))
                .collect();
            let mut m = Mat2::zero();
            for (d, &(_, w)) in deltas.iter().zip(&stencils[v]) {
                m = m.add(Mat2::outer(*d, *d, T::lit(w)));
            }
            let condition = m.condition_number();
            if !(condition <= limit) {
                return Err(Error::DegenerateVertexStencil {
                    vertex: v,
                    condition: condition.as_f64(),
                });
            }
            deltas
                .iter()
                .zip(&stencils[v])
                .map(|(d, &(_, w))| {
                    let w = T::lit(w);
                    let x = m.solve([w * d[0], w * d[1]]).ok_or(Error::DegenerateVertexStencil {
                        vertex: v,
                        condition: f64::INFINITY,
                    })?;
                    Ok(from_coords(x, &basis))
                })
                .collect()
        })
        .collect()
}

fn lsq_vertex_gradients<T: Real>(phi: &[T], mesh: &PolygonalSurfaceMesh<T>, stencils: &VertexStencils<T>) -> Vec<Vec3<T>> {
    let faces = &mesh.topology().faces;
    stencils
        .stencils
        .iter()
        .zip(&stencils.coefficients)
        .map(|(list, coeffs)| {
            list.iter()
                .zip(coeffs)
                .map(|(&(f, _), &k)| k * (phi[faces[f].neighbour] - phi[faces[f].owner]))
                .sum()
        })
        .collect()
}

fn large_vertex_gradients<T: Real>(phi: &[T], mesh: &PolygonalSurfaceMesh<T>) -> Result<Vec<Vec3<T>>> {
    let sn = sn_grad(phi, mesh);
    let cg = cell_gradients_from_sn(&sn, mesh)?;
    let fg = face_gradients_from(&sn, &cg, mesh);
    let sphere = mesh.geometry().is_sphere();
    Ok(mesh
        .points()
        .iter()
        .enumerate()
        .map(|(v, &p)| {
            let faces = &mesh.topology().vertex_faces[v];
            let mean = faces.iter().map(|&f| fg[f]).sum::<Vec3<T>>() / T::from_count(faces.len());
            if sphere {
                mean.reject(p.normalized())
            } else {
                mean
            }
        })
        .collect())
}

/// Gradient of `φ` at the mesh vertices with a prepared stencil set.
pub fn vertex_gradient_with<T: Real>(
    phi: &CellScalarField<T>,
    mesh: &PolygonalSurfaceMesh<T>,
    stencils: &VertexStencils<T>,
) -> Result<VertexVectorField<T>> {
    phi.check(mesh)?;
    if stencils.stencils.len() != mesh.num_vertices() {
        return Err(Error::FieldLength {
            expected: mesh.num_vertices(),
            got: stencils.stencils.len(),
        });
    }
    let values = match stencils.scheme {
        VertexGradientScheme::Small | VertexGradientScheme::Goldilocks => lsq_vertex_gradients(&phi.values, mesh, stencils),
        VertexGradientScheme::Large => large_vertex_gradients(&phi.values, mesh)?,
    };
    VertexVectorField::new(mesh, values)
}

pub fn vertex_gradient<T: Real>(
    phi: &CellScalarField<T>,
    mesh: &PolygonalSurfaceMesh<T>,
    scheme: VertexGradientScheme,
) -> Result<VertexVectorField<T>> {
    vertex_gradient_with(phi, mesh, &VertexStencils::new(mesh, scheme)?)
}

pub fn vertex_gradient_small<T: Real>(
    phi: &CellScalarField<T>,
    mesh: &PolygonalSurfaceMesh<T>,
) -> Result<VertexVectorField<T>> {
    vertex_gradient(phi, mesh, VertexGradientScheme::Small)
}

pub fn vertex_gradient_goldilocks<T: Real>(
    phi: &CellScalarField<T>,
    mesh: &PolygonalSurfaceMesh<T>,
) -> Result<VertexVectorField<T>> {
    vertex_gradient(phi, mesh, VertexGradientScheme::Goldilocks)
}

pub fn vertex_gradient_large<T: Real>(
    phi: &CellScalarField<T>,
    mesh: &PolygonalSurfaceMesh<T>,
) -> Result<VertexVectorField<T>> {
    vertex_gradient(phi, mesh, VertexGradientScheme::Large)
}

/// Cell-centre gradient as the average of the cell's full face gradients,
/// weighted by the area of the triangle each face forms with the cell centre.
pub fn cell_centre_gradient_volume_weighted<T: Real>(
    phi: &CellScalarField<T>,
    mesh: &PolygonalSurfaceMesh<T>,
) -> Result<Vec<Vec3<T>>> {
    let fg = face_full_gradient(phi, mesh)?;
    let g = mesh.cached();
    let topo = mesh.topology();
    let geometry = mesh.geometry();
    Ok((0..mesh.num_cells())
        .map(|c| {
            let centre = g.cell_centres[c];
            let (mut acc, mut wsum) = (Vec3::zero(), T::zero());
            for &f in &topo.cell_faces[c] {
                let [a, b] = topo.faces[f].vertices;
                let w = match *geometry {
                    Geometry::PlanePeriodic { .. } => {
                        let pa = geometry.min_image(mesh.points()[a] - centre);
                        let pb = geometry.min_image(mesh.points()[b] - centre);
                        pa.cross(pb).norm() / T::lit(2.0)
                    }
                    Geometry::Sphere { radius } => {
                        radius
                            * radius
                            * unit_triangle_excess(
                                centre.normalized(),
                                mesh.points()[a].normalized(),
                                mesh.points()[b].normalized(),
                            )
                            .abs()
                    }
                };
                acc += fg[f] * w;
                wsum = wsum + w;
            }
            let mean = acc / wsum;
            if geometry.is_sphere() {
                mean.reject(centre.normalized())
            } else {
                mean
            }
        })
        .collect())
}

/// Largest gradient jump between the two end points of any face, a roughness
/// measure for vertex gradients.
pub fn max_adjacent_vertex_jump<T: Real>(grad: &VertexVectorField<T>, mesh: &PolygonalSurfaceMesh<T>) -> T {
    mesh.topology()
        .faces
        .iter()
        .map(|f| (grad.values[f.vertices[0]] - grad.values[f.vertices[1]]).norm())
        .fold(T::zero(), T::max)
}
