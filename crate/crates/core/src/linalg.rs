//! Compressed sparse row matrices and a preconditioned conjugate-gradient
//! solver for the singular, symmetric Poisson systems of the fixed-point
//! iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Square matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for &(r, c, v) in triplets {
            rows[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut v = T::zero();
                while k < row.len() && row[k].0 == c {
                    v = v + row[k].1;
                    k += 1;
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        (0..self.n).flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v))).collect()
    }

    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.n) {
            let mut acc = T::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc = acc + self.values[k] * x[self.col_idx[k]];
            }
            *yr = acc;
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            values: self.values.iter().map(|&v| v * s).collect(),
            ..self.clone()
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n)
            .map(|r| self.row(r).find(|&(c, _)| c == r).map_or(T::zero(), |(_, v)| v))
            .collect()
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        (0..self.n).all(|r| {
            self.row(r).all(|(c, v)| {
                let vt = self.row(c).find(|&(cc, _)| cc == r).map_or(T::zero(), |(_, v)| v);
                (v - vt).abs() <= tol * v.abs().max(T::one())
            })
        })
    }
}

/// Normalised residual `Σ|b − Ax| / Σ(|b| + |Ax|)`; zero when both vanish.
pub fn residual_metric<T: Real>(b: &[T], ax: &[T]) -> T {
    let (mut num, mut den) = (T::zero(), T::zero());
    for (&bi, &ai) in b.iter().zip(ax) {
        num = num + (bi - ai).abs();
        den = den + bi.abs() + ai.abs();
    }
    if den == T::zero() {
        T::zero()
    } else {
        num / den
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    Jacobi,
    /// Diagonal incomplete Cholesky: IC(0) restricted to a modified diagonal.
    #[default]
    Dic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSolverSettings {
    pub preconditioner: Preconditioner,
    pub max_iterations: usize,
}

impl Default for LinearSolverSettings {
    fn default() -> Self {
        Self {
            preconditioner: Preconditioner::Dic,
            max_iterations: 5000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats<T> {
    pub iterations: usize,
    pub initial_residual: T,
    pub final_residual: T,
}

enum Precond<T> {
    Jacobi(Vec<T>),
    Dic(Vec<T>),
}

impl<T: Real> Precond<T> {
    fn new(a: &CsrMatrix<T>, kind: Preconditioner) -> Self {
        let diag = a.diagonal();
        match kind {
            Preconditioner::Jacobi => Precond::Jacobi(diag),
            Preconditioner::Dic => {
                let mut d = diag.clone();
                for r in 0..a.dim() {
                    let mut v = diag[r];
                    for (c, arc) in a.row(r) {
                        if c < r {
                            v = v - arc * arc / d[c];
                        }
                    }
                    // singular operators can drive a pivot to zero
                    d[r] = if v > diag[r] * T::lit(1e-8) { v } else { diag[r] };
                }
                Precond::Dic(d)
            }
        }
    }

    fn apply(&self, a: &CsrMatrix<T>, r: &[T], z: &mut [T]) {
        match self {
            Precond::Jacobi(d) => {
                for i in 0..r.len() {
                    z[i] = r[i] / d[i];
                }
            }
            Precond::Dic(d) => {
                let n = r.len();
                for i in 0..n {
                    let mut acc = r[i];
                    for (c, v) in a.row(i) {
                        if c < i {
                            acc = acc - v * z[c];
                        }
                    }
                    z[i] = acc / d[i];
                }
                for i in (0..n).rev() {
                    let mut acc = T::zero();
                    for (c, v) in a.row(i) {
                        if c > i {
                            acc = acc + v * z[c];
                        }
                    }
                    z[i] = z[i] - acc / d[i];
                }
            }
        }
    }
}

/// Preconditioned conjugate gradients for a symmetric positive
/// (semi-)definite `a`, starting from `x` and stopping once the normalised
/// residual is at most `tolerance`.
pub fn pcg<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    x: &mut [T],
    tolerance: T,
    settings: &LinearSolverSettings,
) -> Result<SolveStats<T>> {
    let n = a.dim();
    let mut ax = a.mul_vec(x);
    let initial_residual = residual_metric(b, &ax);
    if initial_residual <= tolerance {
        return Ok(SolveStats {
            iterations: 0,
            initial_residual,
            final_residual: initial_residual,
        });
    }
    let pre = Precond::new(a, settings.preconditioner);
    let mut r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    let mut z = vec![T::zero(); n];
    pre.apply(a, &r, &mut z);
    let mut p = z.clone();
    let mut rz: T = r.iter().zip(&z).map(|(&u, &v)| u * v).sum();
    let mut ap = vec![T::zero(); n];
    let mut residual = initial_residual;

    for it in 1..=settings.max_iterations {
        a.mul_vec_into(&p, &mut ap);
        let pap: T = p.iter().zip(&ap).map(|(&u, &v)| u * v).sum();
        if pap <= T::zero() || !pap.is_finite() {
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] = x[i] + step * p[i];
            r[i] = r[i] - step * ap[i];
        }
        // b − r tracks A·x without another product
        let (mut num, mut den) = (T::zero(), T::zero());
        for i in 0..n {
            num = num + r[i].abs();
            den = den + b[i].abs() + (b[i] - r[i]).abs();
        }
        residual = if den == T::zero() { T::zero() } else { num / den };
        if residual <= tolerance {
            a.mul_vec_into(x, &mut ax);
            return Ok(SolveStats {
                iterations: it,
                initial_residual,
                final_residual: residual_metric(b, &ax),
            });
        }
        pre.apply(a, &r, &mut z);
        let rz_new: T = r.iter().zip(&z).map(|(&u, &v)| u * v).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolveDiverged {
        iterations: settings.max_iterations,
        residual: residual.as_f64(),
        tolerance: tolerance.as_f64(),
    })
}
