//! P1 finite elements: assembly, SPD solves, Matérn scaling, field transfer
//! and the output functional.

use std::f64::consts::PI;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{nested_injection, Point, SimplicialMesh};

/// Systems below this many unknowns are factored directly.
pub const DIRECT_SOLVE_LIMIT: usize = 5000;

/// Parameters of the Matérn field `u = mean_shift + ũ`, where
/// `ũ - κ⁻²Δũ = η Ẇ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub dim: usize,
    pub sigma: f64,
    pub lambda: f64,
    pub nu: f64,
    pub kappa: f64,
    pub eta: f64,
    pub mean_shift: f64,
}

impl MaternParams {
    /// Zero-mean field with marginal standard deviation `sigma` and
    /// correlation length `lambda`; smoothness `ν = 2 - d/2`.
    pub fn new(dim: usize, sigma: f64, lambda: f64) -> Result<Self> {
        if dim == 0 || dim > 3 {
            return Err(Error::InvalidArgument(format!("dimension must be 1, 2 or 3 (got {dim})")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) || !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("need sigma >= 0 and lambda > 0 (got {sigma}, {lambda})")));
        }
        let nu = 2.0 - dim as f64 / 2.0;
        let kappa = (8.0 * nu).sqrt() / lambda;
        Ok(Self { dim, sigma, lambda, nu, kappa, eta: whittle_eta(dim, sigma, kappa), mean_shift: 0.0 })
    }

    /// Field whose exponential has the given mean and variance.
    pub fn lognormal(dim: usize, lambda: f64, mean: f64, variance: f64) -> Result<Self> {
        if !(mean > 0.0) || !(variance >= 0.0) {
            return Err(Error::InvalidArgument(format!("lognormal moments need mean > 0, variance >= 0 (got {mean}, {variance})")));
        }
        let (sigma2, shift) = lognormal_moments(mean, variance);
        Ok(Self { mean_shift: shift, ..Self::new(dim, sigma2.sqrt(), lambda)? })
    }

    pub fn with_eta(self, eta: f64) -> Self {
        Self { eta, ..self }
    }

    pub fn with_mean_shift(self, mean_shift: f64) -> Self {
        Self { mean_shift, ..self }
    }
}

/// `(σ², μ)` of a normal variable whose exponential has the given moments.
pub fn lognormal_moments(mean: f64, variance: f64) -> (f64, f64) {
    let sigma2 = (1.0 + variance / (mean * mean)).ln();
    (sigma2, mean.ln() - 0.5 * sigma2)
}

/// Scaling `η` that gives marginal variance `σ²` on `R^d` for the `k = 1`
/// equation: `η = σ (4π)^{d/4} / (κ^{d/2} Γ(ν)^{1/2})`.
pub fn whittle_eta(dim: usize, sigma: f64, kappa: f64) -> f64 {
    let nu = 2.0 - dim as f64 / 2.0;
    let d = dim as f64;
    sigma * (4.0 * PI).powf(d / 4.0) / (kappa.powf(d / 2.0) * libm::tgamma(nu).sqrt())
}

/// Matérn correlation `2^{1-ν}/Γ(ν) (κr)^ν K_ν(κr)`.
pub fn matern_correlation(r: f64, kappa: f64, nu: f64) -> f64 {
    let x = kappa * r.abs();
    if x == 0.0 {
        return 1.0;
    }
    2f64.powf(1.0 - nu) / libm::tgamma(nu) * x.powf(nu) * bessel_k(nu, x)
}

/// `K_ν(x) = ∫_0^∞ exp(-x cosh t) cosh(νt) dt`, trapezoidal rule (the
/// integrand decays doubly exponentially, so the rule converges geometrically).
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    let step: f64 = 0.02;
    let mut sum = 0.5 * (-x).exp();
    let mut t: f64 = step;
    loop {
        let term = (-x * t.cosh()).exp() * (nu * t).cosh();
        sum += term;
        if term < 1e-18 * sum || t > 50.0 {
            break;
        }
        t += step;
    }
    sum * step
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Square matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(i, j, _)) = triplets.iter().find(|(i, j, _)| *i >= n || *j >= n) {
            return Err(Error::IndexOutOfRange { index: i.max(j), len: n });
        }
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_offsets = vec![0; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                values.push(v);
                row_offsets[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(Self { n, row_offsets, cols, values })
    }

    pub fn identity(n: usize) -> Self {
        Self { n, row_offsets: (0..=n).collect(), cols: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(col, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `xᵀ A y`.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n).map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>()).sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= tol * (1.0 + v.abs())))
    }

    /// `a A + b B`.
    pub fn combine(&self, a: f64, other: &SparseMatrix, b: f64) -> Result<SparseMatrix> {
        if self.n != other.n {
            return Err(Error::LengthMismatch { expected: self.n, actual: other.n });
        }
        let mut t = self.triplets(a);
        t.extend(other.triplets(b));
        Self::from_triplets(self.n, t)
    }

    fn triplets(&self, scale: f64) -> Vec<(usize, usize, f64)> {
        (0..self.n).flat_map(|i| self.row(i).map(move |(j, v)| (i, j, scale * v))).collect()
    }

    /// Rows and columns `keep[i] = Some(new index)`.
    pub fn submatrix(&self, keep: &[Option<usize>], n_new: usize) -> Result<SparseMatrix> {
        let t = (0..self.n)
            .filter_map(|i| keep[i].map(|ni| (i, ni)))
            .flat_map(|(i, ni)| self.row(i).filter_map(move |(j, v)| keep[j].map(|nj| (ni, nj, v))))
            .collect();
        Self::from_triplets(n_new, t)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }
}

/// Volume and basis gradients of a P1 element.
fn element_gradients(dim: usize, p: &[Point; 3]) -> Result<(f64, [[f64; 2]; 3])> {
    let mut g = [[0.0; 2]; 3];
    let vol = match dim {
        1 => {
            let len = p[1][0] - p[0][0];
            g[0][0] = -1.0 / len;
            g[1][0] = 1.0 / len;
            len.abs()
        }
        _ => {
            let (e1, e2) = ([p[1][0] - p[0][0], p[1][1] - p[0][1]], [p[2][0] - p[0][0], p[2][1] - p[0][1]]);
            let det = e1[0] * e2[1] - e1[1] * e2[0];
            // gradients of barycentrics 1 and 2 are the rows of the inverse Jacobian
            g[1] = [e2[1] / det, -e2[0] / det];
            g[2] = [-e1[1] / det, e1[0] / det];
            g[0] = [-g[1][0] - g[2][0], -g[1][1] - g[2][1]];
            0.5 * det.abs()
        }
    };
    if !(vol > 0.0) || !vol.is_finite() {
        return Err(Error::DegenerateCell { cell: usize::MAX, volume: vol });
    }
    Ok((vol, g))
}

fn assemble<F>(mesh: &SimplicialMesh, mut local: F) -> Result<SparseMatrix>
where
    F: FnMut(usize, f64, &[[f64; 2]; 3], usize, usize) -> f64,
{
    let n = mesh.dim() + 1;
    let mut t = Vec::with_capacity(mesh.n_cells() * n * n);
    for c in 0..mesh.n_cells() {
        let (vol, g) = element_gradients(mesh.dim(), &mesh.cell_points(c))
            .map_err(|_| Error::DegenerateCell { cell: c, volume: mesh.cell_volume(c) })?;
        let verts = mesh.cell(c);
        for a in 0..n {
            for b in 0..n {
                t.push((verts[a], verts[b], local(c, vol, &g, a, b)));
            }
        }
    }
    SparseMatrix::from_triplets(mesh.n_vertices(), t)
}

/// P1 mass matrix on all vertices.
pub fn assemble_mass(mesh: &SimplicialMesh) -> Result<SparseMatrix> {
    let d = mesh.dim();
    let scale = 1.0 / ((d + 1) * (d + 2)) as f64;
    assemble(mesh, |_, vol, _, a, b| vol * scale * if a == b { 2.0 } else { 1.0 })
}

/// P1 stiffness matrix on all vertices with a per-cell coefficient.
pub fn assemble_stiffness(mesh: &SimplicialMesh, coefficient: Option<&[f64]>) -> Result<SparseMatrix> {
    if let Some(c) = coefficient {
        if c.len() != mesh.n_cells() {
            return Err(Error::LengthMismatch { expected: mesh.n_cells(), actual: c.len() });
        }
    }
    assemble(mesh, |c, vol, g, a, b| {
        let k = coefficient.map_or(1.0, |co| co[c]);
        k * vol * (g[a][0] * g[b][0] + g[a][1] * g[b][1])
    })
}

/// Restriction to interior vertices (homogeneous Dirichlet elimination).
pub fn restrict_to_interior(a: &SparseMatrix, mesh: &SimplicialMesh) -> Result<SparseMatrix> {
    let keep: Vec<Option<usize>> = (0..mesh.n_vertices()).map(|v| mesh.interior_index(v)).collect();
    a.submatrix(&keep, mesh.n_interior())
}

/// `M + κ⁻² K` on interior vertices.
pub fn assemble_helmholtz(mesh: &SimplicialMesh, kappa: f64) -> Result<SparseMatrix> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidArgument(format!("kappa must be positive (got {kappa})")));
    }
    let a = assemble_mass(mesh)?.combine(1.0, &assemble_stiffness(mesh, None)?, kappa.powi(-2))?;
    restrict_to_interior(&a, mesh)
}

/// Stiffness of `-∇·(e^u ∇p)` on interior vertices; `e^u` is evaluated at
/// cell centroids from the P1 field `u` given on all vertices.
pub fn assemble_lognormal_diffusion(mesh: &SimplicialMesh, u: &[f64]) -> Result<SparseMatrix> {
    if u.len() != mesh.n_vertices() {
        return Err(Error::LengthMismatch { expected: mesh.n_vertices(), actual: u.len() });
    }
    let n = mesh.dim() + 1;
    let coefficient = (0..mesh.n_cells())
        .map(|c| {
            let mid = mesh.cell(c).iter().map(|&v| u[v]).sum::<f64>() / n as f64;
            let k = mid.exp();
            if k.is_finite() && k > 0.0 {
                Ok(k)
            } else {
                Err(Error::NonFinite(format!("diffusion coefficient exp({mid}) on cell {c}")))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    restrict_to_interior(&assemble_stiffness(mesh, Some(&coefficient))?, mesh)
}

/// `∫ f φ_i` on interior vertices, with the edge-midpoint rule in 2D and
/// Simpson's rule in 1D (both exact for quadratics).
pub fn load_vector<F: Fn(Point) -> f64>(mesh: &SimplicialMesh, f: F) -> Vec<f64> {
    let mut b = vec![0.0; mesh.n_interior()];
    let n = mesh.dim() + 1;
    for c in 0..mesh.n_cells() {
        let p = mesh.cell_points(c);
        let vol = mesh.cell_volume(c);
        let verts = mesh.cell(c);
        // (weight, barycentric coordinates) of each quadrature point
        let rule: Vec<(f64, [f64; 3])> = if n == 2 {
            vec![(1.0 / 6.0, [1.0, 0.0, 0.0]), (4.0 / 6.0, [0.5, 0.5, 0.0]), (1.0 / 6.0, [0.0, 1.0, 0.0])]
        } else {
            vec![(1.0 / 3.0, [0.5, 0.5, 0.0]), (1.0 / 3.0, [0.0, 0.5, 0.5]), (1.0 / 3.0, [0.5, 0.0, 0.5])]
        };
        for (w, lam) in rule {
            let x = [
                (0..n).map(|a| lam[a] * p[a][0]).sum(),
                (0..n).map(|a| lam[a] * p[a][1]).sum(),
            ];
            let fx = f(x);
            for a in 0..n {
                if let Some(i) = mesh.interior_index(verts[a]) {
                    b[i] += vol * w * fx * lam[a];
                }
            }
        }
    }
    b
}

/// `∫ φ_i` on interior vertices (unit forcing).
pub fn unit_load(mesh: &SimplicialMesh) -> Vec<f64> {
    let n = mesh.dim() + 1;
    let mut b = vec![0.0; mesh.n_interior()];
    for c in 0..mesh.n_cells() {
        let share = mesh.cell_volume(c) / n as f64;
        for &v in mesh.cell(c) {
            if let Some(i) = mesh.interior_index(v) {
                b[i] += share;
            }
        }
    }
    b
}

/// Interior values extended by zero to all vertices.
pub fn extend_by_zero(mesh: &SimplicialMesh, interior: &[f64]) -> Vec<f64> {
    (0..mesh.n_vertices()).map(|v| mesh.interior_index(v).map_or(0.0, |i| interior[i])).collect()
}

/// Interior entries of a vector given on all vertices.
pub fn restrict_vector(mesh: &SimplicialMesh, full: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_interior()];
    for (v, x) in full.iter().enumerate() {
        if let Some(i) = mesh.interior_index(v) {
            out[i] = *x;
        }
    }
    out
}

/// Cholesky factor stored by rows over the matrix envelope.
#[derive(Clone, Debug)]
pub struct EnvelopeCholesky {
    first: Vec<usize>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        let n = a.n();
        let first: Vec<usize> = (0..n).map(|i| a.row(i).map(|(j, _)| j).min().unwrap_or(i).min(i)).collect();
        let mut offsets = vec![0; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + i + 1 - first[i];
        }
        let mut values = vec![0.0; offsets[n]];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    values[offsets[i] + j - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let (done, rest) = values.split_at_mut(offsets[i]);
            let row_i = &mut rest[..i + 1 - first[i]];
            for j in first[i]..i {
                let start = first[i].max(first[j]);
                let row_j = &done[offsets[j]..offsets[j + 1]];
                let mut s = row_i[j - first[i]];
                for k in start..j {
                    s -= row_i[k - first[i]] * row_j[k - first[j]];
                }
                row_i[j - first[i]] = s / row_j[j - first[j]];
            }
            let d = row_i[i - first[i]] - row_i[..i - first[i]].iter().map(|x| x * x).sum::<f64>();
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: i, value: d });
            }
            row_i[i - first[i]] = d.sqrt();
        }
        Ok(Self { first, offsets, values })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.first.len();
        let mut y = b.to_vec();
        for i in 0..n {
            let row = &self.values[self.offsets[i]..self.offsets[i + 1]];
            let f = self.first[i];
            let s: f64 = (f..i).map(|k| row[k - f] * y[k]).sum();
            y[i] = (y[i] - s) / row[i - f];
        }
        for i in (0..n).rev() {
            let row = &self.values[self.offsets[i]..self.offsets[i + 1]];
            let f = self.first[i];
            y[i] /= row[i - f];
            let xi = y[i];
            for k in f..i {
                y[k] -= row[k - f] * xi;
            }
        }
        y
    }
}

/// Jacobi-preconditioned CG. Stops when the preconditioned residual norm
/// `sqrt(rᵀ D⁻¹ r)` drops below `tol · ‖b‖`. Returns the iteration count.
pub fn pcg(a: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)> {
    let n = a.n();
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        if rz.sqrt() < tol * bnorm {
            return Ok((x, it));
        }
        let ap = a.matvec(&p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if rz.sqrt() < tol * bnorm {
        return Ok((x, max_iter));
    }
    Err(Error::SolverDiverged { iterations: max_iter, residual: rz.sqrt() / bnorm })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A factored (or CG-backed) SPD operator.
#[derive(Clone, Debug)]
pub enum SpdSolver {
    Direct { matrix: SparseMatrix, factor: EnvelopeCholesky },
    Iterative { matrix: SparseMatrix, tol: f64 },
}

impl SpdSolver {
    /// Direct factorization below [`DIRECT_SOLVE_LIMIT`] unknowns, Jacobi CG
    /// with relative tolerance `tol` above.
    pub fn new(matrix: SparseMatrix, tol: f64) -> Result<Self> {
        if matrix.n() < DIRECT_SOLVE_LIMIT {
            let factor = EnvelopeCholesky::new(&matrix)?;
            Ok(SpdSolver::Direct { matrix, factor })
        } else {
            Ok(SpdSolver::Iterative { matrix, tol })
        }
    }

    pub fn n(&self) -> usize {
        match self {
            SpdSolver::Direct { matrix, .. } | SpdSolver::Iterative { matrix, .. } => matrix.n(),
        }
    }

    /// Solves and checks `‖Ax - b‖ ≤ 1e-10 ‖b‖`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n() {
            return Err(Error::LengthMismatch { expected: self.n(), actual: b.len() });
        }
        let (matrix, x) = match self {
            SpdSolver::Direct { matrix, factor } => (matrix, factor.solve(b)),
            SpdSolver::Iterative { matrix, tol } => (matrix, pcg(matrix, b, *tol, 10 * matrix.n().max(1))?.0),
        };
        let res: Vec<f64> = matrix.matvec(&x).iter().zip(b).map(|(ax, b)| ax - b).collect();
        let (rn, bn) = (norm(&res), norm(b));
        if !(rn <= 1e-10 * bn) && bn > 0.0 {
            return Err(Error::SolverDiverged { iterations: 0, residual: rn / bn });
        }
        Ok(x)
    }
}

/// One-shot SPD solve.
pub fn solve_spd(a: &SparseMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    SpdSolver::new(a.clone(), tol)?.solve(b)
}

/// Helmholtz operator of one D mesh, factored once.
#[derive(Clone, Debug)]
pub struct HelmholtzSolver {
    solver: SpdSolver,
}

impl HelmholtzSolver {
    pub fn new(mesh: &SimplicialMesh, kappa: f64) -> Result<Self> {
        Ok(Self { solver: SpdSolver::new(assemble_helmholtz(mesh, kappa)?, 1e-12)? })
    }

    pub fn n_interior(&self) -> usize {
        self.solver.n()
    }

    /// Matérn field on all vertices of `mesh` from a white noise pairing
    /// vector `b` given on all vertices.
    pub fn matern_field(&self, mesh: &SimplicialMesh, b: &[f64], params: &MaternParams) -> Result<Vec<f64>> {
        if b.len() != mesh.n_vertices() {
            return Err(Error::LengthMismatch { expected: mesh.n_vertices(), actual: b.len() });
        }
        let rhs: Vec<f64> = restrict_vector(mesh, b).iter().map(|x| params.eta * x).collect();
        let u = self.solver.solve(&rhs)?;
        Ok(extend_by_zero(mesh, &u).into_iter().map(|x| x + params.mean_shift).collect())
    }
}

/// Values of a D-mesh field at the vertices of a nested G mesh.
pub fn transfer_field(d_mesh: &SimplicialMesh, values: &[f64], g_mesh: &SimplicialMesh) -> Result<Vec<f64>> {
    if values.len() != d_mesh.n_vertices() {
        return Err(Error::LengthMismatch { expected: d_mesh.n_vertices(), actual: values.len() });
    }
    let map = nested_injection(g_mesh, d_mesh)?;
    Ok(inject(values, &map))
}

/// Gathers `values[map[i]]`.
pub fn inject(values: &[f64], map: &[usize]) -> Vec<f64> {
    map.iter().map(|&j| values[j]).collect()
}

/// `‖p‖²_{L²}` via the mass matrix (`mass` on all vertices).
pub fn functional_l2sq(mass: &SparseMatrix, p: &[f64]) -> f64 {
    mass.inner(p, p)
}

/// Solution of `-∇·(e^u ∇p) = 1` with `p = 0` on the boundary, on all vertices.
pub fn solve_lognormal_diffusion(mesh: &SimplicialMesh, u: &[f64]) -> Result<Vec<f64>> {
    let a = assemble_lognormal_diffusion(mesh, u)?;
    let p = solve_spd(&a, &unit_load(mesh), 1e-12)?;
    Ok(extend_by_zero(mesh, &p))
}

/// CSV `vertex_index,x,y,value`.
pub fn write_field_csv<W: Write>(mesh: &SimplicialMesh, values: &[f64], mut w: W) -> io::Result<()> {
    writeln!(w, "vertex_index,x,y,value")?;
    for (i, (p, v)) in mesh.vertices().iter().zip(values).enumerate() {
        writeln!(w, "{i},{},{},{v:e}", p[0], p[1])?;
    }
    Ok(())
}
