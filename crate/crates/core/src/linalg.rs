//! Dense linear algebra and random sampling.
//!
//! Everything here is small-matrix, row-major, `f64`. The eigensolver is a
//! cyclic Jacobi method, the linear solver a partially pivoted LU, and the
//! pseudo-inverse and condition number are both read off the symmetric
//! eigendecomposition.

use std::fmt;
use std::ops::{Deref, DerefMut, Index, IndexMut};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Maximum number of Jacobi sweeps before giving up.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Off-diagonal Frobenius norm (relative to the matrix norm) at which Jacobi stops.
pub const JACOBI_TOL: f64 = 1e-12;
/// Relative pivot magnitude below which a matrix is treated as singular.
pub const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is singular to working precision (pivot {pivot} at column {column})")]
    Singular { column: usize, pivot: f64 },
    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },
    #[error("non-finite entry at position {0}")]
    NonFinite(usize),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// A dense real vector.
#[derive(Clone, PartialEq, Default)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(n: usize) -> Self {
        Vector(vec![0.0; n])
    }

    /// Builds a vector, rejecting non-finite entries.
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite(i));
        }
        Ok(Vector(data))
    }

    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = Self::zeros(n);
        v.0[i] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector(self.0.iter().map(|x| s * x).collect())
    }

    pub fn add(&self, other: &Vector) -> Vector {
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &Vector) -> Vector {
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + s * b).collect())
    }

    pub fn outer(&self, other: &Vector) -> Matrix {
        Matrix::from_fn(self.dim(), other.dim(), |i, j| self.0[i] * other.0[j])
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl From<&[f64]> for Vector {
    fn from(v: &[f64]) -> Self {
        Vector(v.to_vec())
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity, or `None` when either vector has norm below `1e-12`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na <= 1e-12 || nb <= 1e-12 {
        return None;
    }
    Some((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// A dense row-major real matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LinalgError::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite(i));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Panics on ragged input; intended for literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Matrix {
            rows: r,
            cols: c,
            data: rows.iter().flat_map(|row| row.iter().copied()).collect(),
        }
    }

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        Self::from_fn(n, n, |i, j| if i == j { entries[i] } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vector {
        Vector((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn diagonal(&self) -> Vector {
        Vector((0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| s * x).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in add");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in sub");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// `self + s * I`
    pub fn shift_diagonal(&self, s: f64) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out[(i, i)] += s;
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "shape mismatch in matmul");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vector {
        assert_eq!(self.cols, v.len(), "shape mismatch in matvec");
        Vector((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `selfᵀ v`
    pub fn t_matvec(&self, v: &[f64]) -> Vector {
        assert_eq!(self.rows, v.len(), "shape mismatch in t_matvec");
        let mut out = vec![0.0; self.cols];
        for (i, vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        Vector(out)
    }

    /// `xᵀ self x`
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        assert!(self.is_square() && self.rows == x.len());
        (0..self.rows).map(|i| x[i] * dot(self.row(i), x)).sum()
    }

    pub fn symmetric_part(&self) -> Matrix {
        assert!(self.is_square());
        Matrix::from_fn(self.rows, self.cols, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Eigendecomposition of a symmetric matrix, `A = Q diag(values) Qᵀ`.
#[derive(Debug, Clone)]
pub struct SymEigResult {
    /// Ascending.
    pub eigenvalues: Vector,
    /// Orthonormal eigenvectors stored as columns, in the same order as `eigenvalues`.
    pub eigenvectors: Matrix,
}

impl SymEigResult {
    pub fn eigenvector(&self, k: usize) -> Vector {
        self.eigenvectors.column(k)
    }

    /// `Q diag(f(λ)) Qᵀ`
    pub fn spectral_map(&self, mut f: impl FnMut(f64) -> f64) -> Matrix {
        let n = self.eigenvalues.dim();
        let q = &self.eigenvectors;
        let mapped: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = Matrix::zeros(n, n);
        for (k, &fk) in mapped.iter().enumerate() {
            if fk == 0.0 {
                continue;
            }
            for i in 0..n {
                let qik = fk * q[(i, k)];
                for j in 0..n {
                    out[(i, j)] += qik * q[(j, k)];
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> Matrix {
        self.spectral_map(|l| l)
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.norm_inf()
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// The input is symmetrized as `(A + Aᵀ)/2` before decomposition. Eigenvalues
/// come back ascending with matching eigenvector columns.
pub fn sym_eig(a: &Matrix) -> Result<SymEigResult> {
    if !a.is_square() {
        return Err(LinalgError::Dimension(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let n = a.rows;
    let mut w = a.symmetric_part();
    let mut v = Matrix::identity(n);
    let scale = w.frobenius_norm();

    let off_norm = |w: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += w[(i, j)] * w[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    loop {
        // A NaN scale falls through to the sweep limit and reports NoConvergence.
        if n < 2 || scale == 0.0 || off_norm(&w) <= JACOBI_TOL * scale {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(LinalgError::NoConvergence {
                sweeps,
                off_norm: off_norm(&w),
            });
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = w[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = w[(p, p)];
                let aqq = w[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // W <- Jᵀ W J, touching rows/cols p and q only.
                for k in 0..n {
                    let wkp = w[(k, p)];
                    let wkq = w[(k, q)];
                    w[(k, p)] = c * wkp - s * wkq;
                    w[(k, q)] = s * wkp + c * wkq;
                }
                for k in 0..n {
                    let wpk = w[(p, k)];
                    let wqk = w[(q, k)];
                    w[(p, k)] = c * wpk - s * wqk;
                    w[(q, k)] = s * wpk + c * wqk;
                }
                w[(p, q)] = 0.0;
                w[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[(i, i)].total_cmp(&w[(j, j)]));
    let eigenvalues = Vector(order.iter().map(|&i| w[(i, i)]).collect());
    let eigenvectors = Matrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    Ok(SymEigResult {
        eigenvalues,
        eigenvectors,
    })
}

/// LU factorization with partial pivoting, `PA = LU`.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Lu> {
        if !a.is_square() {
            return Err(LinalgError::Dimension(format!(
                "LU needs a square matrix, got {}x{}",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let threshold = PIVOT_TOL * a.max_abs();
        for k in 0..n {
            let (piv_row, piv_val) = (k..n)
                .map(|i| (i, lu[(i, k)]))
                .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
                .expect("non-empty pivot column");
            if piv_val.abs() <= threshold || piv_val == 0.0 {
                return Err(LinalgError::Singular {
                    column: k,
                    pivot: piv_val,
                });
            }
            if piv_row != k {
                perm.swap(k, piv_row);
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(piv_row, j)];
                    lu[(piv_row, j)] = tmp;
                }
            }
            for i in (k + 1)..n {
                let f = lu[(i, k)] / piv_val;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        lu[(i, j)] -= f * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Lu { n, lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vector> {
        if b.len() != self.n {
            return Err(LinalgError::Dimension(format!(
                "right-hand side has length {}, expected {}",
                b.len(),
                self.n
            )));
        }
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s = dot(&self.lu.row(i)[..i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s = dot(&self.lu.row(i)[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / self.lu[(i, i)];
        }
        Ok(Vector(x))
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &Matrix) -> Result<Matrix> {
        if b.rows != self.n {
            return Err(LinalgError::Dimension(format!(
                "right-hand side has {} rows, expected {}",
                b.rows, self.n
            )));
        }
        let mut out = Matrix::zeros(self.n, b.cols);
        for j in 0..b.cols {
            let x = self.solve(&b.column(j))?;
            for i in 0..self.n {
                out[(i, j)] = x[i];
            }
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Result<Matrix> {
        self.solve_matrix(&Matrix::identity(self.n))
    }
}

/// Solves `A x = b` by partially pivoted LU.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vector> {
    Lu::factor(a)?.solve(b)
}

pub fn inverse(a: &Matrix) -> Result<Matrix> {
    Lu::factor(a)?.inverse()
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix.
///
/// Eigenvalues with `|λ| <= tol * max|λ|` are treated as zero.
pub fn pinv_sym(a: &Matrix, tol: f64) -> Result<Matrix> {
    let eig = sym_eig(a)?;
    Ok(pinv_from_eig(&eig, tol))
}

pub fn pinv_from_eig(eig: &SymEigResult, tol: f64) -> Matrix {
    let cutoff = tol * eig.max_abs_eigenvalue();
    eig.spectral_map(|l| if l.abs() > cutoff && l != 0.0 { 1.0 / l } else { 0.0 })
}

/// Ratio of largest to smallest absolute eigenvalue of a symmetric matrix.
pub fn cond_sym(a: &Matrix) -> Result<f64> {
    let eig = sym_eig(a)?;
    let abs: Vec<f64> = eig.eigenvalues.iter().map(|l| l.abs()).collect();
    let max = abs.iter().cloned().fold(0.0, f64::max);
    let (idx, min) = abs
        .iter()
        .cloned()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .ok_or_else(|| LinalgError::Dimension("empty matrix".into()))?;
    if min < 1e-12 * max || max == 0.0 {
        return Err(LinalgError::Singular {
            column: idx,
            pivot: eig.eigenvalues[idx],
        });
    }
    Ok(max / min)
}

/// Deterministic random stream.
///
/// Backed by ChaCha8, which is seed-stable across platforms; a stream can be
/// split into independent substreams addressed by index.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream number `index` under the same seed.
    ///
    /// Substreams of a substream are derived by mixing the index into the seed.
    pub fn substream(&self, index: u64) -> Rng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(index.wrapping_add(1));
        let child_seed = inner.next_u64() ^ self.seed.rotate_left(17);
        let mut inner = ChaCha8Rng::seed_from_u64(child_seed);
        inner.set_stream(index.wrapping_add(1));
        Rng {
            seed: child_seed,
            inner,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal (ziggurat).
    pub fn gaussian(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.gaussian();
        }
    }

    pub fn gaussian_vector(&mut self, n: usize) -> Vector {
        let mut v = vec![0.0; n];
        self.fill_gaussian(&mut v);
        Vector(v)
    }

    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        let mut data = vec![0.0; rows * cols];
        self.fill_gaussian(&mut data);
        Matrix { rows, cols, data }
    }

    /// Unit vector uniformly distributed on the sphere.
    pub fn unit_vector(&mut self, n: usize) -> Vector {
        loop {
            let v = self.gaussian_vector(n);
            let norm = v.norm();
            if norm > 1e-12 {
                return v.scale(1.0 / norm);
            }
        }
    }
}

/// `n` i.i.d. standard normal draws.
pub fn sample_gaussian(rng: &mut Rng, n: usize) -> Vector {
    rng.gaussian_vector(n)
}

/// Random orthogonal matrix from the eigenvectors of a random symmetric matrix.
pub fn random_orthogonal(rng: &mut Rng, n: usize) -> Matrix {
    let g = rng.gaussian_matrix(n, n);
    sym_eig(&g.symmetric_part())
        .expect("Jacobi converges on random symmetric input")
        .eigenvectors
}

/// `Q diag(d) Qᵀ` for a random orthogonal `Q`.
pub fn random_with_spectrum(rng: &mut Rng, spectrum: &[f64]) -> Matrix {
    let q = random_orthogonal(rng, spectrum.len());
    SymEigResult {
        eigenvalues: Vector(spectrum.to_vec()),
        eigenvectors: q,
    }
    .reconstruct()
}
