//! Dense double-precision linear algebra.
//!
//! Matrices are stored row-major, and row-major vectorization is the one
//! `vec(·)` convention used across the crate (parameter flattening and the
//! Kronecker blocks of the Gauss-Newton factor both depend on it).

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math;

/// Default relative tolerance for [`spectral_norm_power`].
pub const POWER_TOL: f64 = 1e-10;
/// Default iteration cap for [`spectral_norm_power`].
pub const POWER_MAX_ITER: usize = 10_000;
/// Default seed for the power-iteration start vector.
pub const POWER_SEED: u64 = 0x5eed;
/// Largest dimension accepted by the Jacobi eigensolver.
pub const SYM_EIG_MAX_DIM: usize = 2048;
/// Absolute asymmetry accepted by the Jacobi eigensolver.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Wraps row-major `data`; its length must be `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "Matrix::from_vec",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "Matrix::from_rows",
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Row-major entries.
    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch {
                context: "Matrix::matmul",
                expected: self.cols,
                found: rhs.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "Matrix::matvec",
                expected: self.cols,
                found: v.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `selfᵀ · v`.
    pub fn matvec_t(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch {
                context: "Matrix::matvec_t",
                expected: self.rows,
                found: v.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            axpy(vi, self.row(i), &mut out);
        }
        Ok(out)
    }

    /// `self · selfᵀ` (rows × rows), exactly symmetric.
    pub fn outer_gram(&self) -> Matrix {
        let mut g = Matrix::zeros(self.rows, self.rows);
        for i in 0..self.rows {
            for j in i..self.rows {
                let v = dot(self.row(i), self.row(j));
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// `selfᵀ · self` (cols × cols), exactly symmetric.
    pub fn inner_gram(&self) -> Matrix {
        let mut g = Matrix::zeros(self.cols, self.cols);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..self.cols {
                let a = row[i];
                if a == 0.0 {
                    continue;
                }
                for j in i..self.cols {
                    g.data[i * self.cols + j] += a * row[j];
                }
            }
        }
        for i in 0..self.cols {
            for j in 0..i {
                g.data[i * self.cols + j] = g.data[j * self.cols + i];
            }
        }
        g
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|m_ij - m_ji|`; infinite for non-square matrices.
    pub fn max_asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn norm2(v: &[f64]) -> f64 {
    math::sqrt(dot(v, v))
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl core::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::new();
        for v in iter {
            s.add(v);
        }
        s
    }
}

pub fn frobenius_norm(m: &Matrix) -> f64 {
    norm2(m.as_slice())
}

/// Largest singular value with the default tolerance, iteration cap and seed.
pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    spectral_norm_power(m, POWER_TOL, POWER_MAX_ITER, POWER_SEED)
}

/// Largest singular value of `m` by power iteration on the smaller of
/// `mᵀm` and `m mᵀ`, started from a seeded uniform random vector.
///
/// Iteration stops once the Rayleigh quotient changes by at most
/// `tol` relative to its current value.
pub fn spectral_norm_power(m: &Matrix, tol: f64, max_iter: usize, seed: u64) -> Result<f64> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::InvalidArgument("spectral norm of an empty matrix".into()));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::InvalidArgument(
            "spectral norm needs tol > 0 and max_iter >= 1".into(),
        ));
    }
    let gram = if m.rows() <= m.cols() {
        m.outer_gram()
    } else {
        m.inner_gram()
    };
    let n = gram.rows();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let nv = norm2(&v);
    if nv == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= nv);
    }

    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    for iter in 0..max_iter {
        let w = gram.matvec(&v)?;
        let next = dot(&v, &w);
        let wn = norm2(&w);
        if wn == 0.0 {
            return Ok(0.0);
        }
        residual = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - next * vi) * (wi - next * vi))
            .sum::<f64>();
        residual = math::sqrt(residual);
        let converged = iter > 0 && (next - lambda).abs() <= tol * next.abs();
        lambda = next;
        v = w.into_iter().map(|x| x / wn).collect();
        if converged {
            return Ok(math::sqrt(lambda.max(0.0)));
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        estimate: math::sqrt(lambda.max(0.0)),
        residual,
    })
}

/// Eigenvalues (descending) and matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    /// Column `j` is the eigenvector for `values[j]`.
    pub vectors: Matrix,
}

/// Full spectrum of a small symmetric matrix, in descending order.
pub fn sym_eig_small(m: &Matrix) -> Result<Vec<f64>> {
    sym_eig(m).map(|e| e.values)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn sym_eig(m: &Matrix) -> Result<SymEig> {
    let n = m.rows();
    if n != m.cols() {
        return Err(Error::DimensionMismatch {
            context: "sym_eig (square)",
            expected: n,
            found: m.cols(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("eigenvalues of an empty matrix".into()));
    }
    if n > SYM_EIG_MAX_DIM {
        return Err(Error::TooLarge {
            what: "symmetric eigenproblem",
            size: n,
            limit: SYM_EIG_MAX_DIM,
        });
    }
    let asym = m.max_asymmetry();
    if !(asym <= SYMMETRY_TOL) {
        return Err(Error::NotSymmetric {
            max_asymmetry: asym,
        });
    }

    // Work on the exactly symmetrized copy.
    let mut a = Matrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let mut q = Matrix::identity(n);
    let scale = frobenius_norm(&a);
    const MAX_SWEEPS: usize = 100;

    if scale > 0.0 {
        let mut sweeps = 0;
        loop {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum();
            if math::sqrt(off) <= 1e-15 * scale {
                break;
            }
            if sweeps == MAX_SWEEPS {
                return Err(Error::NotConverged {
                    iterations: sweeps,
                    estimate: scale,
                    residual: math::sqrt(off),
                });
            }
            sweeps += 1;
            for p in 0..n {
                for r in (p + 1)..n {
                    jacobi_rotate(&mut a, &mut q, p, r);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| q[(i, order[j])]);
    Ok(SymEig { values, vectors })
}

/// Annihilates `a[p][r]` with a plane rotation, accumulating it into `q`.
fn jacobi_rotate(a: &mut Matrix, q: &mut Matrix, p: usize, r: usize) {
    let apr = a[(p, r)];
    if apr == 0.0 {
        return;
    }
    let app = a[(p, p)];
    let arr = a[(r, r)];
    let theta = (arr - app) / (2.0 * apr);
    let t = if theta.is_infinite() {
        0.0
    } else {
        let t = 1.0 / (theta.abs() + math::sqrt(theta * theta + 1.0));
        if theta < 0.0 {
            -t
        } else {
            t
        }
    };
    if t == 0.0 {
        a[(p, r)] = 0.0;
        a[(r, p)] = 0.0;
        return;
    }
    let c = 1.0 / math::sqrt(t * t + 1.0);
    let s = t * c;
    let n = a.rows();

    for k in 0..n {
        let akp = a[(k, p)];
        let akr = a[(k, r)];
        a[(k, p)] = c * akp - s * akr;
        a[(k, r)] = s * akp + c * akr;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let ark = a[(r, k)];
        a[(p, k)] = c * apk - s * ark;
        a[(r, k)] = s * apk + c * ark;
    }
    a[(p, r)] = 0.0;
    a[(r, p)] = 0.0;

    for k in 0..n {
        let qkp = q[(k, p)];
        let qkr = q[(k, r)];
        q[(k, p)] = c * qkp - s * qkr;
        q[(k, r)] = s * qkp + c * qkr;
    }
}

/// Row-major `vec(g xᵀ)`: entry `i * x.len() + j` is `g[i] * x[j]`.
pub fn kron_row_block(g_row: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(g_row.len() * x.len());
    for &gi in g_row {
        out.extend(x.iter().map(|&xj| gi * xj));
    }
    out
}
