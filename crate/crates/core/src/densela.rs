//! Small dense linear algebra kernel.
//!
//! Everything here works on row-major `f64` matrices of desk-scale size (a few
//! dozen rows at most). The Householder LQ factorization uses a sign
//! convention that keeps every diagonal entry of `L` nonnegative, which makes
//! the factors, and therefore the null-space bases taken from them, locally
//! continuous in the input matrix.

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative rank tolerance used by [`lq_householder`].
pub const RANK_TOL: f64 = 1e-10;
/// Relative pivot tolerance used by [`solve_dense`].
pub const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix is rank deficient at diagonal index {index} (value {value:e})")]
    RankDeficient { index: usize, value: f64 },
    #[error("matrix is singular at pivot {index} (value {value:e})")]
    Singular { index: usize, value: f64 },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Dense row-major matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LinalgError::InvalidArgument(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix {
            rows,
            cols,
            data: data.to_vec(),
        })
    }

    /// Builds a matrix from nested rows. All rows must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(LinalgError::InvalidArgument(format!(
                "row {bad} has length {} but row 0 has length {cols}",
                rows[bad].len()
            )));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
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

    /// Column vector from a slice.
    pub fn column(v: &[f64]) -> Self {
        Matrix {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = Matrix::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
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

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Largest absolute entry, 0 for an empty matrix.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scale(&self, alpha: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| alpha * x).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(LinalgError::InvalidArgument(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(LinalgError::InvalidArgument(format!(
                "cannot multiply {:?} by {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// `self * v`
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(LinalgError::InvalidArgument(format!(
                "cannot multiply {:?} by vector of length {}",
                self.shape(),
                v.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `selfᵀ * v`
    pub fn tr_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.rows != v.len() {
            return Err(LinalgError::InvalidArgument(format!(
                "cannot multiply transpose of {:?} by vector of length {}",
                self.shape(),
                v.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        Ok(out)
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(LinalgError::InvalidArgument(format!(
                "vstack column mismatch {} vs {}",
                self.cols, other.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    /// Places `other` to the right of `self`.
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(LinalgError::InvalidArgument(format!(
                "hstack row mismatch {} vs {}",
                self.rows, other.rows
            )));
        }
        Ok(Matrix::from_fn(self.rows, self.cols + other.cols, |i, j| {
            if j < self.cols {
                self[(i, j)]
            } else {
                other[(i, j - self.cols)]
            }
        }))
    }

    /// Columns `start..end` as a new matrix.
    pub fn col_range(&self, start: usize, end: usize) -> Matrix {
        Matrix::from_fn(self.rows, end - start, |i, j| self[(i, start + j)])
    }

    /// Copies `block` into `self` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Matrix) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    /// Largest entrywise deviation from the identity.
    pub fn identity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self[(i, j)] - target).abs());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &Matrix {
    type Output = Matrix;

    /// Panics on a shape mismatch; use [`Matrix::matmul`] for a checked product.
    fn mul(self, rhs: &Matrix) -> Matrix {
        self.matmul(rhs).expect("matrix shapes must agree")
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

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn axpy(alpha: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| alpha * a + b).collect()
}

pub fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Orthogonal LQ factorization `C·Q = (L ⋮ 0)`.
#[derive(Debug, Clone)]
pub struct QrFactorization {
    /// Orthogonal `n×n` factor.
    pub q: Matrix,
    /// Lower-triangular `m×m` factor with nonnegative diagonal.
    pub l: Matrix,
    /// Whether every diagonal entry of `l` exceeds the rank tolerance.
    pub rank_ok: bool,
}

impl QrFactorization {
    /// Index and value of the smallest diagonal entry of `L`.
    pub fn min_diagonal(&self) -> Option<(usize, f64)> {
        (0..self.l.rows())
            .map(|i| (i, self.l[(i, i)]))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Householder vector for `x` that maps it onto `+‖x‖·e₁`.
///
/// Returns `(v, beta)` with `v[0] = 1` and `H = I − beta·v·vᵀ`. Cancellation in
/// `x₀ − ‖x‖` is avoided by the rationalized form when `x₀ > 0`.
fn house(x: &[f64]) -> (Vec<f64>, f64) {
    let sigma: f64 = x[1..].iter().map(|t| t * t).sum();
    let mut v = x.to_vec();
    v[0] = 1.0;
    if sigma == 0.0 {
        if x[0] >= 0.0 {
            return (v, 0.0);
        }
        return (v, 2.0);
    }
    let mu = (x[0] * x[0] + sigma).sqrt();
    let v0 = if x[0] <= 0.0 {
        x[0] - mu
    } else {
        -sigma / (x[0] + mu)
    };
    let beta = 2.0 * v0 * v0 / (sigma + v0 * v0);
    for t in v[1..].iter_mut() {
        *t /= v0;
    }
    (v, beta)
}

/// LQ factorization of an `m×n` matrix with `m ≤ n`.
///
/// Computed as a Householder QR of `Cᵀ`. Every reflection sends its pivot
/// column to a nonnegative multiple of the unit vector, so `L` has a
/// nonnegative diagonal without any after-the-fact sign flips.
pub fn lq_householder(c: &Matrix) -> Result<QrFactorization> {
    let (m, n) = c.shape();
    if m > n {
        return Err(LinalgError::InvalidArgument(format!(
            "LQ factorization needs rows <= cols, got {m}x{n}"
        )));
    }
    if !c.is_finite() {
        return Err(LinalgError::InvalidArgument(
            "matrix has non-finite entries".into(),
        ));
    }
    // r holds Cᵀ and is reduced in place to (R; 0) with R = Lᵀ.
    let mut r = c.transpose();
    let mut q = Matrix::identity(n);
    for k in 0..m {
        let x: Vec<f64> = (k..n).map(|i| r[(i, k)]).collect();
        let (v, beta) = house(&x);
        if beta == 0.0 {
            continue;
        }
        // r[k.., k..] -= beta v (vᵀ r[k.., k..])
        for j in k..m {
            let w: f64 = (k..n).map(|i| v[i - k] * r[(i, j)]).sum();
            for i in k..n {
                r[(i, j)] -= beta * v[i - k] * w;
            }
        }
        // q[:, k..] -= beta (q[:, k..] v) vᵀ
        for i in 0..n {
            let w: f64 = (k..n).map(|j| q[(i, j)] * v[j - k]).sum();
            for j in k..n {
                q[(i, j)] -= beta * w * v[j - k];
            }
        }
        for i in k + 1..n {
            r[(i, k)] = 0.0;
        }
    }
    let l = Matrix::from_fn(m, m, |i, j| if j <= i { r[(j, i)] } else { 0.0 });
    let tol = RANK_TOL * c.max_abs().max(1.0);
    let rank_ok = (0..m).all(|i| l[(i, i)] > tol);
    Ok(QrFactorization { q, l, rank_ok })
}

fn rank_error(f: &QrFactorization, c: &Matrix) -> LinalgError {
    let tol = RANK_TOL * c.max_abs().max(1.0);
    let (index, value) = (0..f.l.rows())
        .map(|i| (i, f.l[(i, i)]))
        .find(|&(_, v)| v <= tol)
        .or_else(|| f.min_diagonal())
        .unwrap_or((0, 0.0));
    LinalgError::RankDeficient { index, value }
}

/// Orthonormal basis of `ker C` for a full-row-rank `C`, taken as the trailing
/// `n − m` columns of the LQ factor `Q`.
pub fn nullspace_basis(c: &Matrix) -> Result<Matrix> {
    let f = lq_householder(c)?;
    if !f.rank_ok {
        return Err(rank_error(&f, c));
    }
    Ok(f.q.col_range(c.rows(), c.cols()))
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    /// Factors `a`, rejecting any pivot below `rel_tol × max|a|`.
    pub fn factor(a: &Matrix, rel_tol: f64) -> Result<Lu> {
        let n = a.rows();
        if a.cols() != n {
            return Err(LinalgError::InvalidArgument(format!(
                "LU needs a square matrix, got {:?}",
                a.shape()
            )));
        }
        if !a.is_finite() {
            return Err(LinalgError::InvalidArgument(
                "matrix has non-finite entries".into(),
            ));
        }
        let tol = rel_tol * a.max_abs();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| lu[(i, k)].abs().total_cmp(&lu[(j, k)].abs()))
                .unwrap_or(k);
            let pivot = lu[(p, k)];
            if pivot.abs() <= tol || pivot == 0.0 {
                return Err(LinalgError::Singular {
                    index: k,
                    value: pivot,
                });
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                sign = -sign;
            }
            for i in k + 1..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        lu[(i, j)] -= factor * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Lu { lu, perm, sign })
    }

    pub fn determinant(&self) -> f64 {
        (0..self.lu.rows()).fold(self.sign, |d, i| d * self.lu[(i, i)])
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.lu.rows();
        if rhs.len() != n {
            return Err(LinalgError::InvalidArgument(format!(
                "rhs has length {} but matrix is {n}x{n}",
                rhs.len()
            )));
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[(i, j)] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[(i, j)] * x[j];
            }
            x[i] /= self.lu[(i, i)];
        }
        Ok(x)
    }

    /// Inverse, column by column.
    pub fn inverse(&self) -> Result<Matrix> {
        let n = self.lu.rows();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve(&e)?;
            for (i, v) in col.into_iter().enumerate() {
                inv[(i, j)] = v;
            }
            e[j] = 0.0;
        }
        Ok(inv)
    }
}

/// Solves `A·x = rhs` by partial-pivoting LU.
pub fn solve_dense(a: &Matrix, rhs: &[f64]) -> Result<Vec<f64>> {
    Lu::factor(a, PIVOT_TOL)?.solve(rhs)
}

/// Moore–Penrose inverse `Cᵀ(CCᵀ)⁻¹` of a full-row-rank matrix.
///
/// Evaluated through the LQ factors as `Q₁·L⁻¹`, which is the same matrix
/// without forming `CCᵀ`.
pub fn pseudo_inverse_full_row_rank(c: &Matrix) -> Result<Matrix> {
    let (m, n) = c.shape();
    let f = lq_householder(c)?;
    if !f.rank_ok {
        return Err(rank_error(&f, c));
    }
    // Solve X·L = Q₁ for X (n×m) by forward substitution on the columns of L.
    let mut x = Matrix::zeros(n, m);
    for i in 0..n {
        for j in (0..m).rev() {
            let mut acc = f.q[(i, j)];
            for k in j + 1..m {
                acc -= x[(i, k)] * f.l[(k, j)];
            }
            x[(i, j)] = acc / f.l[(j, j)];
        }
    }
    Ok(x)
}

/// Thin singular value decomposition `C = U·diag(σ)·Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Works on the orientation with at least as many rows as columns, so the
/// returned `sigma` has `min(m, n)` entries in descending order.
pub fn svd_jacobi(c: &Matrix) -> Result<Svd> {
    if !c.is_finite() {
        return Err(LinalgError::InvalidArgument(
            "matrix has non-finite entries".into(),
        ));
    }
    let transposed = c.rows() < c.cols();
    let mut a = if transposed { c.transpose() } else { c.clone() };
    let (m, n) = a.shape();
    let mut v = Matrix::identity(n);
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    alpha += a[(i, p)] * a[(i, p)];
                    beta += a[(i, q)] * a[(i, q)];
                    gamma += a[(i, p)] * a[(i, q)];
                }
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for i in 0..m {
                    let (ap, aq) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = cs * ap - sn * aq;
                    a[(i, q)] = sn * ap + cs * aq;
                }
                for i in 0..n {
                    let (vp, vq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = cs * vp - sn * vq;
                    v[(i, q)] = sn * vp + cs * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| norm2(&a.col(j))).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let u = Matrix::from_fn(m, n, |i, k| {
        let j = order[k];
        if norms[j] > 0.0 {
            a[(i, j)] / norms[j]
        } else {
            0.0
        }
    });
    let v = Matrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    Ok(if transposed {
        Svd { u: v, sigma, v: u }
    } else {
        Svd { u, sigma, v }
    })
}

/// Smallest singular value, `+∞` for a matrix with no rows or no columns.
pub fn smallest_singular_value(c: &Matrix) -> Result<f64> {
    if c.rows() == 0 || c.cols() == 0 {
        return Ok(f64::INFINITY);
    }
    let svd = svd_jacobi(c)?;
    Ok(svd.sigma.last().copied().unwrap_or(f64::INFINITY))
}

/// Ratio of largest to smallest singular value (`+∞` when singular).
pub fn condition_number(c: &Matrix) -> Result<f64> {
    if c.rows() == 0 || c.cols() == 0 {
        return Ok(1.0);
    }
    let svd = svd_jacobi(c)?;
    let hi = svd.sigma[0];
    let lo = *svd.sigma.last().unwrap();
    Ok(if lo == 0.0 { f64::INFINITY } else { hi / lo })
}

/// General pseudo-inverse via the Jacobi SVD, truncating singular values
/// below `rel_tol × σ_max`.
pub fn pseudo_inverse(c: &Matrix, rel_tol: f64) -> Result<Matrix> {
    let (m, n) = c.shape();
    if m == 0 || n == 0 {
        return Ok(Matrix::zeros(n, m));
    }
    let svd = svd_jacobi(c)?;
    let cut = rel_tol * svd.sigma[0];
    let mut out = Matrix::zeros(n, m);
    for (k, &s) in svd.sigma.iter().enumerate() {
        if s <= cut || s == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..m {
                out[(i, j)] += svd.v[(i, k)] * svd.u[(j, k)] / s;
            }
        }
    }
    Ok(out)
}
