//! Dense column-major kernels: storage, Householder QR, Givens rotations,
//! one-sided Jacobi singular values and column scaling.
//!
//! Every routine accumulates in a fixed, sequential order so results are
//! bit-reproducible for a given input on a given platform.

use std::ops::Range;

use crate::error::{Error, Result};

/// Unit roundoff of IEEE double precision.
pub const UNIT_ROUNDOFF: f64 = f64::EPSILON / 2.0;

/// Relative off-diagonal threshold at which a Jacobi sweep stops rotating.
pub const JACOBI_TOL: f64 = 1e-15;

/// Maximum number of one-sided Jacobi sweeps.
pub const JACOBI_MAX_SWEEPS: usize = 60;

/// Column count above which the Jacobi SVD first reduces the input to its
/// triangular factor.
const JACOBI_QR_PRECONDITION_COLS: usize = 24;

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y) {
        acc += a * b;
    }
    acc
}

/// Euclidean norm, rescaled when the plain sum of squares would over- or
/// underflow.
pub fn norm2(x: &[f64]) -> f64 {
    let ss = dot(x, x);
    if ss.is_finite() && ss > 1e-280 {
        return ss.sqrt();
    }
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let mut acc = 0.0;
    for v in x {
        let t = v / scale;
        acc += t * t;
    }
    scale * acc.sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Dense matrix stored column by column.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMat {
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
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from column-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn from_column_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "DenseMat::from_column_major",
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("DenseMat::from_column_major"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of rows. Panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        Self::from_fn(nrows, ncols, |i, j| {
            assert_eq!(rows[i].len(), ncols, "ragged rows");
            rows[i][j]
        })
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Self {
        let mut m = Self::zeros(rows, 0);
        for c in columns {
            m.push_col(c);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Mutable access to two distinct columns at once.
    pub fn col_pair_mut(&mut self, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
        assert!(p < q && q < self.cols);
        let (left, right) = self.data.split_at_mut(q * self.rows);
        (&mut left[p * self.rows..(p + 1) * self.rows], &mut right[..self.rows])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copy of the columns in `range`.
    pub fn columns(&self, range: Range<usize>) -> DenseMat {
        assert!(range.end <= self.cols);
        DenseMat {
            rows: self.rows,
            cols: range.len(),
            data: self.data[range.start * self.rows..range.end * self.rows].to_vec(),
        }
    }

    /// Copy of the leading `rows × cols` submatrix.
    pub fn leading(&self, rows: usize, cols: usize) -> DenseMat {
        assert!(rows <= self.rows && cols <= self.cols);
        DenseMat::from_fn(rows, cols, |i, j| self.get(i, j))
    }

    pub fn submatrix(&self, rows: Range<usize>, cols: Range<usize>) -> DenseMat {
        assert!(rows.end <= self.rows && cols.end <= self.cols);
        DenseMat::from_fn(rows.len(), cols.len(), |i, j| {
            self.get(rows.start + i, cols.start + j)
        })
    }

    pub fn truncate_cols(&mut self, cols: usize) {
        if cols < self.cols {
            self.cols = cols;
            self.data.truncate(cols * self.rows);
        }
    }

    pub fn push_col(&mut self, col: &[f64]) {
        if self.cols == 0 && self.data.is_empty() && self.rows == 0 {
            self.rows = col.len();
        }
        assert_eq!(col.len(), self.rows, "column length mismatch");
        self.data.extend_from_slice(col);
        self.cols += 1;
    }

    pub fn append_cols(&mut self, other: &DenseMat) {
        if self.cols == 0 {
            self.rows = other.rows;
        }
        assert_eq!(self.rows, other.rows, "row count mismatch");
        self.data.extend_from_slice(&other.data);
        self.cols += other.cols;
    }

    /// Grows a square-or-rectangular matrix to `rows × cols`, padding with zeros.
    pub fn resized(&self, rows: usize, cols: usize) -> DenseMat {
        DenseMat::from_fn(rows, cols, |i, j| {
            if i < self.rows && j < self.cols {
                self.get(i, j)
            } else {
                0.0
            }
        })
    }

    pub fn transpose(&self) -> DenseMat {
        DenseMat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.data {
            *v *= alpha;
        }
    }

    /// `self * other`
    pub fn matmul(&self, other: &DenseMat) -> DenseMat {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = DenseMat::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let oc = other.col(j);
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for (k, &w) in oc.iter().enumerate() {
                if w != 0.0 {
                    axpy(w, self.col(k), dst);
                }
            }
        }
        out
    }

    /// `selfᵀ * other`
    pub fn t_matmul(&self, other: &DenseMat) -> DenseMat {
        assert_eq!(self.rows, other.rows, "t_matmul dimension mismatch");
        DenseMat::from_fn(self.cols, other.cols, |i, j| dot(self.col(i), other.col(j)))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        let mut y = vec![0.0; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                axpy(xj, self.col(j), &mut y);
            }
        }
        y
    }

    pub fn t_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "t_matvec dimension mismatch");
        (0..self.cols).map(|j| dot(self.col(j), x)).collect()
    }

    /// `self -= a * b`, used for block projections.
    pub fn sub_product(&mut self, a: &DenseMat, b: &DenseMat) {
        assert_eq!(a.rows, self.rows);
        assert_eq!(a.cols, b.rows);
        assert_eq!(b.cols, self.cols);
        for j in 0..self.cols {
            let dst = &mut self.data[j * self.rows..(j + 1) * self.rows];
            for k in 0..a.cols {
                let w = b.get(k, j);
                if w != 0.0 {
                    axpy(-w, a.col(k), dst);
                }
            }
        }
    }

    pub fn sub(&self, other: &DenseMat) -> DenseMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &DenseMat) -> DenseMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    /// Writes `block` into `self` with its top-left corner at `(row, col)`.
    pub fn set_block(&mut self, row: usize, col: usize, block: &DenseMat) {
        assert!(row + block.rows <= self.rows && col + block.cols <= self.cols);
        for j in 0..block.cols {
            for i in 0..block.rows {
                self.set(row + i, col + j, block.get(i, j));
            }
        }
    }
}

/// Thin Householder QR factors `M = Q R`.
#[derive(Clone, Debug)]
pub struct HouseholderQr {
    pub q: DenseMat,
    pub r: DenseMat,
    /// First column whose Householder pivot fell below `u·‖M‖_F`.
    pub rank_deficient_at: Option<usize>,
}

/// Householder QR with a nonnegative diagonal in `R`.
///
/// Requires `rows ≥ cols`. A pivot column whose trailing norm falls below
/// `u·‖M‖_F` is recorded in `rank_deficient_at`; the factorization still
/// completes and `Q` stays orthonormal.
pub fn householder_qr(m: &DenseMat) -> Result<HouseholderQr> {
    let (rows, cols) = (m.rows(), m.cols());
    if rows < cols {
        return Err(Error::DimensionMismatch {
            context: "householder_qr requires rows >= cols",
            expected: cols,
            found: rows,
        });
    }
    let (work, taus, rank_deficient_at) = householder_reduce(m);

    let mut r = DenseMat::zeros(cols, cols);
    for j in 0..cols {
        for i in 0..=j {
            r.set(i, j, work.get(i, j));
        }
    }

    // Accumulate the thin Q by applying reflectors to the leading identity
    // columns in reverse order.
    let mut q = DenseMat::zeros(rows, cols);
    for k in 0..cols {
        q.set(k, k, 1.0);
    }
    for k in (0..cols).rev() {
        let tau = taus[k];
        if tau == 0.0 {
            continue;
        }
        let v = &work.col(k)[k..];
        for j in k..cols {
            let qc = &mut q.col_mut(j)[k..];
            let w = reflector_dot(v, qc);
            if w != 0.0 {
                reflector_update(tau * w, v, qc);
            }
        }
    }

    for k in 0..cols {
        if r.get(k, k) < 0.0 {
            for j in k..cols {
                r.set(k, j, -r.get(k, j));
            }
            for v in q.col_mut(k) {
                *v = -*v;
            }
        }
    }

    Ok(HouseholderQr {
        q,
        r,
        rank_deficient_at,
    })
}

/// Upper-triangular factor only, without forming `Q`.
pub(crate) fn householder_r(m: &DenseMat) -> DenseMat {
    let cols = m.cols();
    let (work, _, _) = householder_reduce(m);
    DenseMat::from_fn(cols, cols, |i, j| if i <= j { work.get(i, j) } else { 0.0 })
}

// Reflector vectors have an implicit leading 1 stored below the diagonal;
// the diagonal slot holds R_kk.
fn reflector_dot(v: &[f64], x: &[f64]) -> f64 {
    x[0] + dot(&v[1..], &x[1..])
}

fn reflector_update(alpha: f64, v: &[f64], x: &mut [f64]) {
    x[0] -= alpha;
    axpy(-alpha, &v[1..], &mut x[1..]);
}

fn householder_reduce(m: &DenseMat) -> (DenseMat, Vec<f64>, Option<usize>) {
    let (rows, cols) = (m.rows(), m.cols());
    let mut work = m.clone();
    let mut taus = vec![0.0; cols];
    let threshold = UNIT_ROUNDOFF * m.frobenius_norm();
    let mut rank_deficient_at = None;

    for k in 0..cols {
        let x = &work.col(k)[k..];
        let norm = norm2(x);
        if norm <= threshold && rank_deficient_at.is_none() {
            rank_deficient_at = Some(k);
        }
        if norm == 0.0 {
            continue;
        }
        let x0 = x[0];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let v0 = x0 - alpha;
        // v = x - alpha e1, scaled so v[0] = 1; tau = 2 / (vᵀv) in that scaling.
        let tau = (alpha - x0) / alpha;
        {
            let col = work.col_mut(k);
            for v in &mut col[k + 1..] {
                *v /= v0;
            }
            col[k] = alpha;
        }
        taus[k] = tau;
        if k + 1 < cols {
            let (head, tail) = work.data.split_at_mut((k + 1) * rows);
            let v = &head[k * rows + k..(k + 1) * rows];
            for j in 0..cols - k - 1 {
                let xc = &mut tail[j * rows + k..(j + 1) * rows];
                let w = reflector_dot(v, xc);
                if w != 0.0 {
                    reflector_update(tau * w, v, xc);
                }
            }
        }
    }
    (work, taus, rank_deficient_at)
}

/// Plane rotation acting on entries `row` and `row + 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GivensRotation {
    pub c: f64,
    pub s: f64,
    pub row: usize,
}

impl GivensRotation {
    pub const IDENTITY: GivensRotation = GivensRotation {
        c: 1.0,
        s: 0.0,
        row: 0,
    };

    /// Rotation zeroing `b` in `(a, b)`; returns it with the resulting
    /// nonnegative leading entry.
    pub fn zeroing(a: f64, b: f64, row: usize) -> (Self, f64) {
        let r = a.hypot(b);
        if r == 0.0 {
            return (Self { row, ..Self::IDENTITY }, 0.0);
        }
        (
            Self {
                c: a / r,
                s: b / r,
                row,
            },
            r,
        )
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (self.c * x + self.s * y, self.c * y - self.s * x)
    }

    /// Applies the rotation in place to entries `row`, `row + 1` of `v`.
    pub fn apply_to(&self, v: &mut [f64]) {
        let (a, b) = self.apply(v[self.row], v[self.row + 1]);
        v[self.row] = a;
        v[self.row + 1] = b;
    }
}

/// Rotation that maps `(a, b)` to `(√(a²+b²), 0)`.
pub fn compute_givens(a: f64, b: f64) -> GivensRotation {
    GivensRotation::zeroing(a, b, 0).0
}

/// Singular values of `m` in descending order via one-sided Jacobi.
///
/// Wide inputs are transposed. Inputs with many columns are first reduced
/// to the transpose of their Householder `R` factor, which has the same
/// singular values and needs far fewer sweeps.
pub fn jacobi_svd_values(m: &DenseMat) -> Result<Vec<f64>> {
    if m.rows() < m.cols() {
        return jacobi_svd_values(&m.transpose());
    }
    if m.cols() == 0 {
        return Ok(Vec::new());
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("jacobi_svd_values"));
    }
    let mut work = if m.cols() > JACOBI_QR_PRECONDITION_COLS {
        householder_r(m).transpose()
    } else {
        m.clone()
    };
    let n = work.cols();

    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < JACOBI_MAX_SWEEPS {
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (cp, cq) = work.col_pair_mut(p, q);
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for (a, b) in cp.iter().zip(cq.iter()) {
                    alpha += a * a;
                    beta += b * b;
                    gamma += a * b;
                }
                if gamma == 0.0 || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= JACOBI_TOL * (alpha.sqrt() * beta.sqrt()) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
                    let x = *a;
                    let y = *b;
                    *a = c * x - s * y;
                    *b = s * x + c * y;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }

    let mut values: Vec<f64> = (0..n).map(|j| norm2(work.col(j))).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    if converged {
        Ok(values)
    } else {
        Err(Error::SvdNoConvergence { sweeps, values })
    }
}

/// 2-norm condition number `σ_max / σ_min`; `+∞` when `σ_min` is zero.
pub fn cond2(m: &DenseMat) -> Result<f64> {
    let values = jacobi_svd_values(m)?;
    Ok(cond_from_values(&values))
}

pub(crate) fn cond_from_values(values: &[f64]) -> f64 {
    match (values.first(), values.last()) {
        (Some(&max), Some(&min)) => {
            if min == 0.0 {
                f64::INFINITY
            } else {
                max / min
            }
        }
        _ => 1.0,
    }
}

/// Diagonal of positive column norms `D` with `M = M̃·diag(D)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnScaling {
    d: Vec<f64>,
}

impl ColumnScaling {
    pub fn new(d: Vec<f64>) -> Result<Self> {
        if let Some(index) = d.iter().position(|&v| !v.is_finite() || v <= 0.0) {
            return Err(Error::ZeroColumn { index });
        }
        Ok(Self { d })
    }

    pub fn values(&self) -> &[f64] {
        &self.d
    }

    /// `M̃ · diag(D)`
    pub fn apply(&self, m: &DenseMat) -> DenseMat {
        assert_eq!(m.cols(), self.d.len());
        let mut out = m.clone();
        for (j, &dj) in self.d.iter().enumerate() {
            for v in out.col_mut(j) {
                *v *= dj;
            }
        }
        out
    }
}

/// Scales every column of `m` to unit 2-norm.
pub fn normalize_columns(m: &DenseMat) -> Result<(DenseMat, ColumnScaling)> {
    let mut out = m.clone();
    let mut d = Vec::with_capacity(m.cols());
    for j in 0..m.cols() {
        let nrm = norm2(m.col(j));
        if nrm == 0.0 {
            return Err(Error::ZeroColumn { index: j });
        }
        for v in out.col_mut(j) {
            *v /= nrm;
        }
        d.push(nrm);
    }
    Ok((out, ColumnScaling::new(d)?))
}

/// Solves `T y = g` for upper-triangular `T` by back substitution.
#[allow(clippy::needless_range_loop)]
pub fn solve_upper_triangular(t: &DenseMat, g: &[f64]) -> Vec<f64> {
    let n = g.len();
    assert!(t.rows() >= n && t.cols() >= n);
    let mut y = g.to_vec();
    for i in (0..n).rev() {
        let mut acc = y[i];
        for j in i + 1..n {
            acc -= t.get(i, j) * y[j];
        }
        y[i] = acc / t.get(i, i);
    }
    y
}
