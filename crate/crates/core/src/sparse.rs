//! Sparse operators in compressed sparse row form, Matrix Market I/O,
//! preconditioners and randsvd test matrices.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::dense::{householder_qr, DenseMat};
use crate::error::{Error, Result};
use crate::rng::{gaussian_matrix, SolverRng};

/// Square sparse matrix in compressed sparse row form.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Validates and wraps raw CSR arrays.
    pub fn new(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if row_ptr.len() != n + 1 {
            return Err(Error::DimensionMismatch {
                context: "CsrMatrix row_ptr",
                expected: n + 1,
                found: row_ptr.len(),
            });
        }
        if col_idx.len() != values.len() {
            return Err(Error::DimensionMismatch {
                context: "CsrMatrix values",
                expected: col_idx.len(),
                found: values.len(),
            });
        }
        if row_ptr[0] != 0 || row_ptr[n] != col_idx.len() {
            return Err(Error::InvalidInput("row_ptr must start at 0 and end at nnz".into()));
        }
        for i in 0..n {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(Error::InvalidInput(format!("row_ptr decreases at row {i}")));
            }
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            for (k, &c) in cols.iter().enumerate() {
                if c >= n {
                    return Err(Error::InvalidInput(format!("column {c} out of range in row {i}")));
                }
                if k > 0 && cols[k - 1] >= c {
                    return Err(Error::InvalidInput(format!(
                        "column indices not strictly increasing in row {i}"
                    )));
                }
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("CsrMatrix values"));
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!("entry ({i}, {j}) outside {n}x{n}")));
            }
            *rows[i].entry(j).or_insert(0.0) += v;
        }
        Self::from_row_maps(n, rows)
    }

    fn from_row_maps(n: usize, rows: Vec<BTreeMap<usize, f64>>) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (j, v) in row {
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self::new(n, row_ptr, col_idx, values)
    }

    /// Keeps every entry of a dense square matrix, zeros included.
    pub fn from_dense(a: &DenseMat) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::InvalidInput("operator must be square".into()));
        }
        let n = a.rows();
        let row_ptr = (0..=n).map(|i| i * n).collect();
        let col_idx = (0..n * n).map(|k| k % n).collect();
        let values = (0..n * n).map(|k| a.get(k / n, k % n)).collect();
        Self::new(n, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        Self::new(n, (0..=n).collect(), (0..n).collect(), vec![1.0; n]).expect("valid identity")
    }

    pub fn diagonal(d: &[f64]) -> Result<Self> {
        let n = d.len();
        Self::new(n, (0..=n).collect(), (0..n).collect(), d.to_vec())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal_values(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Frobenius norm accumulated over stored values in storage order.
    pub fn frobenius_norm(&self) -> f64 {
        crate::dense::norm2(&self.values)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            (self.row_ptr[i]..self.row_ptr[i + 1])
                .all(|k| self.get(self.col_idx[k], i) == self.values[k])
        })
    }

    pub fn to_dense(&self) -> DenseMat {
        let mut a = DenseMat::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                a.set(i, self.col_idx[k], self.values[k]);
            }
        }
        a
    }

    /// `y = A x`, accumulating each row left to right.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }
}

/// `y = A x` with a length check.
pub fn spmv(a: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != a.n() {
        return Err(Error::DimensionMismatch {
            context: "spmv",
            expected: a.n(),
            found: x.len(),
        });
    }
    let mut y = vec![0.0; a.n()];
    a.spmv_into(x, &mut y);
    Ok(y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

/// Parses a Matrix Market `coordinate real {general|symmetric}` file.
///
/// Symmetric storage is expanded to both triangles, duplicate entries are
/// summed and indices become 0-based.
pub fn parse_matrix_market(text: &str) -> Result<CsrMatrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (line_no, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty input".into(),
    })?;
    let symmetry = parse_header(line_no, header)?;

    let mut size: Option<(usize, usize)> = None;
    let mut declared_nnz = 0usize;
    let mut rows: Vec<BTreeMap<usize, f64>> = Vec::new();
    let mut seen = 0usize;

    for (line_no, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        match size {
            None => {
                let m = parse_usize(fields.next(), line_no, "row count")?;
                let n = parse_usize(fields.next(), line_no, "column count")?;
                declared_nnz = parse_usize(fields.next(), line_no, "entry count")?;
                if m != n {
                    return Err(parse_err(format!("matrix is {m}x{n}, expected square")));
                }
                size = Some((m, n));
                rows = vec![BTreeMap::new(); n];
            }
            Some((m, n)) => {
                let i = parse_usize(fields.next(), line_no, "row index")?;
                let j = parse_usize(fields.next(), line_no, "column index")?;
                let v: f64 = fields
                    .next()
                    .ok_or_else(|| parse_err("missing value".into()))?
                    .parse()
                    .map_err(|e| parse_err(format!("bad value: {e}")))?;
                if fields.next().is_some() {
                    return Err(parse_err("unexpected trailing field".into()));
                }
                if i == 0 || j == 0 || i > m || j > n {
                    return Err(parse_err(format!("index ({i}, {j}) outside declared {m}x{n}")));
                }
                if !v.is_finite() {
                    return Err(parse_err("non-finite value".into()));
                }
                let (i, j) = (i - 1, j - 1);
                *rows[i].entry(j).or_insert(0.0) += v;
                if symmetry == Symmetry::Symmetric && i != j {
                    *rows[j].entry(i).or_insert(0.0) += v;
                }
                seen += 1;
            }
        }
    }
    let (n, _) = size.ok_or_else(|| Error::Parse {
        line: text.lines().count().max(1),
        message: "missing size line".into(),
    })?;
    if seen != declared_nnz {
        return Err(Error::Parse {
            line: text.lines().count(),
            message: format!("declared {declared_nnz} entries, found {seen}"),
        });
    }
    CsrMatrix::from_row_maps(n, rows)
}

fn parse_header(line_no: usize, header: &str) -> Result<Symmetry> {
    let err = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" {
        return Err(err(format!("malformed header: {header:?}")));
    }
    if tokens[1] != "matrix" || tokens[2] != "coordinate" {
        return Err(err(format!("unsupported format {} {}", tokens[1], tokens[2])));
    }
    if tokens[3] != "real" {
        return Err(err(format!("unsupported field type {}", tokens[3])));
    }
    match tokens[4].as_str() {
        "general" => Ok(Symmetry::General),
        "symmetric" => Ok(Symmetry::Symmetric),
        other => Err(err(format!("unsupported symmetry {other}"))),
    }
}

fn parse_usize(field: Option<&str>, line: usize, what: &str) -> Result<usize> {
    let field = field.ok_or_else(|| Error::Parse {
        line,
        message: format!("missing {what}"),
    })?;
    field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad {what}: {field:?}"),
    })
}

/// Serializes as `coordinate real general`, one entry per stored value,
/// using shortest round-trip decimals.
pub fn write_matrix_market(a: &CsrMatrix) -> String {
    let mut out = String::new();
    out.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(out, "{} {} {}", a.n, a.n, a.nnz());
    for i in 0..a.n {
        for k in a.row_ptr[i]..a.row_ptr[i + 1] {
            let _ = writeln!(out, "{} {} {:e}", i + 1, a.col_idx[k] + 1, a.values[k]);
        }
    }
    out
}

/// `M⁻¹` for the supported preconditioners.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum Preconditioner {
    #[default]
    Identity,
    /// Stores the diagonal `d`; applies `x_i / d_i`.
    Jacobi(Vec<f64>),
}

impl Preconditioner {
    pub fn jacobi(diagonal: Vec<f64>) -> Result<Self> {
        if let Some(row) = diagonal.iter().position(|&d| d == 0.0 || !d.is_finite()) {
            return Err(Error::ZeroDiagonal { row });
        }
        Ok(Self::Jacobi(diagonal))
    }

    pub fn jacobi_from(a: &CsrMatrix) -> Result<Self> {
        Self::jacobi(a.diagonal_values())
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Self::Identity)
    }

    pub fn apply_inverse_in_place(&self, x: &mut [f64]) {
        if let Self::Jacobi(d) = self {
            for (xi, di) in x.iter_mut().zip(d) {
                *xi /= di;
            }
        }
    }
}

pub fn apply_preconditioner_inverse(p: &Preconditioner, x: &[f64]) -> Result<Vec<f64>> {
    if let Preconditioner::Jacobi(d) = p {
        if d.len() != x.len() {
            return Err(Error::DimensionMismatch {
                context: "apply_preconditioner_inverse",
                expected: d.len(),
                found: x.len(),
            });
        }
    }
    let mut y = x.to_vec();
    p.apply_inverse_in_place(&mut y);
    Ok(y)
}

/// Parameters of a randsvd test matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandSvdSpec {
    pub n: usize,
    pub kappa: f64,
    pub mode: u8,
    pub seed: u64,
}

impl RandSvdSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidInput(format!("randsvd needs n >= 2, got {}", self.n)));
        }
        if !self.kappa.is_finite() || self.kappa < 1.0 {
            return Err(Error::InvalidInput(format!("randsvd needs kappa >= 1, got {}", self.kappa)));
        }
        if !(1..=5).contains(&self.mode) {
            return Err(Error::InvalidInput(format!("randsvd mode must be 1-5, got {}", self.mode)));
        }
        Ok(())
    }

    /// Prescribed singular values in descending order.
    ///
    /// 1: one large, 2: one small, 3: geometric, 4: arithmetic,
    /// 5: log-uniform random in `[1/κ, 1]`.
    pub fn singular_values(&self, rng: &mut SolverRng) -> Vec<f64> {
        let n = self.n;
        let inv = 1.0 / self.kappa;
        let t = |i: usize| i as f64 / (n - 1) as f64;
        let mut sigma: Vec<f64> = match self.mode {
            1 => (0..n).map(|i| if i == 0 { 1.0 } else { inv }).collect(),
            2 => (0..n).map(|i| if i + 1 < n { 1.0 } else { inv }).collect(),
            3 => (0..n).map(|i| self.kappa.powf(-t(i))).collect(),
            4 => (0..n).map(|i| 1.0 - (1.0 - inv) * t(i)).collect(),
            _ => (0..n).map(|_| self.kappa.powf(-rng.uniform())).collect(),
        };
        sigma.sort_by(|a, b| b.total_cmp(a));
        sigma
    }
}

/// Random matrix `A = U Σ Vᵀ` with orthogonal `U`, `V` drawn as Q-factors
/// of Gaussian matrices.
#[derive(Clone, Debug)]
pub struct RandSvd {
    pub a: DenseMat,
    pub u: DenseMat,
    pub v: DenseMat,
    pub sigma: Vec<f64>,
}

pub fn gen_randsvd(spec: &RandSvdSpec) -> Result<RandSvd> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = SolverRng::new(spec.seed);
    let u = householder_qr(&gaussian_matrix(&mut rng, n, n))?.q;
    let v = householder_qr(&gaussian_matrix(&mut rng, n, n))?.q;
    let sigma = spec.singular_values(&mut rng);
    let mut us = u.clone();
    for (j, &s) in sigma.iter().enumerate() {
        for x in us.col_mut(j) {
            *x *= s;
        }
    }
    let a = us.matmul(&v.transpose());
    Ok(RandSvd { a, u, v, sigma })
}

/// Column `k` (1-based) of `v`.
pub fn right_singular_vector(v: &DenseMat, k: usize) -> Result<Vec<f64>> {
    if k == 0 || k > v.cols() {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: v.cols(),
        });
    }
    Ok(v.col(k - 1).to_vec())
}
