//! Block Gram-Schmidt: BCGSI+ (two projection passes, two intra-block
//! Householder QRs) and BMGS (sequential block projections, one QR).

use crate::dense::{householder_qr, norm2, DenseMat, UNIT_ROUNDOFF};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OrthoScheme {
    #[default]
    BcgsiPlus,
    Bmgs,
}

/// Growing factorization `X = Q T`.
#[derive(Clone, Debug, PartialEq)]
pub struct QrState {
    q: DenseMat,
    t: DenseMat,
    block_ends: Vec<usize>,
}

/// What one block step did.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct StepReport {
    pub added: usize,
    /// First new column (0-based within the block) found linearly dependent.
    pub breakdown: Option<usize>,
    pub projections: usize,
    pub intra_qrs: usize,
}

impl QrState {
    pub fn new(n: usize) -> Self {
        Self {
            q: DenseMat::zeros(n, 0),
            t: DenseMat::zeros(0, 0),
            block_ends: Vec::new(),
        }
    }

    /// Starts from a single column: `Q = x/‖x‖`, `T = [‖x‖]`.
    pub fn from_first_column(x: &[f64]) -> Result<Self> {
        let beta = norm2(x);
        if !beta.is_finite() {
            return Err(Error::NonFinite("initial residual"));
        }
        if beta == 0.0 {
            return Err(Error::ZeroColumn { index: 0 });
        }
        let q: Vec<f64> = x.iter().map(|v| v / beta).collect();
        Ok(Self {
            q: DenseMat::from_columns(x.len(), &[q]),
            t: DenseMat::diag(&[beta]),
            block_ends: vec![1],
        })
    }

    pub fn q(&self) -> &DenseMat {
        &self.q
    }

    pub fn t(&self) -> &DenseMat {
        &self.t
    }

    pub fn cols(&self) -> usize {
        self.q.cols()
    }

    pub fn rows(&self) -> usize {
        self.q.rows()
    }

    pub fn block_ends(&self) -> &[usize] {
        &self.block_ends
    }

    /// Keeps the leading `cols` columns of `Q` and the leading block of `T`.
    pub fn truncate(&mut self, cols: usize) {
        if cols >= self.cols() {
            return;
        }
        self.q.truncate_cols(cols);
        self.t = self.t.leading(cols, cols);
        self.block_ends.retain(|&e| e < cols);
        if self.block_ends.last() != Some(&cols) && cols > 0 {
            self.block_ends.push(cols);
        }
    }

    fn check_block(&self, x: &DenseMat) -> Result<()> {
        if x.rows() != self.rows() {
            return Err(Error::DimensionMismatch {
                context: "orthogonalization block rows",
                expected: self.rows(),
                found: x.rows(),
            });
        }
        if x.cols() == 0 {
            return Err(Error::InvalidInput("empty block".into()));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("orthogonalization block"));
        }
        Ok(())
    }

    fn extend(&mut self, q_new: DenseMat, offdiag: DenseMat, diag: DenseMat) {
        let m = self.cols();
        let s = q_new.cols();
        let mut t = self.t.resized(m + s, m + s);
        t.set_block(0, m, &offdiag);
        t.set_block(m, m, &diag);
        self.t = t;
        self.q.append_cols(&q_new);
        self.block_ends.push(m + s);
    }
}

fn first_dependent(x: &DenseMat, diag: &DenseMat) -> Option<usize> {
    (0..x.cols()).find(|&k| {
        let xk = norm2(x.col(k));
        xk == 0.0 || diag.get(k, k) <= UNIT_ROUNDOFF * xk
    })
}

fn upper_product(a: &DenseMat, b: &DenseMat) -> DenseMat {
    let mut out = a.matmul(b);
    for j in 0..out.cols() {
        for i in j + 1..out.rows() {
            out.set(i, j, 0.0);
        }
    }
    out
}

/// Result of orthogonalizing a block against a fixed orthonormal basis.
#[derive(Clone, Debug)]
pub struct BlockProjection {
    pub q: DenseMat,
    /// Coefficients against the basis, `S⁽¹⁾ + S⁽²⁾T⁽¹⁾`.
    pub offdiag: DenseMat,
    /// Intra-block triangular factor `T⁽²⁾T⁽¹⁾`.
    pub diag: DenseMat,
    pub breakdown: Option<usize>,
}

/// Two projection passes against `basis`, each followed by an intra-block
/// Householder QR.
pub fn bcgsi_plus_against(basis: &DenseMat, x: &DenseMat) -> Result<BlockProjection> {
    let mut w1 = x.clone();
    let s1 = basis.t_matmul(x);
    w1.sub_product(basis, &s1);
    let f1 = householder_qr(&w1)?;
    let s2 = basis.t_matmul(&f1.q);
    let mut w2 = f1.q.clone();
    w2.sub_product(basis, &s2);
    let f2 = householder_qr(&w2)?;

    let offdiag = s1.add(&s2.matmul(&f1.r));
    let diag = upper_product(&f2.r, &f1.r);
    let breakdown = first_dependent(x, &diag);
    Ok(BlockProjection {
        q: f2.q,
        offdiag,
        diag,
        breakdown,
    })
}

/// One BCGSI+ step appending `x` to the factorization.
pub fn bcgsi_plus_step(state: &mut QrState, x: &DenseMat) -> Result<StepReport> {
    state.check_block(x)?;
    let projections = if state.cols() > 0 { 2 } else { 0 };
    let p = bcgsi_plus_against(&state.q, x)?;
    state.extend(p.q, p.offdiag, p.diag);
    Ok(StepReport {
        added: x.cols(),
        breakdown: p.breakdown,
        projections,
        intra_qrs: 2,
    })
}

/// One BMGS step appending `x` to the factorization.
pub fn bmgs_step(state: &mut QrState, x: &DenseMat) -> Result<StepReport> {
    state.check_block(x)?;
    let m = state.cols();
    let mut w = x.clone();
    let mut offdiag = DenseMat::zeros(m, x.cols());
    let mut start = 0;
    let mut projections = 0;
    for &end in &state.block_ends {
        let qj = state.q.columns(start..end);
        let sj = qj.t_matmul(&w);
        w.sub_product(&qj, &sj);
        offdiag.set_block(start, 0, &sj);
        start = end;
        projections += 1;
    }
    let f = householder_qr(&w)?;
    let breakdown = first_dependent(x, &f.r);
    state.extend(f.q, offdiag, f.r);
    Ok(StepReport {
        added: x.cols(),
        breakdown,
        projections,
        intra_qrs: 1,
    })
}

pub fn orthogonalize(scheme: OrthoScheme, state: &mut QrState, x: &DenseMat) -> Result<StepReport> {
    match scheme {
        OrthoScheme::BcgsiPlus => bcgsi_plus_step(state, x),
        OrthoScheme::Bmgs => bmgs_step(state, x),
    }
}

/// `‖QᵀQ − I‖_F`.
pub fn loss_of_orthogonality(q: &DenseMat) -> f64 {
    let k = q.cols();
    let mut acc = 0.0;
    for j in 0..k {
        for i in 0..k {
            let g = crate::dense::dot(q.col(i), q.col(j)) - if i == j { 1.0 } else { 0.0 };
            acc += g * g;
        }
    }
    acc.sqrt()
}
