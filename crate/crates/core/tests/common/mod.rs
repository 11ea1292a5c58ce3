#![allow(dead_code)]

use sstep_gmres::basis::LinearOperator;
use sstep_gmres::dense::{householder_qr, jacobi_svd_values, norm2, DenseMat};
use sstep_gmres::orth::{orthogonalize, OrthoScheme, QrState};
use sstep_gmres::rng::{gaussian_matrix, SolverRng};
use sstep_gmres::sparse::{gen_randsvd, CsrMatrix, RandSvdSpec};

/// Orthonormal basis of the column span.
pub fn orth_basis(m: &DenseMat) -> DenseMat {
    householder_qr(m).unwrap().q
}

/// Sine of the largest principal angle between two column spans of equal
/// dimension.
pub fn max_principal_sine(x: &DenseMat, y: &DenseMat) -> f64 {
    let qx = orth_basis(x);
    let qy = orth_basis(y);
    let mut resid = qy.clone();
    resid.sub_product(&qx, &qx.t_matmul(&qy));
    jacobi_svd_values(&resid).unwrap()[0]
}

/// `rows × cols` matrix with singular values spaced geometrically from 1
/// down to `1/kappa`.
pub fn matrix_with_cond(rng: &mut SolverRng, rows: usize, cols: usize, kappa: f64) -> DenseMat {
    let u = orth_basis(&gaussian_matrix(rng, rows, cols));
    let v = orth_basis(&gaussian_matrix(rng, cols, cols));
    let mut us = u;
    for j in 0..cols {
        let t = if cols == 1 { 0.0 } else { j as f64 / (cols - 1) as f64 };
        let sigma = kappa.powf(-t);
        for x in us.col_mut(j) {
            *x *= sigma;
        }
    }
    us.matmul(&v.transpose())
}

pub fn randsvd_csr(n: usize, kappa: f64, mode: u8, seed: u64) -> CsrMatrix {
    let g = gen_randsvd(&RandSvdSpec { n, kappa, mode, seed }).unwrap();
    CsrMatrix::from_dense(&g.a).unwrap()
}

/// Dense `A` with eigenvalues `1..=n` in a random orthogonal frame, so
/// cond2 stays moderate and Krylov spaces are nondegenerate.
pub fn similar_to_diag(rng: &mut SolverRng, n: usize, spread: f64) -> DenseMat {
    let q = orth_basis(&gaussian_matrix(rng, n, n));
    let mut qd = q.clone();
    for j in 0..n {
        let lambda = 1.0 + spread * j as f64 / n as f64;
        for x in qd.col_mut(j) {
            *x *= lambda;
        }
    }
    qd.matmul(&q.transpose())
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

/// Feeds `x` to the orthogonalizer in blocks of `s` columns.
pub fn factor_in_blocks(scheme: OrthoScheme, x: &DenseMat, s: usize) -> QrState {
    let mut state = QrState::new(x.rows());
    let mut start = 0;
    while start < x.cols() {
        let end = (start + s).min(x.cols());
        orthogonalize(scheme, &mut state, &x.columns(start..end)).unwrap();
        start = end;
    }
    state
}

/// `max_i ‖X_i − (QT)_i‖ / ‖X_i‖`.
pub fn worst_column_residual(x: &DenseMat, state: &QrState) -> f64 {
    let qt = state.q().matmul(state.t());
    (0..x.cols())
        .map(|i| {
            let d: Vec<f64> = x.col(i).iter().zip(qt.col(i)).map(|(a, b)| a - b).collect();
            norm2(&d) / norm2(x.col(i))
        })
        .fold(0.0, f64::max)
}

/// Orthonormalized Krylov vectors `v, Av, …, A^{s−1}v` built one at a time
/// with full reorthogonalization.
pub fn reference_krylov(op: &dyn LinearOperator, v: &[f64], s: usize) -> DenseMat {
    let n = v.len();
    let mut q = DenseMat::zeros(n, 0);
    let first: Vec<f64> = v.iter().map(|x| x / norm2(v)).collect();
    q.push_col(&first);
    let mut w = vec![0.0; n];
    for j in 1..s {
        op.apply(q.col(j - 1), &mut w);
        for _ in 0..2 {
            let c = q.t_matvec(&w);
            for (k, ck) in c.iter().enumerate() {
                for (wi, qi) in w.iter_mut().zip(q.col(k)) {
                    *wi -= ck * qi;
                }
            }
        }
        let nw = norm2(&w);
        let next: Vec<f64> = w.iter().map(|x| x / nw).collect();
        q.push_col(&next);
    }
    q
}
