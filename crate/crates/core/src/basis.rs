//! Polynomial Krylov blocks: monomial, Newton and Chebyshev recurrences,
//! plus the Ritz-value warm-up that supplies their parameters.

use num_complex::Complex64;

use crate::dense::{dot, norm2, DenseMat, UNIT_ROUNDOFF};
use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, Preconditioner};

/// Largest block size accepted by the Hessenberg eigensolver.
pub const MAX_RITZ_BLOCK: usize = 64;

/// A square linear map applied to vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.spmv_into(x, y);
    }
}

impl LinearOperator for DenseMat {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.matvec(x));
    }
}

/// `x ↦ M_L⁻¹ A M_R⁻¹ x`.
pub struct PreconditionedOperator<'a> {
    pub a: &'a dyn LinearOperator,
    pub left: &'a Preconditioner,
    pub right: &'a Preconditioner,
}

impl LinearOperator for PreconditionedOperator<'_> {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut xr = x.to_vec();
        self.right.apply_inverse_in_place(&mut xr);
        self.a.apply(&xr, y);
        self.left.apply_inverse_in_place(y);
    }
}

/// Polynomial family and its parameters for one Krylov block.
#[derive(Clone, Debug, PartialEq)]
pub enum BasisKind {
    Monomial,
    /// Shifts in Leja order, conjugate pairs adjacent.
    Newton { shifts: Vec<Complex64> },
    Chebyshev { center: f64, focal: f64 },
}

/// Ritz values, closed under conjugation.
#[derive(Clone, Debug, PartialEq)]
pub struct RitzSet {
    pub values: Vec<Complex64>,
}

/// Eigenvalues of an upper Hessenberg matrix by Francis double-shift QR.
///
/// Entries below the subdiagonal are ignored.
#[allow(clippy::needless_range_loop)]
pub fn hessenberg_eigenvalues(h: &DenseMat) -> Result<Vec<Complex64>> {
    let n = h.rows();
    if h.cols() != n {
        return Err(Error::InvalidInput("Hessenberg block must be square".into()));
    }
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i > j + 1 { 0.0 } else { h.get(i, j) }).collect())
        .collect();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let anorm: f64 = a.iter().flatten().map(|x| x.abs()).sum();
    let mut t = 0.0;
    let mut nn = n as isize - 1;
    let max_iterations = 30 * n.max(1);

    while nn >= 0 {
        let mut its = 0;
        loop {
            let nu = nn as usize;
            let mut l = nu;
            while l >= 1 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() <= UNIT_ROUNDOFF * s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[nu][nu];
            if l == nu {
                out[nu] = Complex64::new(x + t, 0.0);
                nn -= 1;
                break;
            }
            let mut y = a[nu - 1][nu - 1];
            let mut w = a[nu][nu - 1] * a[nu - 1][nu];
            if l == nu - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    let z = p + z.copysign(p);
                    let hi = x + z;
                    let lo = if z != 0.0 { x - w / z } else { hi };
                    out[nu - 1] = Complex64::new(hi, 0.0);
                    out[nu] = Complex64::new(lo, 0.0);
                } else {
                    out[nu - 1] = Complex64::new(x + p, z);
                    out[nu] = Complex64::new(x + p, -z);
                }
                nn -= 2;
                break;
            }
            if its >= max_iterations {
                return Err(Error::InvalidInput(format!(
                    "Hessenberg QR did not converge in {max_iterations} iterations"
                )));
            }
            if its == 10 || its == 20 {
                t += x;
                for (i, row) in a.iter_mut().enumerate().take(nu + 1) {
                    row[i] -= x;
                }
                let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;

            let mut m = nu - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = a[m][m];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - rr - ss;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u <= UNIT_ROUNDOFF * v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                a[i][i - 2] = 0.0;
                if i != m + 2 {
                    a[i][i - 3] = 0.0;
                }
            }
            let mut k = m;
            while k < nu {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = if k != nu - 1 { a[k + 2][k - 1] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        let mut pp = a[k][j] + q * a[k + 1][j];
                        if k != nu - 1 {
                            pp += r * a[k + 2][j];
                            a[k + 2][j] -= pp * z;
                        }
                        a[k + 1][j] -= pp * y;
                        a[k][j] -= pp * x;
                    }
                    let mmin = if nu < k + 3 { nu } else { k + 3 };
                    for row in a.iter_mut().take(mmin + 1).skip(l) {
                        let mut pp = x * row[k] + y * row[k + 1];
                        if k != nu - 1 {
                            pp += z * row[k + 2];
                            row[k + 2] -= pp * r;
                        }
                        row[k + 1] -= pp * q;
                        row[k] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(out)
}

/// Ritz values from `s` steps of standard Arnoldi on `op` started at `r`.
///
/// On early breakdown the smaller block's values are padded by repetition.
pub fn compute_ritz_values(op: &dyn LinearOperator, r: &[f64], s: usize) -> Result<RitzSet> {
    let n = op.dim();
    if r.len() != n {
        return Err(Error::DimensionMismatch {
            context: "compute_ritz_values",
            expected: n,
            found: r.len(),
        });
    }
    if s == 0 || s > n || s > MAX_RITZ_BLOCK {
        return Err(Error::InvalidInput(format!(
            "Ritz block size must lie in 1..={}, got {s}",
            n.min(MAX_RITZ_BLOCK)
        )));
    }
    let beta = norm2(r);
    if beta == 0.0 || !beta.is_finite() {
        return Err(Error::InvalidInput("Ritz start vector must be nonzero and finite".into()));
    }
    let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
    let mut h = DenseMat::zeros(s + 1, s);
    let mut steps = s;
    let mut w = vec![0.0; n];
    for j in 0..s {
        op.apply(&basis[j], &mut w);
        let scale = norm2(&w);
        for _pass in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let c = dot(v, &w);
                h.set(i, j, h.get(i, j) + c);
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= c * vk;
                }
            }
        }
        let next = norm2(&w);
        if !next.is_finite() {
            return Err(Error::NonFinite("compute_ritz_values"));
        }
        if next <= 8.0 * UNIT_ROUNDOFF * scale || next == 0.0 {
            steps = j + 1;
            break;
        }
        h.set(j + 1, j, next);
        if j + 1 < s {
            basis.push(w.iter().map(|x| x / next).collect());
        }
    }
    let mut values = hessenberg_eigenvalues(&h.leading(steps, steps))?;
    pad_conjugate_closed(&mut values, s);
    Ok(RitzSet { values })
}

fn pad_conjugate_closed(values: &mut Vec<Complex64>, len: usize) {
    let Some(&last) = values.last() else { return };
    while values.len() < len {
        if last.im == 0.0 {
            values.push(last);
        } else if values.len() + 2 <= len {
            values.push(Complex64::new(last.re, last.im.abs()));
            values.push(Complex64::new(last.re, -last.im.abs()));
        } else {
            values.push(Complex64::new(last.re, 0.0));
        }
    }
}

fn prefer(a: Complex64, b: Complex64) -> bool {
    (a.re, a.im) > (b.re, b.im)
}

/// Greedy Leja ordering with conjugates kept adjacent.
pub fn leja_order(values: &[Complex64]) -> Vec<Complex64> {
    let mut remaining: Vec<Complex64> = values.to_vec();
    let mut chosen: Vec<Complex64> = Vec::with_capacity(values.len());
    while !remaining.is_empty() {
        let score = |z: Complex64| -> f64 {
            if chosen.is_empty() {
                z.norm()
            } else {
                chosen.iter().map(|c| (z - c).norm().ln()).sum()
            }
        };
        let mut best = 0;
        let mut best_score = score(remaining[0]);
        for (k, &z) in remaining.iter().enumerate().skip(1) {
            let sc = score(z);
            if sc > best_score || (sc == best_score && prefer(z, remaining[best])) {
                best = k;
                best_score = sc;
            }
        }
        let pick = remaining.remove(best);
        chosen.push(pick);
        if pick.im != 0.0 {
            if let Some(k) = remaining.iter().position(|&z| z == pick.conj()) {
                chosen.push(remaining.remove(k));
            }
        }
    }
    chosen
}

/// Ellipse parameters for the Chebyshev recurrence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChebyshevParams {
    pub center: f64,
    pub focal: f64,
    /// All values coincide; the recurrence is undefined.
    pub degenerate: bool,
}

pub fn chebyshev_params(ritz: &RitzSet) -> Result<ChebyshevParams> {
    if ritz.values.is_empty() {
        return Err(Error::InvalidInput("empty Ritz set".into()));
    }
    let re_max = ritz.values.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let re_min = ritz.values.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let b = ritz.values.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let center = 0.5 * (re_max + re_min);
    let a = 0.5 * (re_max - re_min);
    let focal = if a >= b { (a * a - b * b).sqrt() } else { a };
    Ok(ChebyshevParams {
        center,
        focal,
        degenerate: focal == 0.0,
    })
}

/// `n × s'` block `[p₀(op)v, …, p_{s'−1}(op)v]`, with `s' < s` only when an
/// exact invariant subspace is hit.
///
/// With `normalize` each generated column is scaled to unit norm before the
/// next recurrence step; the first column is `v` unchanged.
pub fn build_krylov_block(
    op: &dyn LinearOperator,
    v: &[f64],
    s: usize,
    kind: &BasisKind,
    normalize: bool,
) -> Result<DenseMat> {
    let n = op.dim();
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            context: "build_krylov_block",
            expected: n,
            found: v.len(),
        });
    }
    if s == 0 {
        return Err(Error::InvalidInput("block size must be at least 1".into()));
    }
    if norm2(v) == 0.0 {
        return Err(Error::InvalidInput("Krylov start vector is zero".into()));
    }
    if let BasisKind::Chebyshev { focal, .. } = kind {
        if *focal == 0.0 {
            return Err(Error::InvalidInput("Chebyshev focal distance is zero".into()));
        }
    }
    if let BasisKind::Newton { shifts } = kind {
        if shifts.is_empty() && s > 1 {
            return Err(Error::InvalidInput("Newton basis needs at least one shift".into()));
        }
    }

    let mut k = DenseMat::zeros(n, 0);
    k.push_col(v);
    // ratio[j] = σ_{j-1} / σ_j, where the unscaled polynomial column is σ_j·k_j.
    let mut ratio = vec![1.0; s];
    let mut shift_idx = 0usize;
    let mut opq = vec![0.0; n];

    let mut j = 0usize;
    while j + 1 < s {
        op.apply(k.col(j), &mut opq);
        let op_norm = norm2(&opq);
        let mut pending: Option<Complex64> = None;
        let (w, reference) = match kind {
            BasisKind::Monomial => (opq.clone(), op_norm),
            BasisKind::Newton { shifts } => {
                let theta = shifts[shift_idx % shifts.len()];
                if theta.im != 0.0 && j + 2 < s {
                    pending = Some(theta);
                }
                shift_idx += if theta.im != 0.0 { 2 } else { 1 };
                let q = k.col(j);
                let w: Vec<f64> = opq.iter().zip(q).map(|(a, b)| a - theta.re * b).collect();
                (w, op_norm + theta.re.abs())
            }
            BasisKind::Chebyshev { center, focal } => {
                let factor = if j == 0 { 1.0 / focal } else { 2.0 / focal };
                let q = k.col(j);
                let mut w: Vec<f64> = opq.iter().zip(q).map(|(a, b)| factor * (a - center * b)).collect();
                let mut reference = factor * (op_norm + center.abs());
                if j > 0 {
                    for (wi, pi) in w.iter_mut().zip(k.col(j - 1)) {
                        *wi -= ratio[j] * pi;
                    }
                    reference += ratio[j];
                }
                (w, reference)
            }
        };
        if !push_scaled(&mut k, w, reference, normalize, &mut ratio, j + 1)? {
            return Ok(k);
        }
        j += 1;

        if let Some(theta) = pending {
            // second column of a conjugate pair: (op − Re θ)k_j + Im²θ·(σ_{j−1}/σ_j)k_{j−1}
            op.apply(k.col(j), &mut opq);
            let q = k.col(j);
            let prev = k.col(j - 1);
            let c = theta.im * theta.im * ratio[j];
            let w: Vec<f64> = opq
                .iter()
                .zip(q)
                .zip(prev)
                .map(|((a, b), p)| a - theta.re * b + c * p)
                .collect();
            let reference = norm2(&opq) + theta.re.abs() + c;
            if !push_scaled(&mut k, w, reference, normalize, &mut ratio, j + 1)? {
                return Ok(k);
            }
            j += 1;
        }
    }
    Ok(k)
}

fn push_scaled(
    k: &mut DenseMat,
    mut w: Vec<f64>,
    reference: f64,
    normalize: bool,
    ratio: &mut [f64],
    index: usize,
) -> Result<bool> {
    let nrm = norm2(&w);
    if !nrm.is_finite() {
        return Err(Error::NonFinite("build_krylov_block"));
    }
    if nrm == 0.0 || nrm <= 4.0 * UNIT_ROUNDOFF * reference {
        return Ok(false);
    }
    if normalize {
        for x in &mut w {
            *x /= nrm;
        }
        ratio[index] = 1.0 / nrm;
    }
    k.push_col(&w);
    Ok(true)
}
