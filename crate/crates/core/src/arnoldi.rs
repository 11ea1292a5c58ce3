//! One block step of the s-step Arnoldi process, classical or modified,
//! maintaining `B`, `Z = M_R⁻¹B`, `W = M_L⁻¹AZ` and `[r | W] = V R`.

use crate::basis::{build_krylov_block, BasisKind, LinearOperator};
use crate::dense::{norm2, DenseMat};
use crate::error::{Error, Result};
use crate::orth::{bcgsi_plus_against, orthogonalize, OrthoScheme, QrState};
use crate::sparse::Preconditioner;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ArnoldiVariant {
    #[default]
    Classical,
    Modified,
}

/// Operators and options shared by every step of one cycle.
pub struct StepContext<'a> {
    pub a: &'a dyn LinearOperator,
    pub left: &'a Preconditioner,
    pub right: &'a Preconditioner,
    /// Operator the basis polynomials are evaluated with.
    pub basis_op: &'a dyn LinearOperator,
    pub kind: &'a BasisKind,
    pub scheme: OrthoScheme,
    pub normalize: bool,
}

/// Work counters, accumulated over the state's lifetime.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CostCounters {
    pub block_steps: usize,
    pub projections: usize,
    pub intra_qrs: usize,
    pub operator_applications: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub new_cols: usize,
    /// Column (0-based within the block) at which `[r | W]` lost rank.
    pub breakdown: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct ArnoldiState {
    r: Vec<f64>,
    b: DenseMat,
    z: DenseMat,
    w: DenseMat,
    vr: QrState,
    b_block_ends: Vec<usize>,
    variant: ArnoldiVariant,
    counters: CostCounters,
    converged_by_breakdown: bool,
    last_projection_factor: Option<DenseMat>,
}

impl ArnoldiState {
    /// Seeds `V₁ = r/‖r‖`.
    pub fn new(r: &[f64], variant: ArnoldiVariant) -> Result<Self> {
        let n = r.len();
        Ok(Self {
            r: r.to_vec(),
            b: DenseMat::zeros(n, 0),
            z: DenseMat::zeros(n, 0),
            w: DenseMat::zeros(n, 0),
            vr: QrState::from_first_column(r)?,
            b_block_ends: Vec::new(),
            variant,
            counters: CostCounters::default(),
            converged_by_breakdown: false,
            last_projection_factor: None,
        })
    }

    pub fn n(&self) -> usize {
        self.r.len()
    }

    pub fn beta(&self) -> f64 {
        self.vr.t().get(0, 0)
    }

    /// Krylov columns generated so far.
    pub fn p(&self) -> usize {
        self.w.cols()
    }

    pub fn residual(&self) -> &[f64] {
        &self.r
    }

    pub fn b(&self) -> &DenseMat {
        &self.b
    }

    pub fn z(&self) -> &DenseMat {
        &self.z
    }

    pub fn w(&self) -> &DenseMat {
        &self.w
    }

    pub fn v(&self) -> &DenseMat {
        self.vr.q()
    }

    pub fn r_factor(&self) -> &DenseMat {
        self.vr.t()
    }

    pub fn variant(&self) -> ArnoldiVariant {
        self.variant
    }

    pub fn counters(&self) -> CostCounters {
        self.counters
    }

    pub fn converged_by_breakdown(&self) -> bool {
        self.converged_by_breakdown
    }

    /// Column ranges of `B`, one per block step.
    pub fn b_block_ends(&self) -> &[usize] {
        &self.b_block_ends
    }

    /// The newest block of `B`.
    pub fn newest_b_block(&self) -> DenseMat {
        let end = self.b.cols();
        let start = self.b_block_ends.iter().rev().nth(1).copied().unwrap_or(0);
        self.b.columns(start..end)
    }

    /// Coefficients of the newest modified-step projection, kept for logging.
    pub fn last_projection_factor(&self) -> Option<&DenseMat> {
        self.last_projection_factor.as_ref()
    }

    /// `H = R[0..=p, 1..=p]`.
    pub fn hessenberg(&self) -> DenseMat {
        let p = self.p();
        self.vr.t().submatrix(0..p + 1, 1..p + 1)
    }

    /// `‖[r | W] − V R‖_F / ‖[r | W]‖_F`.
    pub fn factorization_residual(&self) -> f64 {
        let mut rw = DenseMat::from_columns(self.n(), std::slice::from_ref(&self.r));
        rw.append_cols(&self.w);
        let vr = self.vr.q().matmul(self.vr.t());
        rw.sub(&vr).frobenius_norm() / rw.frobenius_norm()
    }

    /// One block step of the configured variant producing up to `width`
    /// new columns.
    pub fn step(&mut self, ctx: &StepContext<'_>, width: usize) -> Result<StepOutcome> {
        match self.variant {
            ArnoldiVariant::Classical => classical_step(self, ctx, width),
            ArnoldiVariant::Modified => modified_step(self, ctx, width),
        }
    }

    fn krylov_block(&mut self, ctx: &StepContext<'_>, width: usize) -> Result<DenseMat> {
        if self.converged_by_breakdown {
            return Err(Error::InvalidInput("Arnoldi state already broke down".into()));
        }
        if width == 0 {
            return Err(Error::InvalidInput("block width must be at least 1".into()));
        }
        let v = self.vr.q().col(self.vr.cols() - 1).to_vec();
        let k = build_krylov_block(ctx.basis_op, &v, width, ctx.kind, ctx.normalize)?;
        self.counters.operator_applications += k.cols() - 1;
        Ok(k)
    }

    fn extend(&mut self, ctx: &StepContext<'_>, b: DenseMat) -> Result<StepOutcome> {
        let n = self.n();
        let cols = b.cols();
        let mut z = DenseMat::zeros(n, cols);
        let mut w = DenseMat::zeros(n, cols);
        for j in 0..cols {
            let zj = z.col_mut(j);
            zj.copy_from_slice(b.col(j));
            ctx.right.apply_inverse_in_place(zj);
            let mut wj = vec![0.0; n];
            ctx.a.apply(z.col(j), &mut wj);
            ctx.left.apply_inverse_in_place(&mut wj);
            w.col_mut(j).copy_from_slice(&wj);
        }
        if !w.is_finite() {
            return Err(Error::NonFinite("Arnoldi block W"));
        }
        self.counters.operator_applications += cols;
        let report = orthogonalize(ctx.scheme, &mut self.vr, &w)?;
        self.counters.projections += report.projections;
        self.counters.intra_qrs += report.intra_qrs;
        self.counters.block_steps += 1;
        self.b.append_cols(&b);
        self.z.append_cols(&z);
        self.w.append_cols(&w);
        self.b_block_ends.push(self.b.cols());
        if let Some(col) = report.breakdown {
            happy_breakdown_truncate(self, col);
        }
        Ok(StepOutcome {
            new_cols: report.breakdown.map_or(cols, |c| c + 1),
            breakdown: report.breakdown,
        })
    }
}

/// `B ← K`, then `Z`, `W` and the `[r | W]` factorization are extended.
pub fn classical_step(state: &mut ArnoldiState, ctx: &StepContext<'_>, width: usize) -> Result<StepOutcome> {
    let k = state.krylov_block(ctx, width)?;
    state.extend(ctx, k)
}

/// `B ←` Q-factor of `K` twice projected against `V_{1:(i−1)s}`, then as
/// [`classical_step`].
pub fn modified_step(state: &mut ArnoldiState, ctx: &StepContext<'_>, width: usize) -> Result<StepOutcome> {
    let k = state.krylov_block(ctx, width)?;
    if k.cols() == 1 {
        // The block is the newest column of V, already orthonormal to the rest.
        return state.extend(ctx, k);
    }
    let prior = state.vr.cols() - 1;
    let basis = state.vr.q().columns(0..prior);
    let proj = bcgsi_plus_against(&basis, &k)?;
    state.counters.projections += if prior > 0 { 2 } else { 0 };
    state.counters.intra_qrs += 2;
    let keep = match proj.breakdown {
        Some(col) => col.max(1),
        None => k.cols(),
    };
    let mut b = proj.q;
    b.truncate_cols(keep);
    state.last_projection_factor = Some(proj.offdiag);
    state.extend(ctx, b)
}

/// Drops every new column after the dependent one at `col` (0-based within
/// the newest block) and flags the state as converged by breakdown.
pub fn happy_breakdown_truncate(state: &mut ArnoldiState, col: usize) {
    let start = state.b_block_ends.iter().rev().nth(1).copied().unwrap_or(0);
    let keep = (start + col + 1).min(state.b.cols());
    state.b.truncate_cols(keep);
    state.z.truncate_cols(keep);
    state.w.truncate_cols(keep);
    state.vr.truncate(keep + 1);
    if let Some(last) = state.b_block_ends.last_mut() {
        *last = keep;
    }
    state.converged_by_breakdown = true;
}

/// Column norms of `W`, for the key-dimension criterion.
pub fn column_norms(m: &DenseMat) -> Vec<f64> {
    (0..m.cols()).map(|j| norm2(m.col(j))).collect()
}
