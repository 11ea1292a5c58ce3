//! The outer s-step GMRES loop: block Arnoldi steps, Givens least squares,
//! stopping criteria, restarts and solution formation.

use crate::arnoldi::{ArnoldiState, ArnoldiVariant, StepContext};
use crate::basis::{
    chebyshev_params, compute_ritz_values, leja_order, BasisKind, LinearOperator, PreconditionedOperator,
    MAX_RITZ_BLOCK,
};
use crate::dense::{norm2, DenseMat, GivensRotation, UNIT_ROUNDOFF};
use crate::diagnostics::{backward_error, measure, IterationRecord, SolveStatus};
use crate::error::{Error, Result};
use crate::orth::OrthoScheme;
use crate::sparse::{CsrMatrix, Preconditioner};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BasisChoice {
    Monomial,
    #[default]
    Newton,
    Chebyshev,
}

/// Operator the basis polynomials are evaluated with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BasisOperator {
    #[default]
    Plain,
    Preconditioned,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub s: usize,
    /// Cap on block steps over the whole solve.
    pub max_outer: Option<usize>,
    /// Cap on restarts after the first cycle.
    pub max_restarts: usize,
    pub basis: BasisChoice,
    pub variant: ArnoldiVariant,
    pub scheme: OrthoScheme,
    /// Backward-error threshold, `n·u` when unset.
    pub tol: Option<f64>,
    /// Least-squares residual threshold, `tol` when unset.
    pub tol_ls: Option<f64>,
    /// Key-dimension threshold, `√n·u` when unset.
    pub tol_h: Option<f64>,
    pub restart: Option<usize>,
    pub left: Preconditioner,
    pub right: Preconditioner,
    pub basis_operator: BasisOperator,
    pub check_backward_every: usize,
    pub normalize_basis: bool,
    /// Condition numbers are measured every this many block steps; 0 disables.
    pub diag_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            s: 1,
            max_outer: None,
            max_restarts: 10,
            basis: BasisChoice::default(),
            variant: ArnoldiVariant::default(),
            scheme: OrthoScheme::default(),
            tol: None,
            tol_ls: None,
            tol_h: None,
            restart: None,
            left: Preconditioner::Identity,
            right: Preconditioner::Identity,
            basis_operator: BasisOperator::default(),
            check_backward_every: 1,
            normalize_basis: true,
            diag_every: 1,
        }
    }
}

/// Tolerances with defaults resolved for a given dimension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub tol: f64,
    pub tol_ls: f64,
    pub tol_h: f64,
}

impl SolverConfig {
    pub fn tolerances(&self, n: usize) -> Tolerances {
        let tol = self.tol.unwrap_or(n as f64 * UNIT_ROUNDOFF);
        Tolerances {
            tol,
            tol_ls: self.tol_ls.unwrap_or(tol),
            tol_h: self.tol_h.unwrap_or((n as f64).sqrt() * UNIT_ROUNDOFF),
        }
    }

    /// Default block-step cap: one Krylov space of dimension `n`, or every
    /// allowed restart cycle.
    pub fn outer_cap(&self, n: usize) -> usize {
        self.max_outer.unwrap_or_else(|| match self.restart {
            Some(m) => (self.max_restarts + 1) * m.div_ceil(self.s),
            None => n.div_ceil(self.s),
        })
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.s == 0 || self.s > n {
            return Err(Error::InvalidInput(format!("block size s must lie in 1..={n}, got {}", self.s)));
        }
        if let Some(m) = self.restart {
            if m < self.s || m > n {
                return Err(Error::InvalidInput(format!(
                    "restart length must satisfy s <= restart <= n, got {m}"
                )));
            }
        }
        if self.basis != BasisChoice::Monomial && self.s > MAX_RITZ_BLOCK {
            return Err(Error::InvalidInput(format!(
                "Newton and Chebyshev bases support s <= {MAX_RITZ_BLOCK}"
            )));
        }
        let t = self.tolerances(n);
        if !(t.tol > 0.0 && t.tol_ls > 0.0 && t.tol_h > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if self.check_backward_every == 0 {
            return Err(Error::InvalidInput("check_backward_every must be at least 1".into()));
        }
        for (p, side) in [(&self.left, "left"), (&self.right, "right")] {
            if let Preconditioner::Jacobi(d) = p {
                if d.len() != n {
                    return Err(Error::InvalidInput(format!("{side} preconditioner has wrong length")));
                }
            }
        }
        Ok(())
    }
}

/// Givens QR of the Hessenberg least-squares problem, grown column by column.
#[derive(Clone, Debug, PartialEq)]
pub struct LsState {
    beta: f64,
    rotations: Vec<GivensRotation>,
    t: DenseMat,
    g: Vec<f64>,
}

impl LsState {
    pub fn new(beta: f64) -> Self {
        Self {
            beta,
            rotations: Vec::new(),
            t: DenseMat::zeros(0, 0),
            g: vec![beta],
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn p(&self) -> usize {
        self.rotations.len()
    }

    pub fn rotations(&self) -> &[GivensRotation] {
        &self.rotations
    }

    pub fn t(&self) -> &DenseMat {
        &self.t
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    /// `|g_{p+1}|`, the least-squares residual norm.
    pub fn residual_estimate(&self) -> f64 {
        self.g[self.p()].abs()
    }

    /// Least-squares residual norm using only the first `p` columns,
    /// `‖g_{p+1:end}‖`.
    pub fn residual_estimate_at(&self, p: usize) -> f64 {
        norm2(&self.g[p..])
    }
}

/// Folds the next columns of `H` into the factorization and returns the new
/// residual estimate.
///
/// Column `c` of `h_new` is global column `p + c`, with entries in rows
/// `0..=p + c + 1`.
pub fn givens_update(ls: &mut LsState, h_new: &DenseMat) -> Result<f64> {
    let p0 = ls.p();
    let k = h_new.cols();
    if h_new.rows() < p0 + k + 1 {
        return Err(Error::DimensionMismatch {
            context: "givens_update rows",
            expected: p0 + k + 1,
            found: h_new.rows(),
        });
    }
    let mut t = ls.t.resized(p0 + k, p0 + k);
    for c in 0..k {
        let j = p0 + c;
        let mut col: Vec<f64> = (0..=j + 1).map(|i| h_new.get(i, c)).collect();
        for rot in &ls.rotations {
            rot.apply_to(&mut col);
        }
        let (rot, r) = GivensRotation::zeroing(col[j], col[j + 1], j);
        col[j] = r;
        col[j + 1] = 0.0;
        for (i, &v) in col.iter().enumerate().take(j + 1) {
            t.set(i, j, v);
        }
        ls.g.push(0.0);
        rot.apply_to(&mut ls.g);
        ls.rotations.push(rot);
    }
    ls.t = t;
    if ls.g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("least-squares update"));
    }
    Ok(ls.residual_estimate())
}

/// `x0 + Z y` with `T y = g` on the leading `p` columns.
///
/// Fails with the first column whose diagonal is not above `u·max|T|`.
pub fn form_solution(ls: &LsState, z: &DenseMat, x0: &[f64], p: usize) -> Result<Vec<f64>> {
    let t = ls.t.leading(p, p);
    let tmax = t.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(column) = (0..p).find(|&j| t.get(j, j).abs() <= UNIT_ROUNDOFF * tmax) {
        return Err(Error::SingularTriangular { column });
    }
    let y = crate::dense::solve_upper_triangular(&t, &ls.g[..p]);
    let mut x = x0.to_vec();
    for (j, &yj) in y.iter().enumerate() {
        crate::dense::axpy(yj, z.col(j), &mut x);
    }
    Ok(x)
}

/// Like [`form_solution`], dropping trailing columns after a singular one.
pub fn form_solution_robust(ls: &LsState, z: &DenseMat, x0: &[f64], p: usize) -> Result<(Vec<f64>, usize)> {
    let mut p = p;
    loop {
        match form_solution(ls, z, x0, p) {
            Ok(x) => return Ok((x, p)),
            Err(Error::SingularTriangular { column }) => p = column,
            Err(e) => return Err(e),
        }
    }
}

/// Outcome of the stopping checks after one block step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopCheck {
    /// Least-squares criterion held.
    pub ls_satisfied: bool,
    /// Column count at which the key-dimension criterion fired.
    pub key_dimension: Option<usize>,
}

/// Evaluates the cheap criteria on the newest columns `p_old..p_new`.
pub fn check_stop(ls: &LsState, state: &ArnoldiState, tol: &Tolerances, p_old: usize) -> StopCheck {
    let ls_satisfied = ls.residual_estimate() <= tol.tol_ls * ls.beta();
    let r = state.r_factor();
    let w = state.w();
    let mut w_sq: f64 = (0..p_old).map(|j| norm2(w.col(j)).powi(2)).sum();
    let mut key_dimension = None;
    for j in p_old..state.p() {
        w_sq += norm2(w.col(j)).powi(2);
        if r.get(j + 1, j + 1).abs() <= tol.tol_h * w_sq.sqrt() {
            key_dimension = Some(j + 1);
            break;
        }
    }
    StopCheck {
        ls_satisfied,
        key_dimension,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub status: SolveStatus,
    pub records: Vec<IterationRecord>,
    pub outer_iterations: usize,
    pub restarts: usize,
    /// Backward error of `x`.
    pub backward_error: f64,
}

impl SolveResult {
    pub fn max_cond_b_tilde(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.cond_b_tilde).reduce(f64::max)
    }

    pub fn min_backward_error(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.backward_error).reduce(f64::min)
    }
}

/// Resolves the basis parameters for a cycle started at `r`.
pub fn resolve_basis(choice: BasisChoice, op: &dyn LinearOperator, r: &[f64], s: usize) -> Result<BasisKind> {
    if choice == BasisChoice::Monomial || s == 1 {
        return Ok(BasisKind::Monomial);
    }
    let ritz = compute_ritz_values(op, r, s.min(op.dim()))?;
    Ok(match choice {
        BasisChoice::Newton => BasisKind::Newton {
            shifts: leja_order(&ritz.values),
        },
        _ => {
            let p = chebyshev_params(&ritz)?;
            if p.degenerate {
                BasisKind::Monomial
            } else {
                BasisKind::Chebyshev {
                    center: p.center,
                    focal: p.focal,
                }
            }
        }
    })
}

enum CycleEnd {
    Done(SolveStatus),
    Restart,
}

struct Problem<'a> {
    a: &'a CsrMatrix,
    b: &'a [f64],
    a_fro: f64,
    cfg: &'a SolverConfig,
    tol: Tolerances,
    outer_cap: usize,
}

struct Progress {
    outer: usize,
    records: Vec<IterationRecord>,
}

/// Runs s-step GMRES, restarting when `cfg.restart` is set.
pub fn solve(a: &CsrMatrix, b: &[f64], x0: &[f64], cfg: &SolverConfig) -> Result<SolveResult> {
    let n = a.n();
    for (len, context) in [(b.len(), "right-hand side"), (x0.len(), "initial guess")] {
        if len != n {
            return Err(Error::DimensionMismatch {
                context,
                expected: n,
                found: len,
            });
        }
    }
    if b.iter().chain(x0).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("solve inputs"));
    }
    cfg.validate(n)?;
    let problem = Problem {
        a,
        b,
        a_fro: a.frobenius_norm(),
        cfg,
        tol: cfg.tolerances(n),
        outer_cap: cfg.outer_cap(n),
    };
    let mut progress = Progress {
        outer: 0,
        records: Vec::new(),
    };
    let cycles = if cfg.restart.is_some() { cfg.max_restarts + 1 } else { 1 };
    let mut x = x0.to_vec();
    let mut status = SolveStatus::MaxIters;
    let mut restarts = 0;
    for cycle in 0..cycles {
        restarts = cycle;
        let (x_new, end) = run_cycle(&problem, &x, cycle, &mut progress)?;
        x = x_new;
        match end {
            CycleEnd::Done(s) => {
                status = s;
                break;
            }
            CycleEnd::Restart => {
                if cycle + 1 == cycles {
                    status = SolveStatus::MaxIters;
                    if let Some(last) = progress.records.last_mut() {
                        last.stop_reason = Some(status);
                    }
                }
            }
        }
    }
    let be = backward_error(a, problem.a_fro, b, &x);
    Ok(SolveResult {
        x,
        status,
        records: progress.records,
        outer_iterations: progress.outer,
        restarts,
        backward_error: be,
    })
}

/// [`solve`] with a restart length; fails if `cfg.restart` is unset.
pub fn solve_restarted(a: &CsrMatrix, b: &[f64], x0: &[f64], cfg: &SolverConfig) -> Result<SolveResult> {
    if cfg.restart.is_none() {
        return Err(Error::InvalidInput("solve_restarted needs a restart length".into()));
    }
    solve(a, b, x0, cfg)
}

fn run_cycle(pb: &Problem<'_>, x0: &[f64], cycle: usize, progress: &mut Progress) -> Result<(Vec<f64>, CycleEnd)> {
    let cfg = pb.cfg;
    let n = pb.a.n();
    let mut ax = vec![0.0; n];
    pb.a.spmv_into(x0, &mut ax);
    let mut r: Vec<f64> = pb.b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    cfg.left.apply_inverse_in_place(&mut r);
    if norm2(&r) == 0.0 {
        return Ok((x0.to_vec(), CycleEnd::Done(SolveStatus::ConvergedBackward)));
    }

    let preconditioned = PreconditionedOperator {
        a: pb.a,
        left: &cfg.left,
        right: &cfg.right,
    };
    let basis_op: &dyn LinearOperator = match cfg.basis_operator {
        BasisOperator::Plain => pb.a,
        BasisOperator::Preconditioned => &preconditioned,
    };
    let kind = resolve_basis(cfg.basis, basis_op, &r, cfg.s)?;
    let ctx = StepContext {
        a: pb.a,
        left: &cfg.left,
        right: &cfg.right,
        basis_op,
        kind: &kind,
        scheme: cfg.scheme,
        normalize: cfg.normalize_basis,
    };

    let mut state = ArnoldiState::new(&r, cfg.variant)?;
    let mut ls = LsState::new(state.beta());
    let cycle_limit = cfg.restart.unwrap_or(n).min(n);
    let mut steps_in_cycle = 0;
    let mut x = x0.to_vec();

    loop {
        let p_old = state.p();
        let width = cfg.s.min(cycle_limit - p_old);
        if width == 0 || progress.outer >= pb.outer_cap {
            let end = if cfg.restart.is_some() && width == 0 && progress.outer < pb.outer_cap {
                CycleEnd::Restart
            } else {
                CycleEnd::Done(SolveStatus::MaxIters)
            };
            if let (CycleEnd::Done(s), Some(last)) = (&end, progress.records.last_mut()) {
                last.stop_reason = Some(*s);
            }
            return Ok((x, end));
        }
        progress.outer += 1;
        steps_in_cycle += 1;
        let outcome = state.step(&ctx, width)?;
        let h = state.hessenberg();
        let h_new = h.submatrix(0..state.p() + 1, p_old..state.p());
        givens_update(&mut ls, &h_new).map_err(|_| non_finite(progress))?;

        let check = check_stop(&ls, &state, &pb.tol, p_old);
        let p_eff = check.key_dimension.unwrap_or(state.p());
        let (x_prov, p_used) = form_solution_robust(&ls, state.z(), x0, p_eff)?;
        if x_prov.iter().any(|v| !v.is_finite()) {
            return Err(non_finite(progress));
        }
        let conditioning = cfg.diag_every > 0 && progress.outer.is_multiple_of(cfg.diag_every);
        let mut rec = measure(
            &state,
            p_eff,
            ls.residual_estimate_at(p_used),
            &x_prov,
            pb.a,
            pb.a_fro,
            pb.b,
            conditioning,
        );
        rec.outer = progress.outer;
        rec.restart_cycle = cycle;
        let eta = rec.backward_error.unwrap_or(f64::INFINITY);
        if !eta.is_finite() {
            progress.records.push(rec);
            return Err(non_finite(progress));
        }
        x = x_prov;

        let scheduled = steps_in_cycle % cfg.check_backward_every == 0;
        let cycle_over = check.key_dimension.is_some() || outcome.breakdown.is_some();
        let evaluate = scheduled || check.ls_satisfied || cycle_over || state.p() == cycle_limit;
        let mut end = None;
        if evaluate && eta <= pb.tol.tol {
            end = Some(CycleEnd::Done(if outcome.breakdown.is_some() {
                SolveStatus::BreakdownConverged
            } else if check.ls_satisfied && !scheduled {
                SolveStatus::ConvergedLs
            } else {
                SolveStatus::ConvergedBackward
            }));
        } else if cycle_over || state.p() == cycle_limit {
            let restart_left = cfg.restart.is_some();
            end = Some(if restart_left {
                CycleEnd::Restart
            } else if cycle_over {
                CycleEnd::Done(SolveStatus::KeyDimensionReached)
            } else {
                CycleEnd::Done(SolveStatus::MaxIters)
            });
        }
        if let Some(CycleEnd::Done(s)) = &end {
            rec.stop_reason = Some(*s);
        }
        progress.records.push(rec);
        if let Some(end) = end {
            return Ok((x, end));
        }
    }
}

fn non_finite(progress: &Progress) -> Error {
    Error::NonFiniteIterate {
        outer: progress.outer,
        records: progress.records.clone(),
    }
}
