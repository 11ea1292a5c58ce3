mod common;

use proptest::prelude::*;
use sstep_gmres::arnoldi::{ArnoldiState, ArnoldiVariant, StepContext};
use sstep_gmres::dense::{norm2, solve_upper_triangular, DenseMat, UNIT_ROUNDOFF};
use sstep_gmres::diagnostics::SolveStatus;
use sstep_gmres::gmres::{
    givens_update, resolve_basis, solve, BasisChoice, LsState, SolverConfig,
};
use sstep_gmres::orth::{loss_of_orthogonality, OrthoScheme};
use sstep_gmres::rng::{gaussian_vector, SolverRng};
use sstep_gmres::sparse::{spmv, CsrMatrix, Preconditioner};

use common::{randsvd_csr, rel_diff, similar_to_diag};

/// Runs Arnoldi steps alongside the Givens update and hands every
/// intermediate pair to `check`.
fn drive(
    a: &CsrMatrix,
    r: &[f64],
    s: usize,
    variant: ArnoldiVariant,
    choice: BasisChoice,
    max_cols: usize,
    mut check: impl FnMut(&ArnoldiState, &LsState) -> Result<(), TestCaseError>,
) -> Result<(), TestCaseError> {
    let kind = resolve_basis(choice, a, r, s).unwrap();
    let id = Preconditioner::Identity;
    let ctx = StepContext {
        a,
        left: &id,
        right: &id,
        basis_op: a,
        kind: &kind,
        scheme: OrthoScheme::BcgsiPlus,
        normalize: true,
    };
    let mut state = ArnoldiState::new(r, variant).unwrap();
    let mut ls = LsState::new(state.beta());
    while state.p() < max_cols && !state.converged_by_breakdown() {
        let p_old = state.p();
        let width = s.min(max_cols - p_old);
        state.step(&ctx, width).unwrap();
        let h = state.hessenberg();
        givens_update(&mut ls, &h.submatrix(0..state.p() + 1, p_old..state.p())).unwrap();
        check(&state, &ls)?;
    }
    Ok(())
}

fn variant() -> impl Strategy<Value = ArnoldiVariant> {
    prop_oneof![Just(ArnoldiVariant::Classical), Just(ArnoldiVariant::Modified)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn givens_estimate_matches_the_true_ls_residual(
        n in 8usize..=60,
        s in 1usize..=6,
        log_kappa in 0.0f64..6.0,
        mode in 1u8..=5,
        variant in variant(),
        seed in any::<u64>(),
    ) {
        let a = randsvd_csr(n, 10f64.powf(log_kappa), mode, seed);
        let mut rng = SolverRng::new(seed ^ 0x5eed);
        let r = gaussian_vector(&mut rng, n);
        drive(&a, &r, s, variant, BasisChoice::Newton, n, |state, ls| {
            if loss_of_orthogonality(state.v()) > 1e-10 {
                return Ok(());
            }
            let p = state.p();
            let y = solve_upper_triangular(&ls.t().leading(p, p), &ls.g()[..p]);
            let wy = state.w().matvec(&y);
            let resid: Vec<f64> = r.iter().zip(&wy).map(|(x, y)| x - y).collect();
            let direct = norm2(&resid);
            let est = ls.residual_estimate();
            // Forming r − W y directly loses about u·‖W‖·‖y‖ to cancellation.
            let oracle_noise = 10.0 * n as f64 * UNIT_ROUNDOFF * (ls.beta() + state.w().frobenius_norm() * norm2(&y));
            prop_assert!(
                (direct - est).abs() <= 1e-8 * direct.max(est) + oracle_noise,
                "direct {direct:e} estimate {est:e}"
            );
            Ok(())
        })?;
    }

    #[test]
    fn givens_estimate_never_increases(
        n in 8usize..=60,
        s in 1usize..=8,
        log_kappa in 0.0f64..10.0,
        variant in variant(),
        seed in any::<u64>(),
    ) {
        let a = randsvd_csr(n, 10f64.powf(log_kappa), 3, seed);
        let r = vec![1.0; n];
        let mut last = f64::INFINITY;
        drive(&a, &r, s, variant, BasisChoice::Monomial, n, |_, ls| {
            let est = ls.residual_estimate();
            prop_assert!(est <= last + 4.0 * f64::EPSILON * last.min(ls.beta()));
            last = est;
            Ok(())
        })?;
    }

    #[test]
    fn truncated_estimates_match_earlier_steps(n in 8usize..=40, s in 1usize..=5, seed in any::<u64>()) {
        let a = randsvd_csr(n, 1e3, 3, seed);
        let r = vec![1.0; n];
        let mut history: Vec<(usize, f64)> = Vec::new();
        drive(&a, &r, s, ArnoldiVariant::Classical, BasisChoice::Newton, n, |state, ls| {
            history.push((state.p(), ls.residual_estimate()));
            for &(p, est) in &history {
                prop_assert!((ls.residual_estimate_at(p) - est).abs() <= 1e-12 * ls.beta());
            }
            Ok(())
        })?;
    }

    #[test]
    fn variants_coincide_when_s_is_one(
        n in 4usize..=40,
        log_kappa in 0.0f64..8.0,
        mode in 1u8..=5,
        seed in any::<u64>(),
    ) {
        let a = randsvd_csr(n, 10f64.powf(log_kappa), mode, seed);
        let b = vec![1.0; n];
        let cfg = SolverConfig::default();
        let classical = solve(&a, &b, &vec![0.0; n], &cfg).unwrap();
        let modified = solve(
            &a,
            &b,
            &vec![0.0; n],
            &SolverConfig { variant: ArnoldiVariant::Modified, ..cfg.clone() },
        )
        .unwrap();
        prop_assert_eq!(classical, modified);
    }

    #[test]
    fn banded_ls_matches_normal_equations(
        cols in 1usize..=60,
        s in 1usize..=8,
        beta in 0.1f64..10.0,
        seed in any::<u64>(),
    ) {
        let mut rng = SolverRng::new(seed);
        let h = DenseMat::from_fn(cols + 1, cols, |i, j| {
            if i > j + 1 {
                0.0
            } else if i == j {
                4.0 + rng.uniform()
            } else {
                rng.gaussian()
            }
        });
        let mut ls = LsState::new(beta);
        let mut start = 0;
        while start < cols {
            let end = (start + s).min(cols);
            givens_update(&mut ls, &h.submatrix(0..end + 1, start..end)).unwrap();
            start = end;
        }
        let y = solve_upper_triangular(&ls.t().leading(cols, cols), &ls.g()[..cols]);

        let hm = nalgebra::DMatrix::from_column_slice(cols + 1, cols, h.data());
        let mut rhs = nalgebra::DVector::zeros(cols + 1);
        rhs[0] = beta;
        let normal = hm.transpose() * &hm;
        let oracle = normal.cholesky().unwrap().solve(&(hm.transpose() * rhs));
        prop_assert!(rel_diff(&y, oracle.as_slice()) <= 1e-10);
    }
}

#[test]
fn restart_recomputes_the_true_residual() {
    let a = randsvd_csr(20, 1e5, 1, 1);
    let b = vec![1.0; 20];
    let x0 = vec![0.0; 20];
    let dense = a.to_dense();
    for cycles in 0..4 {
        let cfg = SolverConfig {
            s: 3,
            restart: Some(9),
            max_restarts: cycles,
            ..SolverConfig::default()
        };
        let out = solve(&a, &b, &x0, &cfg).unwrap();
        let sparse_r: Vec<f64> = spmv(&a, &out.x).unwrap().iter().zip(&b).map(|(p, q)| q - p).collect();
        let dense_r: Vec<f64> = dense.matvec(&out.x).iter().zip(&b).map(|(p, q)| q - p).collect();
        assert!(rel_diff(&sparse_r, &dense_r) <= 1e-13);

        // The next cycle of a restarted run is a fresh cycle started from `x`.
        let next = solve(&a, &b, &x0, &SolverConfig { max_restarts: cycles + 1, ..cfg.clone() }).unwrap();
        let fresh = solve(&a, &b, &out.x, &SolverConfig { max_restarts: 0, ..cfg.clone() }).unwrap();
        if out.status.is_converged() {
            continue;
        }
        let tail: Vec<_> = next.records.iter().filter(|r| r.restart_cycle == cycles + 1).collect();
        assert_eq!(tail.len(), fresh.records.len());
        for (t, f) in tail.iter().zip(&fresh.records) {
            assert_eq!(t.backward_error, f.backward_error);
            assert_eq!(t.ls_residual_estimate, f.ls_residual_estimate);
        }
    }
}

#[test]
fn diagonal_system_solves_to_closed_form() {
    let d: Vec<f64> = (1..=10).map(f64::from).collect();
    let a = CsrMatrix::diagonal(&d).unwrap();
    let b = vec![1.0; 10];
    for s in [1, 2, 3, 5] {
        for variant in [ArnoldiVariant::Classical, ArnoldiVariant::Modified] {
            let cfg = SolverConfig { s, variant, ..SolverConfig::default() };
            let out = solve(&a, &b, &[0.0; 10], &cfg).unwrap();
            assert!(out.status.is_converged(), "s={s} {variant:?} {:?}", out.status);
            let err = out.x.iter().zip(&d).map(|(x, di)| (x - 1.0 / di).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-11, "s={s} {variant:?} err {err:e}");
        }
    }
}

#[test]
fn identity_converges_in_one_step() {
    let a = CsrMatrix::identity(7);
    let b: Vec<f64> = (0..7).map(|i| (i as f64).sin() + 2.0).collect();
    let out = solve(&a, &b, &[0.0; 7], &SolverConfig { s: 4, ..SolverConfig::default() }).unwrap();
    assert_eq!(out.outer_iterations, 1);
    assert!(out.backward_error <= 1e-15);
    assert!(rel_diff(&out.x, &b) <= 1e-15);
    assert_eq!(out.status, SolveStatus::BreakdownConverged);
}

#[test]
fn bcgsi_plus_keeps_v_orthonormal_until_the_key_dimension() {
    let mut rng = SolverRng::new(9);
    let a = CsrMatrix::from_dense(&similar_to_diag(&mut rng, 50, 1e4)).unwrap();
    let b = vec![1.0; 50];
    for s in [1, 2, 4] {
        let out = solve(&a, &b, &[0.0; 50], &SolverConfig { s, ..SolverConfig::default() }).unwrap();
        for rec in &out.records {
            if rec.stop_reason == Some(SolveStatus::KeyDimensionReached) {
                break;
            }
            assert!(rec.ortho_loss_v.unwrap() <= 1e-12, "s={s} {rec:?}");
        }
    }
}
