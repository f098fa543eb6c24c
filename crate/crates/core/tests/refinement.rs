//! Refinement on the Green's-operator benchmark system.

use mpir_core::factor::{lu_factor, solve_otf};
use mpir_core::ir::{
    error_bound, factor_working, iteration_matrices, refine, IrConfig, IrResult, Strategy, Termination,
};
use mpir_core::mparray::{cast_matrix, cast_vector, matrix_norm_inf, norm_inf, residual, PMatrix, PVector};
use mpir_core::problems::{build_operator, cond_inf_exact, make_rhs, relative_error, ProblemSpec, RhsKind};
use mpir_core::{f16, Precision, Promote, Real};

fn greens(n: usize) -> PMatrix<f64> {
    build_operator(&ProblemSpec::greens(n)).unwrap()
}

fn benchmark_config(strategy: Strategy) -> IrConfig {
    IrConfig::new(Precision::Single, Precision::Double, Precision::Double).with_strategy(strategy)
}

fn solve(n: usize, strategy: Strategy) -> (PMatrix<f64>, PVector<f64>, IrResult<f64>) {
    let a = greens(n);
    let (b, _) = make_rhs(&a, RhsKind::Ones);
    let res = refine::<f32, f64, f64>(&a, &b, &benchmark_config(strategy)).unwrap();
    (a, b, res)
}

#[test]
fn n200_converges_in_three_iterations() {
    for strategy in [Strategy::Otf, Strategy::Ip] {
        let (_, _, res) = solve(200, strategy);
        assert_eq!(res.history.reason, Termination::Converged, "{strategy:?}");
        assert_eq!(res.iterations, 3, "{strategy:?}");
    }
}

#[test]
fn n400_iteration_counts_within_one() {
    let (_, _, otf) = solve(400, Strategy::Otf);
    let (_, _, ip) = solve(400, Strategy::Ip);
    assert!(otf.iterations.abs_diff(4) <= 1, "otf {}", otf.iterations);
    assert!(ip.iterations.abs_diff(5) <= 1, "ip {}", ip.iterations);
    assert!(ip.iterations <= otf.iterations + 1);
}

#[test]
fn residuals_decrease_until_termination() {
    for n in [200, 400] {
        for strategy in [Strategy::Otf, Strategy::Ip] {
            let (a, b, res) = solve(n, strategy);
            let h = &res.history;
            assert_eq!(h.residual_norms.len(), res.iterations + 1);
            let accepted = &h.residual_norms[..=h.accepted];
            assert!(
                accepted.windows(2).all(|w| w[1] < w[0]),
                "{n} {strategy:?}: {accepted:?}"
            );

            // The reported residual is that of the returned iterate.
            let r = residual(&a, &b, &res.x).unwrap();
            assert_eq!(norm_inf(&r).unwrap(), h.final_residual());

            if h.reason == Termination::Converged {
                let cfg = benchmark_config(strategy);
                let bound = cfg.success_threshold(
                    matrix_norm_inf(&a).unwrap(),
                    norm_inf(&res.x).unwrap(),
                    norm_inf(&b).unwrap(),
                );
                assert!(h.final_residual() <= bound);
            }
        }
    }
}

#[test]
fn otf_runs_are_reproducible() {
    let (_, _, first) = solve(300, Strategy::Otf);
    let (_, _, second) = solve(300, Strategy::Otf);
    assert!(first.x.bitwise_eq(&second.x));
    assert_eq!(first.history, second.history);
}

/// Three-precision run versus the two-precision run on the promoted data.
fn promoted_equivalence<F: Real, W: Real>(n: usize)
where
    f64: Promote<W> + Promote<F>,
{
    let a64 = greens(n);
    let (a, _) = cast_matrix::<f64, W>(&a64);
    let (b, _) = make_rhs(&a, RhsKind::Ones);
    let three = IrConfig::new(F::PRECISION, W::PRECISION, Precision::Double);
    let two = IrConfig::new(F::PRECISION, Precision::Double, Precision::Double);

    let lhs = refine::<F, W, f64>(&a, &b, &three).unwrap();
    let a_up = cast_matrix::<W, f64>(&a).0;
    let b_up = cast_vector::<W, f64>(&b).0;
    let rhs = refine::<F, f64, f64>(&a_up, &b_up, &two).unwrap();

    assert_eq!(lhs.iterations, rhs.iterations);
    assert_eq!(lhs.history, rhs.history);
    assert!(lhs.x.bitwise_eq(&rhs.x));
}

#[test]
fn three_precision_run_equals_promoted_two_precision_run() {
    for n in [50, 200] {
        promoted_equivalence::<f32, f32>(n);
        promoted_equivalence::<f16, f32>(n);
    }
}

#[test]
fn error_within_condition_bound() {
    for n in [100, 200] {
        let a = greens(n);
        let (b, _) = make_rhs(&a, RhsKind::Manufactured);
        let kappa = cond_inf_exact(&a).unwrap();
        let oracle = solve_otf(&lu_factor(a.clone()).unwrap(), &b).unwrap();
        for strategy in [Strategy::Otf, Strategy::Ip] {
            let res = refine::<f32, f64, f64>(&a, &b, &benchmark_config(strategy)).unwrap();
            let tau = res.history.final_residual() / norm_inf(&b).unwrap();
            let err = relative_error(&res.x, &oracle).unwrap();
            assert!(err <= error_bound(tau, kappa), "{n} {strategy:?}: {err:e}");
        }
    }
}

#[test]
fn manufactured_rhs_recovered_by_double_solve() {
    let a = greens(150);
    let (b, x_true) = make_rhs(&a, RhsKind::Manufactured);
    let x = solve_otf(&lu_factor(a.clone()).unwrap(), &b).unwrap();
    let kappa = cond_inf_exact(&a).unwrap();
    let err = relative_error(&x, &x_true.unwrap()).unwrap();
    assert!(err <= kappa * 100.0 * Precision::Double.unit_roundoff(), "{err:e}");
}

#[test]
fn iteration_matrix_of_greens_problem_contracts() {
    let a = greens(50);
    let f = factor_working::<f32, f64>(&a).unwrap();
    let (m, m_r) = iteration_matrices::<f32, f64, f64>(&a, &f).unwrap();
    let norm_m = matrix_norm_inf(&m).unwrap();
    let norm_mr = matrix_norm_inf(&m_r).unwrap();
    assert!(norm_m < 1.0 && norm_mr < 1.0);
    // Regression constants from this implementation's deterministic kernels.
    assert!((norm_m - 4.116062807549413e-5).abs() <= 1e-9 * norm_m, "{norm_m:e}");
    assert!((norm_mr - 1.0708739491781943e-4).abs() <= 1e-9 * norm_mr, "{norm_mr:e}");
}

#[test]
fn exact_factors_give_vanishing_iteration_matrix() {
    let a = greens(40);
    let f = factor_working::<f64, f64>(&a).unwrap();
    let (m, _) = iteration_matrices::<f64, f64, f64>(&a, &f).unwrap();
    let u = Precision::Double.unit_roundoff();
    let kappa = cond_inf_exact(&a).unwrap();
    // ||M|| is a backward-error quantity amplified by the conditioning of A.
    assert!(matrix_norm_inf(&m).unwrap() <= 100.0 * u * kappa);
}
