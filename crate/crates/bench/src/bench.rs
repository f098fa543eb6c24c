use mpir_core::factor::{solve_inplace, solve_otf, LuFactors};
use mpir_core::ir::{factor_working, refine_with_factors, IrConfig, Strategy, Termination};
use mpir_core::mparray::{cast_matrix, cast_vector, PMatrix};
use mpir_core::problems::{build_operator, make_rhs, ProblemSpec, RhsKind, Source};
use mpir_core::{dispatch_lattice, Error, Promote, Real, Result};

use crate::record::RunRecord;
use crate::timing::time_median;

struct Measured {
    lu: f64,
    solve: f64,
    ir_loop: f64,
    iterations: usize,
    reason: Termination,
    final_residual: f64,
}

/// Times one benchmark cell. Each phase is the median of `reps` runs after
/// one warmup: the copy to `tf` with the factorization, a single solve of the
/// configured strategy against `b` as residual, and the refinement loop.
///
/// A factorization breakdown is reported through `reason` with zero solve
/// and loop times.
pub fn run_benchmark(spec: &ProblemSpec, cfg: &IrConfig, reps: usize) -> Result<RunRecord> {
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    cfg.validate()?;
    let a = build_operator(spec)?;
    let m = dispatch_lattice!(cfg.tf, cfg.tw, cfg.tr, |F, W, R| measure::<F, W, R>(
        &a, spec.rhs, cfg, reps
    ))
    .unwrap_or_else(|| Err(Error::InvalidConfig("precision triple off the lattice".into())))?;
    Ok(RunRecord {
        n: a.rows(),
        tf: cfg.tf,
        tw: cfg.tw,
        tr: cfg.tr,
        strategy: cfg.strategy,
        policy: cfg.policy,
        alpha: cfg.alpha,
        rhs: spec.rhs,
        matrix: match &spec.source {
            Source::Greens => None,
            Source::File(p) => Some(p.display().to_string()),
        },
        lu_seconds: m.lu,
        solve_seconds: m.solve,
        ir_loop_seconds: m.ir_loop,
        iterations: m.iterations,
        reason: m.reason,
        final_residual: m.final_residual.is_finite().then_some(m.final_residual),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        repetitions: reps,
        comparable: true,
    })
}

fn measure<F: Real, W: Real, R>(a64: &PMatrix<f64>, rhs: RhsKind, cfg: &IrConfig, reps: usize) -> Result<Measured>
where
    R: Promote<W> + Promote<F>,
    f64: Promote<W>,
{
    let a = cast_matrix::<f64, W>(a64).0;
    let (b, _) = make_rhs(&a, rhs);

    let (lu, factors) = time_median(reps, || factor_working::<F, W>(&a));
    let f: LuFactors<F> = match factors {
        Ok(f) => f,
        Err(Error::ZeroPivot { .. } | Error::NonFinite { .. }) => {
            return Ok(Measured {
                lu,
                solve: 0.0,
                ir_loop: 0.0,
                iterations: 0,
                reason: Termination::SolveFailure,
                final_residual: f64::NAN,
            });
        }
        Err(e) => return Err(e),
    };

    let r = cast_vector::<W, R>(&b).0;
    let (solve, _) = match cfg.strategy {
        Strategy::Otf => time_median(reps, || solve_otf(&f, &r).map(|_| ())),
        Strategy::Ip => time_median(reps, || solve_inplace(&f, &r).map(|_| ())),
    };

    let mut counts = Vec::with_capacity(reps + 1);
    let (ir_loop, last) = time_median(reps, || {
        let res = refine_with_factors::<F, W, R>(&a, &b, &f, cfg);
        if let Ok(res) = &res {
            counts.push(res.iterations);
        }
        res
    });
    let res = last?;
    if cfg.strategy == Strategy::Otf {
        assert!(
            counts.iter().all(|&k| k == res.iterations),
            "OTF iteration counts differ across repetitions: {counts:?}"
        );
    }
    Ok(Measured {
        lu,
        solve,
        ir_loop,
        iterations: res.iterations,
        reason: res.history.reason,
        final_residual: res.history.final_residual(),
    })
}
