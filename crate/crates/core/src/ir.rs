//! Iterative refinement with explicit interprecision transfers.
//!
//! `A` and `b` are stored at the working precision `TW`, the LU factors at
//! `TF`, and the iterate and residual at `TR`. One solve is:
//!
//! ```text
//! x = 0 (TR);  r = upcast(b)
//! A_F = cast(A, TF);  factor A_F = LU
//! loop: d = solve(LU, r);  x += d;  r = upcast(b) - upcast(A) x;  check termination
//! ```
//!
//! When `TR > TW` the iteration converges to the solution of the promoted
//! system `upcast(A) x = upcast(b)`, not of a `TW` problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::{lu_factor, solve_inplace, solve_otf, LuFactors};
use crate::mparray::{
    cast_matrix, cast_vector, matrix_norm_inf, matvec_promoted, norm_inf, residual, AnyMatrix, AnyVector, PMatrix,
    PVector,
};
use crate::precision::{Precision, Promote, Real};

/// Iterations allowed when no explicit limit is configured.
pub const SAFETY_CAP: usize = 1000;

/// Triangular-solve strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Solve at `TR`, promoting factor entries as they are read.
    Otf,
    /// Scale, downcast the residual, solve at `TF`, upcast.
    Ip,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Otf => "otf",
            Strategy::Ip => "ip",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Stop on small residual, insufficient decrease, or too many iterations.
    #[serde(rename = "residual")]
    ResidualTriple,
    /// Stop when the error predicted from the contraction rate is small.
    #[serde(rename = "rate")]
    RateEstimate,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::ResidualTriple => "residual",
            Policy::RateEstimate => "rate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrConfig {
    pub tf: Precision,
    pub tw: Precision,
    pub tr: Precision,
    pub strategy: Strategy,
    pub policy: Policy,
    /// Stagnation ratio: stop once `||r_new|| >= alpha * ||r_old||`.
    pub alpha: f64,
    /// Multiplier `C` in `||r|| <= C u_R (||A|| ||x|| + ||b||)`.
    pub c_success: f64,
    /// `None` means unbounded, subject to [`SAFETY_CAP`].
    pub max_iters: Option<usize>,
    /// Error target for [`Policy::RateEstimate`]; defaults to the unit roundoff of `tw`.
    pub rate_target: Option<f64>,
}

impl Default for IrConfig {
    fn default() -> Self {
        IrConfig {
            tf: Precision::Single,
            tw: Precision::Double,
            tr: Precision::Double,
            strategy: Strategy::Otf,
            policy: Policy::ResidualTriple,
            alpha: 0.9,
            c_success: 1.0,
            max_iters: None,
            rate_target: None,
        }
    }
}

impl IrConfig {
    pub fn new(tf: Precision, tw: Precision, tr: Precision) -> Self {
        IrConfig {
            tf,
            tw,
            tr,
            ..IrConfig::default()
        }
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_policy(mut self, policy: Policy) -> Self {
        self.policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tf <= self.tw && self.tw <= self.tr) {
            return Err(Error::InvalidConfig(format!(
                "precisions must satisfy tf <= tw <= tr, got tf={} tw={} tr={}",
                self.tf, self.tw, self.tr
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.c_success > 0.0 && self.c_success.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "c_success must be positive, got {}",
                self.c_success
            )));
        }
        if let Some(t) = self.rate_target {
            if !(t >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "rate_target must be nonnegative, got {t}"
                )));
            }
        }
        Ok(())
    }

    pub fn iteration_cap(&self) -> usize {
        self.max_iters.unwrap_or(SAFETY_CAP)
    }

    pub fn rate_target(&self) -> f64 {
        self.rate_target.unwrap_or_else(|| self.tw.unit_roundoff())
    }

    /// `C u_R (||A|| ||x|| + ||b||)`.
    pub fn success_threshold(&self, norm_a: f64, norm_x: f64, norm_b: f64) -> f64 {
        self.c_success * self.tr.unit_roundoff() * (norm_a * norm_x + norm_b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    Stagnated,
    IterationLimit,
    SolveFailure,
}

/// Outcome of one termination check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Converged,
    Stagnated,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrHistory {
    /// `||r_k||_inf` for k = 0..=iterations; entry 0 is `||b||`.
    pub residual_norms: Vec<f64>,
    /// `||d_k||_inf` for each correction.
    pub correction_norms: Vec<f64>,
    /// Underflow-to-zero events in the in-place downcast, per iteration.
    pub underflow_counts: Vec<usize>,
    pub reason: Termination,
    /// Index into `residual_norms` of the iterate that was returned.
    pub accepted: usize,
    /// Factorization or solve error behind a [`Termination::SolveFailure`].
    pub failure: Option<Error>,
}

impl IrHistory {
    fn new(r0: f64) -> Self {
        IrHistory {
            residual_norms: vec![r0],
            correction_norms: Vec::new(),
            underflow_counts: Vec::new(),
            reason: Termination::IterationLimit,
            accepted: 0,
            failure: None,
        }
    }

    /// Residual norm of the returned iterate.
    pub fn final_residual(&self) -> f64 {
        self.residual_norms[self.accepted]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrResult<R: Real> {
    pub x: PVector<R>,
    pub history: IrHistory,
    pub iterations: usize,
}

/// Residual-based termination, checked as converged, stagnated, then
/// iteration limit.
pub fn terminate_residual(
    rn_new: f64,
    rn_old: f64,
    norm_a: f64,
    norm_x: f64,
    norm_b: f64,
    iterations: usize,
    cfg: &IrConfig,
) -> Decision {
    if rn_new <= cfg.success_threshold(norm_a, norm_x, norm_b) {
        Decision::Converged
    } else if !(rn_new < cfg.alpha * rn_old) {
        Decision::Stagnated
    } else if iterations >= cfg.iteration_cap() {
        Decision::IterationLimit
    } else {
        Decision::Continue
    }
}

/// Rate-based termination from the most recent correction norms.
///
/// With `sigma = |d_n| / |d_{n-1}|`, the predicted error of the latest
/// iterate is `|d_n| sigma / (1 - sigma)`.
pub fn terminate_rate_estimate(d_norms: &[f64], target: f64) -> Decision {
    let Some(&latest) = d_norms.last() else {
        return Decision::Continue;
    };
    if latest == 0.0 {
        return Decision::Converged;
    }
    let Some(&previous) = d_norms.len().checked_sub(2).and_then(|i| d_norms.get(i)) else {
        return Decision::Continue;
    };
    let sigma = latest / previous;
    if !(sigma < 1.0) {
        return Decision::Continue;
    }
    if latest * sigma / (1.0 - sigma) <= target {
        Decision::Converged
    } else {
        Decision::Continue
    }
}

/// Relative error bound `tau * kappa` for a terminal relative residual `tau`.
pub fn error_bound(tau: f64, kappa: f64) -> f64 {
    tau * kappa
}

fn check_types<F: Real, W: Real, R: Real>(cfg: &IrConfig) -> Result<()> {
    if (F::PRECISION, W::PRECISION, R::PRECISION) != (cfg.tf, cfg.tw, cfg.tr) {
        return Err(Error::InvalidConfig(format!(
            "config asks for tf={} tw={} tr={} but data is tf={} tw={} tr={}",
            cfg.tf,
            cfg.tw,
            cfg.tr,
            F::PRECISION,
            W::PRECISION,
            R::PRECISION
        )));
    }
    Ok(())
}

fn check_system<W: Real>(a: &PMatrix<W>, b: &PVector<W>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "system matrix must be square, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if a.rows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} rows, right-hand side has length {}",
            a.rows(),
            b.len()
        )));
    }
    if a.rows() == 0 {
        return Err(Error::Empty("system of dimension zero"));
    }
    Ok(())
}

/// Copies `a` to `TF` and factors it.
pub fn factor_working<F: Real, W: Real>(a: &PMatrix<W>) -> Result<LuFactors<F>> {
    lu_factor(cast_matrix::<W, F>(a).0)
}

/// Runs the refinement loop against existing factors.
pub fn refine_with_factors<F: Real, W: Real, R>(
    a: &PMatrix<W>,
    b: &PVector<W>,
    f: &LuFactors<F>,
    cfg: &IrConfig,
) -> Result<IrResult<R>>
where
    R: Promote<W> + Promote<F>,
{
    cfg.validate()?;
    check_types::<F, W, R>(cfg)?;
    check_system(a, b)?;
    if f.dim() != a.rows() {
        return Err(Error::DimensionMismatch("factors do not match the system".into()));
    }

    let n = a.rows();
    let norm_a = matrix_norm_inf(a)?;
    let norm_b = norm_inf(b)?.to_f64();

    let mut x = PVector::<R>::zeros(n);
    let mut r = cast_vector::<W, R>(b).0;
    let mut rn = norm_inf(&r)?.to_f64();
    let mut history = IrHistory::new(rn);
    let mut iterations = 0;

    if rn <= cfg.success_threshold(norm_a, 0.0, norm_b) {
        history.reason = Termination::Converged;
        return Ok(IrResult { x, history, iterations });
    }

    let cap = cfg.iteration_cap();
    loop {
        let d = match cfg.strategy {
            Strategy::Otf => {
                history.underflow_counts.push(0);
                solve_otf(f, &r)?
            }
            Strategy::Ip => match solve_inplace(f, &r) {
                Ok(s) => {
                    history.underflow_counts.push(s.underflows());
                    s.correction
                }
                Err(e @ Error::NonFinite { .. }) => {
                    history.reason = Termination::SolveFailure;
                    history.failure = Some(e);
                    return Ok(IrResult { x, history, iterations });
                }
                Err(e) => return Err(e),
            },
        };
        history.correction_norms.push(norm_inf(&d)?.to_f64());

        let mut x_new = x.clone();
        x_new.add_assign(&d)?;
        let r_new = residual(a, b, &x_new)?;
        let rn_new = norm_inf(&r_new)?.to_f64();
        iterations += 1;
        history.residual_norms.push(rn_new);
        let norm_x = norm_inf(&x_new)?.to_f64();

        let decision = match cfg.policy {
            Policy::ResidualTriple => terminate_residual(rn_new, rn, norm_a, norm_x, norm_b, iterations, cfg),
            Policy::RateEstimate => {
                if rn_new <= cfg.success_threshold(norm_a, norm_x, norm_b)
                    || terminate_rate_estimate(&history.correction_norms, cfg.rate_target()) == Decision::Converged
                {
                    Decision::Converged
                } else if iterations >= cap {
                    Decision::IterationLimit
                } else {
                    Decision::Continue
                }
            }
        };

        match decision {
            Decision::Continue => {
                x = x_new;
                r = r_new;
                rn = rn_new;
                history.accepted = iterations;
            }
            Decision::Converged | Decision::IterationLimit => {
                history.reason = if decision == Decision::Converged {
                    Termination::Converged
                } else {
                    Termination::IterationLimit
                };
                history.accepted = iterations;
                return Ok(IrResult {
                    x: x_new,
                    history,
                    iterations,
                });
            }
            Decision::Stagnated => {
                history.reason = Termination::Stagnated;
                if rn_new <= rn {
                    x = x_new;
                    history.accepted = iterations;
                }
                return Ok(IrResult { x, history, iterations });
            }
        }
    }
}

/// Solves `A x = b` by refinement with the precisions fixed by the type
/// parameters, which must agree with `cfg`.
///
/// A factorization breakdown is reported as [`Termination::SolveFailure`]
/// with zero iterations; shape and configuration problems are errors.
pub fn refine<F: Real, W: Real, R>(a: &PMatrix<W>, b: &PVector<W>, cfg: &IrConfig) -> Result<IrResult<R>>
where
    R: Promote<W> + Promote<F>,
{
    cfg.validate()?;
    check_types::<F, W, R>(cfg)?;
    check_system(a, b)?;
    match factor_working::<F, W>(a) {
        Ok(f) => refine_with_factors(a, b, &f, cfg),
        Err(e @ (Error::ZeroPivot { .. } | Error::NonFinite { .. })) => {
            let r0 = norm_inf(b)?.to_f64();
            let mut history = IrHistory::new(r0);
            history.reason = Termination::SolveFailure;
            history.failure = Some(e);
            Ok(IrResult {
                x: PVector::zeros(a.rows()),
                history,
                iterations: 0,
            })
        }
        Err(e) => Err(e),
    }
}

/// [`refine`] result with the iterate's precision erased.
#[derive(Debug, Clone, PartialEq)]
pub struct IrOutcome {
    pub x: AnyVector,
    pub history: IrHistory,
    pub iterations: usize,
}

/// Run-time dispatched [`refine`]: `a` and `b` must be stored at `cfg.tw`.
pub fn ir_solve(a: &AnyMatrix, b: &AnyVector, cfg: &IrConfig) -> Result<IrOutcome> {
    cfg.validate()?;
    if a.tag() != cfg.tw || b.tag() != cfg.tw {
        return Err(Error::InvalidConfig(format!(
            "system stored at {}/{} but tw={}",
            a.tag(),
            b.tag(),
            cfg.tw
        )));
    }
    crate::dispatch_lattice!(cfg.tf, cfg.tw, cfg.tr, |F, W, R| {
        let a = W::matrix_ref(a).expect("tag checked");
        let b = W::vector_ref(b).expect("tag checked");
        refine::<F, W, R>(a, b, cfg).map(|res| IrOutcome {
            x: R::into_any_vector(res.x),
            history: res.history,
            iterations: res.iterations,
        })
    })
    .unwrap_or_else(|| Err(Error::InvalidConfig("precision triple off the lattice".into())))
}

/// Iteration matrices of the on-the-fly iteration,
/// `M = I - (LU)^{-1} A` and `M_r = I - A (LU)^{-1}`, with every factor and
/// matrix entry promoted to `R`.
///
/// Dense `O(N^3)` construction by `N` solves; meant for small systems.
pub fn iteration_matrices<F: Real, W: Real, R>(a: &PMatrix<W>, f: &LuFactors<F>) -> Result<(PMatrix<R>, PMatrix<R>)>
where
    R: Promote<W> + Promote<F>,
{
    if !a.is_square() || a.rows() != f.dim() {
        return Err(Error::DimensionMismatch("matrix and factors disagree".into()));
    }
    let n = a.rows();
    let a_r = cast_matrix::<W, R>(a).0;
    let mut m = PMatrix::<R>::zeros(n, n);
    let mut m_r = PMatrix::<R>::zeros(n, n);
    for j in 0..n {
        let c = solve_otf(f, &a_r.column(j))?;
        let mut e = PVector::<R>::zeros(n);
        e.as_mut_slice()[j] = R::ONE;
        let z = solve_otf(f, &e)?;
        let az = matvec_promoted(a, &z)?;
        for i in 0..n {
            let delta = if i == j { R::ONE } else { R::ZERO };
            m.set(i, j, delta.sub(c.as_slice()[i]));
            m_r.set(i, j, delta.sub(az.as_slice()[i]));
        }
    }
    Ok((m, m_r))
}
