//! The self-check suite: each criterion runs against the library and reports
//! pass, fail, warn (advisory checks only) or skip.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use mpir_core::factor::{
    lu_factor, promote_factors, solve_inplace, solve_inplace_counted, solve_otf, solve_otf_counted, LuFactors,
};
use mpir_core::ir::{error_bound, factor_working, refine, IrConfig, IrResult, Strategy, Termination};
use mpir_core::mparray::{cast_matrix, cast_vector, norm_inf, PMatrix, PVector};
use mpir_core::problems::{
    build_operator, cond_inf_exact, dominant_eigenvalue, greens_matrix, make_rhs, relative_error, ProblemSpec, RhsKind,
};
use mpir_core::{f16, Precision, Promote, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::timing::time_median;

/// Reference condition number of the benchmark operator, quoted independent of N.
pub const REFERENCE_KAPPA: f64 = 18_253.0;
/// Dominant eigenvalue of the continuous Green's operator, `1/pi^2`.
pub const REFERENCE_EIGENVALUE: f64 = 0.1013212;

const OTF_COUNTS: [(usize, usize); 4] = [(200, 3), (400, 4), (800, 5), (1600, 4)];
const IP_COUNTS: [(usize, usize); 4] = [(200, 3), (400, 5), (800, 5), (1600, 4)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Level {
    /// Dimensions up to 400.
    Fast,
    /// Dimensions up to 1600.
    Full,
}

impl Level {
    fn max_n(self) -> usize {
        match self {
            Level::Fast => 400,
            Level::Full => 1600,
        }
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "fast" => Ok(Level::Fast),
            "full" => Ok(Level::Full),
            other => Err(format!("unknown check level '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Advisory check missed; never affects the exit code.
    Warn,
    Skip,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Warn => "WARN",
            Status::Skip => "SKIP",
        })
    }
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:>2} {} [{:.2} s]: {}",
            self.status, self.id, self.name, self.seconds, self.detail
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    pub level: Level,
    pub seed: u64,
    /// Test hook: scales the condition-number oracle down by 10^6.
    pub corrupt_kappa: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            level: Level::Fast,
            seed: 0x5eed,
            corrupt_kappa: false,
        }
    }
}

type Verdict = (Status, String);

struct Ctx {
    opts: CheckOptions,
    operators: HashMap<usize, PMatrix<f64>>,
    runs: HashMap<(usize, Strategy), IrResult<f64>>,
}

impl Ctx {
    fn sizes(&self) -> Vec<usize> {
        OTF_COUNTS
            .iter()
            .map(|&(n, _)| n)
            .filter(|&n| n <= self.opts.level.max_n())
            .collect()
    }

    fn operator(&mut self, n: usize) -> &PMatrix<f64> {
        self.operators
            .entry(n)
            .or_insert_with(|| build_operator(&ProblemSpec::greens(n)).expect("benchmark operator"))
    }

    fn kappa(&mut self, n: usize) -> f64 {
        let k = cond_inf_exact(self.operator(n)).expect("nonsingular benchmark operator");
        if self.opts.corrupt_kappa {
            k * 1e-6
        } else {
            k
        }
    }

    /// Benchmark solve with ones on the right, at single/double/double.
    fn run(&mut self, n: usize, strategy: Strategy) -> &IrResult<f64> {
        if !self.runs.contains_key(&(n, strategy)) {
            let res = benchmark_solve(self.operator(n), strategy);
            self.runs.insert((n, strategy), res);
        }
        &self.runs[&(n, strategy)]
    }
}

fn benchmark_config(strategy: Strategy) -> IrConfig {
    IrConfig::new(Precision::Single, Precision::Double, Precision::Double).with_strategy(strategy)
}

fn benchmark_solve(a: &PMatrix<f64>, strategy: Strategy) -> IrResult<f64> {
    let (b, _) = make_rhs(a, RhsKind::Ones);
    refine::<f32, f64, f64>(a, &b, &benchmark_config(strategy)).expect("valid benchmark configuration")
}

fn verdict(ok: bool, detail: String) -> Verdict {
    (if ok { Status::Pass } else { Status::Fail }, detail)
}

type Check = (u8, &'static str, fn(&mut Ctx) -> Verdict);

const CHECKS: [Check; 11] = [
    (1, "OTF iteration counts", otf_counts),
    (2, "IP iteration counts", ip_counts),
    (3, "condition number of the benchmark operator", condition_number),
    (
        4,
        "three-precision run equals promoted two-precision run",
        promoted_equivalence,
    ),
    (5, "OTF solve equals promote-then-solve", otf_promotion),
    (6, "IP solve commutes with power-of-two scaling", ip_scaling),
    (
        7,
        "forward error within residual-times-condition bound",
        error_bound_check,
    ),
    (8, "dominant eigenvalue of the Green's operator", eigenvalue),
    (9, "interprecision transfers per solve", transfer_counts),
    (10, "IP solve faster than OTF solve (advisory)", timing_direction),
    (11, "OTF runs are deterministic", determinism),
];

/// Runs every check in order, handing each outcome to `report` as it completes.
pub fn run_checks(opts: CheckOptions, mut report: impl FnMut(&CheckOutcome)) -> Vec<CheckOutcome> {
    let mut ctx = Ctx {
        opts,
        operators: HashMap::new(),
        runs: HashMap::new(),
    };
    CHECKS
        .iter()
        .map(|&(id, name, check)| {
            let start = Instant::now();
            let (status, detail) = check(&mut ctx);
            let outcome = CheckOutcome {
                id,
                name,
                status,
                detail,
                seconds: start.elapsed().as_secs_f64(),
            };
            report(&outcome);
            outcome
        })
        .collect()
}

pub fn all_passed(outcomes: &[CheckOutcome]) -> bool {
    outcomes.iter().all(|o| o.status != Status::Fail)
}

fn counts_check(ctx: &mut Ctx, strategy: Strategy, table: &[(usize, usize)]) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    let max_n = ctx.opts.level.max_n();
    for &(n, want) in table.iter().filter(|&&(n, _)| n <= max_n) {
        let got = ctx.run(n, strategy);
        let (its, reason) = (got.iterations, got.history.reason);
        ok &= its.abs_diff(want) <= 1;
        parts.push(format!("N={n}: {its} ({reason:?}), expected {want}±1"));
    }
    if strategy == Strategy::Ip {
        for n in ctx.sizes() {
            let otf = ctx.run(n, Strategy::Otf).iterations;
            let ip = ctx.run(n, Strategy::Ip).iterations;
            if ip > otf + 1 {
                ok = false;
                parts.push(format!("N={n}: IP {ip} exceeds OTF {otf} by more than one"));
            }
        }
    }
    verdict(ok, parts.join("; "))
}

fn otf_counts(ctx: &mut Ctx) -> Verdict {
    counts_check(ctx, Strategy::Otf, &OTF_COUNTS)
}

fn ip_counts(ctx: &mut Ctx) -> Verdict {
    counts_check(ctx, Strategy::Ip, &IP_COUNTS)
}

fn condition_number(ctx: &mut Ctx) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in ctx.sizes().into_iter().filter(|&n| n <= 800) {
        let k = ctx.kappa(n);
        let rel = (k - REFERENCE_KAPPA).abs() / REFERENCE_KAPPA;
        ok &= rel <= 0.05;
        parts.push(format!("N={n}: {k:.0} ({:+.1}%)", 100.0 * (k / REFERENCE_KAPPA - 1.0)));
    }
    verdict(
        ok,
        format!("{}; expected {REFERENCE_KAPPA} within 5%", parts.join(", ")),
    )
}

fn equivalence_case<F: Real, W: Real>(n: usize) -> Result<(), String>
where
    f64: Promote<W> + Promote<F>,
{
    let a64 = greens_operator(n);
    let a = cast_matrix::<f64, W>(&a64).0;
    let (b, _) = make_rhs(&a, RhsKind::Ones);
    let three = refine::<F, W, f64>(&a, &b, &IrConfig::new(F::PRECISION, W::PRECISION, Precision::Double))
        .map_err(|e| e.to_string())?;
    let (a_up, b_up) = (cast_matrix::<W, f64>(&a).0, cast_vector::<W, f64>(&b).0);
    let two = refine::<F, f64, f64>(
        &a_up,
        &b_up,
        &IrConfig::new(F::PRECISION, Precision::Double, Precision::Double),
    )
    .map_err(|e| e.to_string())?;
    let label = format!("N={n} tf={}", F::PRECISION);
    if !three.x.bitwise_eq(&two.x) {
        return Err(format!("{label}: solutions differ"));
    }
    if three.history.residual_norms != two.history.residual_norms || three.iterations != two.iterations {
        return Err(format!("{label}: residual histories differ"));
    }
    Ok(())
}

fn greens_operator(n: usize) -> PMatrix<f64> {
    build_operator(&ProblemSpec::greens(n)).expect("benchmark operator")
}

fn promoted_equivalence(_: &mut Ctx) -> Verdict {
    let mut failures = Vec::new();
    for n in [50, 200] {
        failures.extend(equivalence_case::<f32, f32>(n).err());
        failures.extend(equivalence_case::<f16, f32>(n).err());
    }
    if failures.is_empty() {
        verdict(
            true,
            "N in {50, 200}, tf in {half, single}, tw=single: bitwise equal".into(),
        )
    } else {
        verdict(false, failures.join("; "))
    }
}

/// Random well-conditioned matrix rounded to `T`, factored.
fn random_factors<T: Real>(rng: &mut ChaCha8Rng, n: usize) -> LuFactors<T>
where
    f64: Promote<T>,
{
    loop {
        let a = PMatrix::from_fn(n, n, |i, j| {
            let v: f64 = rng.gen_range(-1.0..1.0);
            if i == j {
                v + if rng.gen_bool(0.5) { 2.0 } else { -2.0 }
            } else {
                v / n as f64
            }
        });
        if let Ok(f) = lu_factor(cast_matrix::<f64, T>(&a).0) {
            return f;
        }
    }
}

/// Entries with magnitude in `[1/16, 1]` and random sign, rounded to `T`.
fn random_vector<T: Real>(rng: &mut ChaCha8Rng, n: usize) -> PVector<T>
where
    f64: Promote<T>,
{
    let v: Vec<f64> = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.0625..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    PVector::from_f64(&v).0
}

/// Permuted forward and back substitution, written independently of the
/// library kernels.
fn reference_solve<T: Real>(f: &LuFactors<T>, r: &PVector<T>) -> Vec<T> {
    let lu = f.packed();
    let n = f.dim();
    let mut y = r.as_slice().to_vec();
    for (k, &p) in f.pivots().iter().enumerate() {
        y.swap(k, p);
    }
    for i in 0..n {
        for j in 0..i {
            y[i] = y[i].sub(lu.get(i, j).mul(y[j]));
        }
    }
    for i in (0..n).rev() {
        for j in i + 1..n {
            y[i] = y[i].sub(lu.get(i, j).mul(y[j]));
        }
        y[i] = y[i].div(lu.get(i, i));
    }
    y
}

fn otf_case<F: Real, R: Promote<F>>(rng: &mut ChaCha8Rng) -> bool
where
    f64: Promote<F> + Promote<R>,
{
    let n = rng.gen_range(1..=64);
    let f = random_factors::<F>(rng, n);
    let r = random_vector::<R>(rng, n);
    let got = solve_otf(&f, &r).expect("matching dimensions");
    let want = PVector::from_vec(reference_solve(&promote_factors::<F, R>(&f), &r));
    got.bitwise_eq(&want)
}

const PROPERTY_CASES: usize = 200;

macro_rules! each_pair {
    ($case:ident, $rng:expr) => {
        [
            ("half/half", $case::<f16, f16> as fn(&mut ChaCha8Rng) -> bool),
            ("half/single", $case::<f16, f32>),
            ("half/double", $case::<f16, f64>),
            ("single/single", $case::<f32, f32>),
            ("single/double", $case::<f32, f64>),
            ("double/double", $case::<f64, f64>),
        ]
        .into_iter()
        .filter_map(|(label, case)| {
            let bad = (0..PROPERTY_CASES).filter(|_| !case($rng)).count();
            (bad > 0).then(|| format!("{label}: {bad}/{PROPERTY_CASES} mismatches"))
        })
        .collect::<Vec<_>>()
    };
}

fn otf_promotion(ctx: &mut Ctx) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.opts.seed);
    let failures = each_pair!(otf_case, &mut rng);
    if failures.is_empty() {
        verdict(
            true,
            format!(
                "{PROPERTY_CASES} cases for each of 6 precision pairs, seed {}",
                ctx.opts.seed
            ),
        )
    } else {
        verdict(false, failures.join("; "))
    }
}

/// Power-of-two scaling is exact only away from overflow and gradual
/// underflow, so instances whose corrections would leave the normal range of
/// `R` after scaling are redrawn.
fn ip_case<F: Real, R: Promote<F>>(rng: &mut ChaCha8Rng) -> bool
where
    f64: Promote<F> + Promote<R>,
{
    let p = R::PRECISION;
    loop {
        let n = rng.gen_range(1..=64);
        let f = random_factors::<F>(rng, n);
        let r = random_vector::<R>(rng, n);
        let k: i32 = rng.gen_range(-8..=8);
        let factor = 2f64.powi(k);
        let base = solve_inplace(&f, &r).expect("matching dimensions").correction;
        let normal = base.as_slice().iter().all(|c| {
            let c = c.abs().to_f64();
            c == 0.0 || (c.min(c * factor) >= p.min_positive_normal() && c.max(c * factor) <= p.max_finite())
        });
        if !normal {
            continue;
        }
        let s = R::round_from_f64(factor);
        let scaled = solve_inplace(&f, &r.scale(s)).expect("matching dimensions").correction;
        return scaled.bitwise_eq(&base.scale(s));
    }
}

fn ip_scaling(ctx: &mut Ctx) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.opts.seed ^ 0x1b);
    let failures = each_pair!(ip_case, &mut rng);
    if failures.is_empty() {
        verdict(
            true,
            format!(
                "{PROPERTY_CASES} cases for each of 6 precision pairs, k in [-8, 8], seed {}",
                ctx.opts.seed
            ),
        )
    } else {
        verdict(false, failures.join("; "))
    }
}

/// The stated scope is converged runs; every returned iterate is checked, and
/// the converged count is reported so an empty scope is visible.
fn error_bound_check(ctx: &mut Ctx) -> Verdict {
    let mut ok = true;
    let mut converged = 0;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for n in ctx.sizes().into_iter().filter(|&n| n <= 800) {
        let kappa = ctx.kappa(n);
        let a = ctx.operator(n).clone();
        let (b, _) = make_rhs(&a, RhsKind::Manufactured);
        let oracle = {
            let f = lu_factor(a.clone()).expect("nonsingular benchmark operator");
            PVector::from_vec(reference_solve(&f, &b))
        };
        let norm_b = norm_inf(&b).expect("nonempty");
        for strategy in [Strategy::Otf, Strategy::Ip] {
            let res = refine::<f32, f64, f64>(&a, &b, &benchmark_config(strategy)).expect("valid configuration");
            if res.history.reason == Termination::SolveFailure {
                ok = false;
                continue;
            }
            let tau = res.history.final_residual() / norm_b;
            let err = relative_error(&res.x, &oracle).expect("matching lengths");
            let bound = error_bound(tau, kappa);
            checked += 1;
            converged += usize::from(res.history.reason == Termination::Converged);
            worst = worst.max(err / bound);
            ok &= err <= bound;
        }
    }
    verdict(
        ok,
        format!("{checked} runs checked ({converged} converged); largest error/bound ratio {worst:.2e}"),
    )
}

fn eigenvalue(_: &mut Ctx) -> Verdict {
    let n = 400;
    let g = greens_matrix(n).expect("grid of 400 nodes");
    match dominant_eigenvalue(&g, 1e-13, 100_000) {
        Ok(lambda) => {
            let tol = 10.0 / (n * n) as f64;
            let off_exact = (lambda - 1.0 / std::f64::consts::PI.powi(2)).abs();
            let off_ref = (lambda - REFERENCE_EIGENVALUE).abs();
            verdict(
                off_exact <= tol && off_ref <= tol,
                format!("lambda = {lambda:.8}, |lambda - 1/pi^2| = {off_exact:.2e}, tolerance {tol:.2e}"),
            )
        }
        Err(e) => verdict(false, e.to_string()),
    }
}

fn transfer_counts(_: &mut Ctx) -> Verdict {
    let n = 128;
    let a = greens_operator(n);
    let f = factor_working::<f32, f64>(&a).expect("factorable benchmark operator");
    let r = PVector::<f64>::filled(n, 1.0);
    let (_, otf) = solve_otf_counted(&f, &r).expect("matching dimensions");
    let (_, ip) = solve_inplace_counted(&f, &r).expect("matching dimensions");
    let ok = otf.promotions == n * n + n && otf.casts == 0 && ip.casts == 2 * n && ip.promotions == 0;
    verdict(
        ok,
        format!(
            "N={n}: OTF {} promotions (want {}), IP {} casts (want {})",
            otf.promotions,
            n * n + n,
            ip.casts,
            2 * n
        ),
    )
}

fn timing_direction(ctx: &mut Ctx) -> Verdict {
    let sizes: Vec<usize> = ctx.sizes().into_iter().filter(|&n| n >= 800).collect();
    if sizes.is_empty() {
        return (Status::Skip, "needs N >= 800 (full level)".into());
    }
    let mut fast_enough = true;
    let mut parts = Vec::new();
    for n in sizes {
        let a = ctx.operator(n);
        let f = factor_working::<f32, f64>(a).expect("factorable benchmark operator");
        let r = PVector::<f64>::filled(n, 1.0);
        let (otf, _) = time_median(7, || solve_otf(&f, &r));
        let (ip, _) = time_median(7, || solve_inplace(&f, &r));
        fast_enough &= ip <= 0.7 * otf;
        parts.push(format!("N={n}: IP/OTF = {:.2}", ip / otf));
    }
    let status = if fast_enough { Status::Pass } else { Status::Warn };
    (status, format!("{}; target <= 0.70", parts.join(", ")))
}

fn determinism(ctx: &mut Ctx) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in ctx.sizes() {
        let first = ctx.run(n, Strategy::Otf).clone();
        let a = ctx.operator(n).clone();
        let same = (0..2).all(|_| {
            let again = benchmark_solve(&a, Strategy::Otf);
            again.iterations == first.iterations && again.x.bitwise_eq(&first.x)
        });
        ok &= same;
        parts.push(format!("N={n}: {}", if same { "identical" } else { "differs" }));
    }
    verdict(ok, format!("3 runs each; {}", parts.join(", ")))
}
