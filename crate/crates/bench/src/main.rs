use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mpir_bench::checks::{all_passed, run_checks, CheckOptions, Level};
use mpir_bench::{emit_table, run_benchmark, Format, RunRecord};
use mpir_core::ir::{IrConfig, Policy, Strategy, Termination};
use mpir_core::problems::{ProblemSpec, RhsKind, Source};
use mpir_core::{Error, Precision};

#[derive(Parser)]
#[command(name = "mpir", version, about = "Mixed-precision iterative refinement benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one system and report the refinement outcome.
    Solve {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, value_enum, default_value_t = StrategyArg::Otf)]
        strategy: StrategyArg,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        /// `json` prints the run record; other formats print key=value lines.
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time OTF and IP refinement across dimensions.
    Table {
        #[arg(long, value_delimiter = ',', default_values_t = [200, 400, 800, 1600])]
        sizes: Vec<usize>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 7)]
        reps: usize,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run cells concurrently; timings are then marked non-comparable.
        #[arg(long)]
        parallel: bool,
    },
    /// Run the self-check suite.
    Check {
        #[arg(long, value_enum, env = "MPIR_CHECK_LEVEL", default_value_t = Level::Fast, ignore_case = true)]
        level: Level,
        /// Seed for the randomized property checks.
        #[arg(long, default_value_t = CheckOptions::default().seed)]
        seed: u64,
        #[arg(long, hide = true)]
        corrupt_kappa: bool,
    },
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value_t = PrecisionArg::Single)]
    tf: PrecisionArg,
    #[arg(long, value_enum, default_value_t = PrecisionArg::Double)]
    tw: PrecisionArg,
    #[arg(long, value_enum, default_value_t = PrecisionArg::Double)]
    tr: PrecisionArg,
    #[arg(long, value_enum, default_value_t = PolicyArg::Residual)]
    policy: PolicyArg,
    #[arg(long, default_value_t = 0.9)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    c_success: f64,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, value_enum, default_value_t = RhsArg::Ones)]
    rhs: RhsArg,
    /// Matrix Market file to use instead of the Green's operator.
    #[arg(long)]
    matrix: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Half,
    Single,
    Double,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Otf,
    Ip,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Residual,
    Rate,
}

#[derive(Clone, Copy, ValueEnum)]
enum RhsArg {
    Ones,
    Manufactured,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Half => Precision::Half,
            PrecisionArg::Single => Precision::Single,
            PrecisionArg::Double => Precision::Double,
        }
    }
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Otf => Strategy::Otf,
            StrategyArg::Ip => Strategy::Ip,
        }
    }
}

impl SolverArgs {
    fn config(&self, strategy: Strategy) -> IrConfig {
        IrConfig {
            strategy,
            policy: match self.policy {
                PolicyArg::Residual => Policy::ResidualTriple,
                PolicyArg::Rate => Policy::RateEstimate,
            },
            alpha: self.alpha,
            c_success: self.c_success,
            max_iters: self.max_iters,
            ..IrConfig::new(self.tf.into(), self.tw.into(), self.tr.into())
        }
    }

    fn problem(&self, n: usize) -> ProblemSpec {
        let rhs = match self.rhs {
            RhsArg::Ones => RhsKind::Ones,
            RhsArg::Manufactured => RhsKind::Manufactured,
        };
        let spec = ProblemSpec::greens(n).with_rhs(rhs);
        match &self.matrix {
            Some(path) => ProblemSpec {
                source: Source::File(path.clone()),
                ..spec
            },
            None => spec,
        }
    }
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(String),
    Solver(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::InvalidConfig(msg)) => Failure::Usage(msg.clone()),
            _ => Failure::Solver(e),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn write_output(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(command: Command) -> Result<bool, Failure> {
    match command {
        Command::Solve {
            n,
            strategy,
            solver,
            reps,
            format,
            out,
        } => {
            let cfg = solver.config(strategy.into());
            let rec = run_benchmark(&solver.problem(n), &cfg, reps).map_err(anyhow::Error::from)?;
            let text = if format == Format::Json {
                serde_json::to_string_pretty(&rec).map_err(anyhow::Error::from)? + "\n"
            } else {
                summary(&rec)
            };
            write_output(&text, out.as_ref())?;
            Ok(rec.reason != Termination::SolveFailure)
        }
        Command::Table {
            sizes,
            solver,
            reps,
            format,
            out,
            parallel,
        } => {
            let records = table_records(&sizes, &solver, reps, parallel)?;
            write_output(&emit_table(&records, format)?, out.as_ref())?;
            Ok(records.iter().all(|r| r.reason != Termination::SolveFailure))
        }
        Command::Check {
            level,
            seed,
            corrupt_kappa,
        } => {
            let opts = CheckOptions {
                level,
                seed,
                corrupt_kappa,
            };
            let outcomes = run_checks(opts, |o| println!("{o}"));
            let total: f64 = outcomes.iter().map(|o| o.seconds).sum();
            let passed = all_passed(&outcomes);
            println!(
                "{} in {total:.1} s",
                if passed { "all checks passed" } else { "checks failed" }
            );
            Ok(passed)
        }
    }
}

fn summary(rec: &RunRecord) -> String {
    let residual = rec.final_residual.map_or("nan".to_string(), |r| format!("{r:e}"));
    format!(
        "n={}\niterations={}\nreason={:?}\nfinal_residual={residual}\nlu_seconds={:e}\nsolve_seconds={:e}\nir_loop_seconds={:e}\n",
        rec.n, rec.iterations, rec.reason, rec.lu_seconds, rec.solve_seconds, rec.ir_loop_seconds
    )
}

fn table_records(sizes: &[usize], solver: &SolverArgs, reps: usize, parallel: bool) -> Result<Vec<RunRecord>> {
    let cells: Vec<(ProblemSpec, IrConfig)> = sizes
        .iter()
        .flat_map(|&n| [Strategy::Otf, Strategy::Ip].map(|s| (solver.problem(n), solver.config(s))))
        .collect();
    if !parallel {
        return cells
            .iter()
            .map(|(spec, cfg)| Ok(run_benchmark(spec, cfg, reps)?))
            .collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = cells
            .iter()
            .map(|(spec, cfg)| scope.spawn(move || run_benchmark(spec, cfg, reps)))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                let mut rec = h.join().expect("benchmark thread panicked")?;
                rec.comparable = false;
                Ok(rec)
            })
            .collect()
    })
}
