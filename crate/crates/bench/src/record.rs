use mpir_core::ir::{IrConfig, Policy, Strategy, Termination};
use mpir_core::problems::RhsKind;
use mpir_core::Precision;
use serde::{Deserialize, Serialize};

/// One benchmark cell: a dimension and a solver configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub n: usize,
    pub tf: Precision,
    pub tw: Precision,
    pub tr: Precision,
    pub strategy: Strategy,
    pub policy: Policy,
    pub alpha: f64,
    pub rhs: RhsKind,
    /// Matrix Market source, if the operator was read from a file.
    pub matrix: Option<String>,
    /// Median seconds for the copy to `tf` plus the factorization.
    pub lu_seconds: f64,
    /// Median seconds for one triangular solve of the configured strategy.
    pub solve_seconds: f64,
    /// Median seconds for the refinement loop, factorization excluded.
    pub ir_loop_seconds: f64,
    pub iterations: usize,
    pub reason: Termination,
    /// `None` when the residual was not finite.
    pub final_residual: Option<f64>,
    pub timestamp: String,
    pub repetitions: usize,
    /// False when cells ran concurrently and timings interfere.
    pub comparable: bool,
}

impl RunRecord {
    pub fn config(&self) -> IrConfig {
        IrConfig {
            alpha: self.alpha,
            ..IrConfig::new(self.tf, self.tw, self.tr)
                .with_strategy(self.strategy)
                .with_policy(self.policy)
        }
    }
}
