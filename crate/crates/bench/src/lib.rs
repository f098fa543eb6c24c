//! Benchmark harness for the refinement solvers: timed runs, report tables,
//! and the self-check suite behind `mpir check`.

pub mod bench;
pub mod checks;
pub mod record;
pub mod table;
pub mod timing;

pub use bench::run_benchmark;
pub use record::RunRecord;
pub use table::{emit_table, Format};
