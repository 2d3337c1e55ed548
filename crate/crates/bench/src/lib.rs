//! Synthetic experiments for the OSNST solver: random joint-sparse instances,
//! sparsity sweeps and their reports.

pub mod generate;
pub mod report;
pub mod sweep;

pub use generate::{gen_problem, trial_seed};
pub use report::{emit_report, parse_csv, ReportError};
pub use sweep::{run_sweep, ExperimentReport, ExperimentSpec, SolverKind, SparsityRange, SweepError, SweepOptions};
