//! Experiment driver for the nonvariational finite element method:
//! convergence studies, conditioning sweeps, the divergence-form
//! comparison, quasilinear fixed-point tables, and single-solve dumps.
//! Runs are configured from flat key=value files with command-line
//! overrides and write deterministic CSV/plot-data outputs plus a
//! manifest; gate failures surface in the process exit code.

pub mod config;
pub mod output;
pub mod runs;

pub use config::{Command, RawOptions, RunConfig, RunMode};
pub use output::{Gate, RunReport};
pub use runs::{
    run_compare, run_condition, run_convergence, run_quasilinear, run_solve, CompareSummary,
    ConditionRow, ConvergenceRow, QuasiRow,
};
