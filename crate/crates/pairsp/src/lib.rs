//! Dataset IO, simulation harness and command-line support for
//! [`pairsp_core`].

pub mod config;
pub mod harness;
pub mod io;
pub mod region;

pub use config::{ExperimentConfig, MatrixMode, ModelKind, StatColumn};
pub use harness::{
    coverage_report, emit_qq_data, emit_size_and_relerr, run_coverage, simulate, CoverageReport, HarnessError,
    Outcome, SimulationRun,
};
