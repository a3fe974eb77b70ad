//! Experiment harness: declarative specs, sweeps, single chains, the
//! validation suite, and result persistence.

pub mod chain_run;
pub mod config;
pub mod results;
pub mod sweep;
pub mod validate;

pub use chain_run::{run_chain_experiment, write_chain_run, ChainRunResult, ChainRunSummary};
pub use config::{ExperimentKind, ExperimentSpec, Overrides};
pub use results::{read_results, write_results, Manifest, RowStatus, SweepResult, SweepRow, SweepSummary};
pub use sweep::{run_denoiser_sweep, run_forward_sweep, run_sweep, SeedPlan};
pub use validate::{run_validation_suite, ValidationOptions, ValidationReport};
